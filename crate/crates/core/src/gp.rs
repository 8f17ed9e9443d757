//! Small Gaussian-process regressor used as the search surrogate: zero-mean,
//! unit signal variance, anisotropic squared-exponential covariance on
//! 2-D inputs.

const NOISE: f64 = 1e-6;
const JITTER: f64 = 1e-8;

/// Length-scales tried when fitting by marginal likelihood.
pub(crate) const LENGTH_SCALE_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

#[derive(Debug, Clone)]
pub(crate) struct Gp {
    xs: Vec<[f64; 2]>,
    length_scales: [f64; 2],
    chol: Vec<f64>,
    alpha: Vec<f64>,
    log_likelihood: f64,
}

fn covariance(a: &[f64; 2], b: &[f64; 2], ls: &[f64; 2]) -> f64 {
    let d0 = (a[0] - b[0]) / ls[0];
    let d1 = (a[1] - b[1]) / ls[1];
    (-0.5 * (d0 * d0 + d1 * d1)).exp()
}

/// In-place lower Cholesky factor of a row-major `n x n` matrix.
fn cholesky(mut k: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut diag = k[j * n + j];
        for p in 0..j {
            diag -= k[j * n + p] * k[j * n + p];
        }
        if !(diag > 0.0) {
            return None;
        }
        let diag = diag.sqrt();
        k[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = k[i * n + j];
            for p in 0..j {
                v -= k[i * n + p] * k[j * n + p];
            }
            k[i * n + j] = v / diag;
        }
        for i in 0..j {
            k[i * n + j] = 0.0;
        }
    }
    Some(k)
}

/// Solves `L z = b` for lower-triangular `L`.
fn forward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for p in 0..i {
            v -= l[i * n + p] * b[p];
        }
        b[i] = v / l[i * n + i];
    }
}

/// Solves `L^T z = b`.
fn backward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut v = b[i];
        for p in i + 1..n {
            v -= l[p * n + i] * b[p];
        }
        b[i] = v / l[i * n + i];
    }
}

impl Gp {
    /// Conditions on observations; extra jitter is added until the
    /// covariance factorizes.
    pub(crate) fn fit(xs: &[[f64; 2]], ys: &[f64], length_scales: [f64; 2]) -> Gp {
        let n = xs.len();
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = covariance(&xs[i], &xs[j], &length_scales);
                base[i * n + j] = c;
                base[j * n + i] = c;
            }
        }
        let mut extra = NOISE;
        let chol = loop {
            let mut k = base.clone();
            for i in 0..n {
                k[i * n + i] += extra;
            }
            if let Some(l) = cholesky(k, n) {
                break l;
            }
            extra += if extra <= NOISE { JITTER } else { extra };
        };
        let mut alpha = ys.to_vec();
        forward(&chol, n, &mut alpha);
        let fit_term: f64 = alpha.iter().map(|v| v * v).sum();
        backward(&chol, n, &mut alpha);
        let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
        let log_likelihood =
            -0.5 * fit_term - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Gp {
            xs: xs.to_vec(),
            length_scales,
            chol,
            alpha,
            log_likelihood,
        }
    }

    /// Fits every grid combination of length-scales and keeps the most likely.
    pub(crate) fn fit_best(xs: &[[f64; 2]], ys: &[f64]) -> Gp {
        let mut best: Option<Gp> = None;
        for &l0 in &LENGTH_SCALE_GRID {
            for &l1 in &LENGTH_SCALE_GRID {
                let gp = Gp::fit(xs, ys, [l0, l1]);
                if best
                    .as_ref()
                    .is_none_or(|b| gp.log_likelihood > b.log_likelihood)
                {
                    best = Some(gp);
                }
            }
        }
        best.expect("length-scale grid is non-empty")
    }

    pub(crate) fn length_scales(&self) -> [f64; 2] {
        self.length_scales
    }

    /// Posterior mean and variance at `x`.
    pub(crate) fn predict(&self, x: &[f64; 2], scratch: &mut Vec<f64>) -> (f64, f64) {
        let n = self.xs.len();
        scratch.clear();
        scratch.extend(
            self.xs
                .iter()
                .map(|xi| covariance(xi, x, &self.length_scales)),
        );
        let mean = scratch.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        forward(&self.chol, n, scratch);
        let explained: f64 = scratch.iter().map(|v| v * v).sum();
        (mean, (1.0 - explained).max(0.0))
    }
}

/// Expected improvement below `best` for a minimization problem.
pub(crate) fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.sqrt();
    let gain = best - mean;
    if sd < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    let cdf = 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    gain * cdf + sd * pdf
}
