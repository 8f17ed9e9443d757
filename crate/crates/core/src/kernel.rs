//! RBF kernel on DTW embeddings, the derived distance `d_K = 1 - K`, and the
//! per-pattern length-scale calibration against normalized exact DTW.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::counters::Counters;
use crate::dtw::{dtw_distance, BandConstraint};
use crate::embed::{feature_map, BasisSet, FeatureVector};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Length-scale used before calibration, and kept when calibration cannot
/// improve on it.
pub const DEFAULT_GAMMA: f64 = 1.0;
/// Log-spaced search interval for each length-scale.
pub const GAMMA_RANGE: (f64, f64) = (1e-3, 1e3);
/// Points in the coarse log grid.
pub const GAMMA_GRID_POINTS: usize = 60;

fn check_pair(u: &[f64], v: &[f64], gamma: f64) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "embeddings of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!(
            "gamma must be positive, got {}",
            gamma
        )));
    }
    Ok(())
}

fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn rbf_from_sq(sq: f64, gamma: f64) -> f64 {
    (-sq / (2.0 * gamma * gamma)).exp()
}

/// `exp(-||u - v||^2 / (2 gamma^2))`.
pub fn rbf(u: &FeatureVector, v: &FeatureVector, gamma: f64) -> Result<f64> {
    check_pair(u.as_slice(), v.as_slice(), gamma)?;
    Ok(rbf_from_sq(
        squared_distance(u.as_slice(), v.as_slice()),
        gamma,
    ))
}

/// `1 - rbf(u, v, gamma)`, in `[0, 1]`.
pub fn kernel_distance(u: &FeatureVector, v: &FeatureVector, gamma: f64) -> Result<f64> {
    kernel_distance_counted(u, v, gamma, None)
}

/// Floating-point operations charged per kernel distance: a subtract, multiply
/// and add per component plus the scaling, exponential and final subtraction.
pub fn kernel_distance_ops(r: usize) -> u64 {
    3 * r as u64 + 4
}

pub fn kernel_distance_counted(
    u: &FeatureVector,
    v: &FeatureVector,
    gamma: f64,
    counters: Option<&Counters>,
) -> Result<f64> {
    check_pair(u.as_slice(), v.as_slice(), gamma)?;
    if let Some(c) = counters {
        c.add_kernel_ops(kernel_distance_ops(u.len()));
    }
    let d = 1.0 - rbf_from_sq(squared_distance(u.as_slice(), v.as_slice()), gamma);
    Ok(d.clamp(0.0, 1.0))
}

/// Min-max rescaling of a DTW matrix into `[0, 1]`. A constant matrix maps to
/// all zeros. Returns the rescaled matrix with the original min and max.
pub fn normalize_dtw(m: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64, f64) {
    let (lo, hi) = m
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if m.is_empty() || m.iter().all(Vec::is_empty) {
        return (m.to_vec(), 0.0, 0.0);
    }
    let span = hi - lo;
    let out = m
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
                .collect()
        })
        .collect();
    (out, lo, hi)
}

/// Mean absolute gap between kernel distances and normalized DTW over the
/// strict upper triangle; pair `(i, j)`, `i < j`, uses `gammas[i]`.
pub fn calibration_objective(
    gammas: &[f64],
    embeddings: &[FeatureVector],
    dtw_norm: &[Vec<f64>],
) -> Result<f64> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::Parameter(
            "calibration needs at least two patterns".into(),
        ));
    }
    if gammas.len() != n || dtw_norm.len() != n || dtw_norm.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("calibration inputs disagree on n".into()));
    }
    let mut total = 0.0;
    for i in 0..n - 1 {
        for j in i + 1..n {
            let dk = kernel_distance(&embeddings[i], &embeddings[j], gammas[i])?;
            total += (dk - dtw_norm[i][j]).abs();
        }
    }
    Ok(2.0 * total / (n * (n - 1)) as f64)
}

/// One row of the objective: targets `(||φ_i - φ_j||^2, DTW_norm(i, j))`.
struct RowObjective {
    terms: Vec<(f64, f64)>,
}

impl RowObjective {
    fn eval(&self, gamma: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(sq, target)| ((1.0 - rbf_from_sq(sq, gamma)) - target).abs())
            .sum()
    }

    /// Length-scales where a single term vanishes.
    fn kinks(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().filter_map(|&(sq, t)| {
            if sq > 0.0 && t > 0.0 && t < 1.0 {
                Some((sq / (-2.0 * (1.0 - t).ln())).sqrt())
            } else {
                None
            }
        })
    }

    /// Log-grid scan, golden-section refinement of every grid-local minimum,
    /// and the exact zero-crossings of each term. Starts from the default and
    /// only moves on strict improvement.
    fn minimize(&self) -> f64 {
        let (lo, hi) = (GAMMA_RANGE.0.ln(), GAMMA_RANGE.1.ln());
        let mut best = (DEFAULT_GAMMA, self.eval(DEFAULT_GAMMA));
        let consider = |g: f64, best: &mut (f64, f64)| {
            let f = self.eval(g);
            if f < best.1 {
                *best = (g, f);
            }
        };
        let step = (hi - lo) / (GAMMA_GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GAMMA_GRID_POINTS)
            .map(|k| lo + step * k as f64)
            .collect();
        let values: Vec<f64> = grid.iter().map(|&t| self.eval(t.exp())).collect();
        for (k, &t) in grid.iter().enumerate() {
            consider(t.exp(), &mut best);
            let left = if k == 0 { f64::INFINITY } else { values[k - 1] };
            let right = values.get(k + 1).copied().unwrap_or(f64::INFINITY);
            if values[k] <= left && values[k] <= right {
                let a = grid[k.saturating_sub(1)];
                let b = grid[(k + 1).min(grid.len() - 1)];
                let t = golden_section(|t| self.eval(t.exp()), a, b);
                consider(t.exp(), &mut best);
            }
        }
        for g in self.kinks().collect::<Vec<_>>() {
            if g >= GAMMA_RANGE.0 && g <= GAMMA_RANGE.1 {
                consider(g, &mut best);
            }
        }
        best.0
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Chooses `gamma_i` for each pattern from precomputed embeddings and the
/// normalized DTW matrix. Rows are independent; the last gamma, which no pair
/// constrains, is the geometric mean of the others.
pub fn calibrate_from_parts(
    embeddings: &[FeatureVector],
    dtw_norm: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::Parameter(
            "calibration needs at least two patterns".into(),
        ));
    }
    if dtw_norm.len() != n || dtw_norm.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(
            "DTW matrix does not match pattern count".into(),
        ));
    }
    let r = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != r) {
        return Err(Error::Dimension("embeddings differ in length".into()));
    }
    let mut gammas: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let row = RowObjective {
                terms: (i + 1..n)
                    .map(|j| {
                        (
                            squared_distance(embeddings[i].as_slice(), embeddings[j].as_slice()),
                            dtw_norm[i][j],
                        )
                    })
                    .collect(),
            };
            row.minimize()
        })
        .collect();
    let log_mean = gammas.iter().map(|g| g.ln()).sum::<f64>() / gammas.len() as f64;
    gammas.push(log_mean.exp());
    Ok(gammas)
}

/// Pairwise exact DTW between patterns, computed in parallel.
pub fn pairwise_dtw(patterns: &[TimeSeries]) -> Result<Vec<Vec<f64>>> {
    let n = patterns.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(&patterns[i], &patterns[j], BandConstraint::None))
        .collect::<Result<Vec<_>>>()?;
    let mut m = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Per-pattern kernels fitted to a basis set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub basis: BasisSet,
    pub gammas: Vec<f64>,
    pub dtw_min: f64,
    pub dtw_max: f64,
    pub pattern_embeddings: Vec<FeatureVector>,
    /// Value of the calibration objective at `gammas`, when calibrated.
    pub objective: Option<f64>,
}

impl KernelModel {
    /// Model with embeddings but default length-scales.
    pub fn uncalibrated(patterns: &[TimeSeries], basis: BasisSet) -> Result<Self> {
        let pattern_embeddings = patterns
            .iter()
            .map(|p| feature_map(p, &basis))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gammas: vec![DEFAULT_GAMMA; patterns.len()],
            basis,
            dtw_min: 0.0,
            dtw_max: 0.0,
            pattern_embeddings,
            objective: None,
        })
    }

    pub fn is_calibrated(&self) -> bool {
        self.objective.is_some()
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Kernel distance from pattern `i` to an embedded series.
    pub fn distance(
        &self,
        i: usize,
        phi: &FeatureVector,
        counters: Option<&Counters>,
    ) -> Result<f64> {
        let (Some(g), Some(e)) = (self.gammas.get(i), self.pattern_embeddings.get(i)) else {
            return Err(Error::Bounds(format!(
                "pattern {} of {}",
                i + 1,
                self.len()
            )));
        };
        kernel_distance_counted(e, phi, *g, counters)
    }

    /// Text form. The basis set is stored separately; `basis_ref` is written
    /// as given and resolved relative to the model file on load.
    pub fn to_text(&self, basis_ref: &str) -> String {
        let mut out = String::new();
        writeln!(out, "kernel-model 1").unwrap();
        writeln!(out, "basis {}", basis_ref).unwrap();
        writeln!(out, "patterns {} {}", self.len(), self.basis.len()).unwrap();
        writeln!(out, "dtw_min {}", self.dtw_min).unwrap();
        writeln!(out, "dtw_max {}", self.dtw_max).unwrap();
        match self.objective {
            Some(o) => writeln!(out, "objective {}", o).unwrap(),
            None => writeln!(out, "objective none").unwrap(),
        }
        for (i, g) in self.gammas.iter().enumerate() {
            writeln!(out, "gamma {} {}", i + 1, g).unwrap();
        }
        for (i, e) in self.pattern_embeddings.iter().enumerate() {
            let row: Vec<String> = e.0.iter().map(|v| v.to_string()).collect();
            writeln!(out, "phi {} {}", i + 1, row.join(",")).unwrap();
        }
        out
    }

    /// Writes the model and its basis set (`basis_file` next to `path`).
    pub fn save(&self, path: impl AsRef<Path>, basis_file: &str) -> Result<()> {
        let path = path.as_ref();
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        self.basis.save(dir.join(basis_file))?;
        fs::write(path, self.to_text(basis_file))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_text(&text, |r| BasisSet::load(dir.join(r))).map_err(|e| e.in_file(path))
    }

    pub fn from_text(
        text: &str,
        load_basis: impl FnOnce(&str) -> Result<BasisSet>,
    ) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::EmptyInput(format!("model file ends before `{}`", key)))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected `{}`", key),
                });
            }
            Ok((ln, parts.map(str::to_string).collect()))
        };
        let num = |ln: usize, s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: ln,
                msg: format!("cannot parse {:?}", s),
            })
        };
        let (ln, v) = next("kernel-model")?;
        if v.first().map(String::as_str) != Some("1") {
            return Err(Error::Parse {
                line: ln,
                msg: "unsupported model version".into(),
            });
        }
        let (ln, v) = next("basis")?;
        let basis_ref = v.join(" ");
        if basis_ref.is_empty() {
            return Err(Error::Parse {
                line: ln,
                msg: "missing basis reference".into(),
            });
        }
        let (ln, v) = next("patterns")?;
        if v.len() != 2 {
            return Err(Error::Parse {
                line: ln,
                msg: "expected `patterns n R`".into(),
            });
        }
        let n = num(ln, &v[0])? as usize;
        let r = num(ln, &v[1])? as usize;
        let (ln, v) = next("dtw_min")?;
        let dtw_min = num(ln, v.first().map(String::as_str).unwrap_or(""))?;
        let (ln, v) = next("dtw_max")?;
        let dtw_max = num(ln, v.first().map(String::as_str).unwrap_or(""))?;
        let (ln, v) = next("objective")?;
        let objective = match v.first().map(String::as_str) {
            Some("none") => None,
            Some(s) => Some(num(ln, s)?),
            None => {
                return Err(Error::Parse {
                    line: ln,
                    msg: "missing objective".into(),
                })
            }
        };
        let mut gammas = Vec::with_capacity(n);
        for k in 1..=n {
            let (ln, v) = next("gamma")?;
            if v.len() != 2 || num(ln, &v[0])? as usize != k {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected `gamma {} value`", k),
                });
            }
            let g = num(ln, &v[1])?;
            if !(g > 0.0) {
                return Err(Error::Parse {
                    line: ln,
                    msg: "gamma must be positive".into(),
                });
            }
            gammas.push(g);
        }
        let mut pattern_embeddings = Vec::with_capacity(n);
        for k in 1..=n {
            let (ln, v) = next("phi")?;
            if v.len() != 2 || num(ln, &v[0])? as usize != k {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected `phi {} values`", k),
                });
            }
            let comps = v[1]
                .split(',')
                .map(|s| num(ln, s))
                .collect::<Result<Vec<_>>>()?;
            if comps.len() != r {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("embedding needs {} values", r),
                });
            }
            pattern_embeddings.push(FeatureVector(comps));
        }
        let basis = load_basis(&basis_ref)?;
        if basis.len() != r {
            return Err(Error::Dimension(format!(
                "model expects {} basis series, basis file has {}",
                r,
                basis.len()
            )));
        }
        Ok(Self {
            basis,
            gammas,
            dtw_min,
            dtw_max,
            pattern_embeddings,
            objective,
        })
    }
}

/// Embeds the patterns, normalizes their pairwise DTW matrix and fits one
/// length-scale per pattern.
pub fn calibrate_gammas(patterns: &[TimeSeries], basis: BasisSet) -> Result<KernelModel> {
    if patterns.len() < 2 {
        return Err(Error::Parameter(
            "calibration needs at least two patterns".into(),
        ));
    }
    for p in patterns {
        if p.channels() != basis.channels() {
            return Err(Error::Dimension(format!(
                "pattern has {} channels, basis has {}",
                p.channels(),
                basis.channels()
            )));
        }
    }
    let mut model = KernelModel::uncalibrated(patterns, basis)?;
    let raw = pairwise_dtw(patterns)?;
    let (norm, lo, hi) = normalize_dtw(&raw);
    model.gammas = calibrate_from_parts(&model.pattern_embeddings, &norm)?;
    model.objective = Some(calibration_objective(
        &model.gammas,
        &model.pattern_embeddings,
        &norm,
    )?);
    model.dtw_min = lo;
    model.dtw_max = hi;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector(v.to_vec())
    }

    #[test]
    fn rbf_examples() {
        let u = fv(&[1.0, 2.0]);
        assert_eq!(rbf(&u, &u, 0.7).unwrap(), 1.0);
        let v = fv(&[0.0, 1.0]);
        assert_abs_diff_eq!(rbf(&u, &v, 1.0).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            kernel_distance(&u, &v, 1.0).unwrap(),
            1.0 - (-1f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(kernel_distance(&u, &u, 3.0).unwrap(), 0.0);
        let far = fv(&[1e3, 1e3]);
        assert!(rbf(&u, &far, 1.0).unwrap() < 1e-300);
    }

    #[test]
    fn rbf_errors() {
        assert!(matches!(
            rbf(&fv(&[1.0]), &fv(&[1.0, 2.0]), 1.0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            rbf(&fv(&[1.0]), &fv(&[1.0]), 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            kernel_distance(&fv(&[1.0]), &fv(&[1.0]), -2.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let (m, lo, hi) = normalize_dtw(&[vec![0.0, 4.0], vec![4.0, 0.0]]);
        assert_eq!(m, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!((lo, hi), (0.0, 4.0));
        let (m, _, _) = normalize_dtw(&vec![vec![0.0; 3]; 3]);
        assert_eq!(m, vec![vec![0.0; 3]; 3]);
        let (m, _, _) = normalize_dtw(&[vec![0., 2., 4.], vec![2., 0., 2.], vec![4., 2., 0.]]);
        assert_eq!(
            m,
            vec![vec![0., 0.5, 1.], vec![0.5, 0., 0.5], vec![1., 0.5, 0.]]
        );
    }

    #[test]
    fn calibration_identical_patterns_keeps_default() {
        let x = TimeSeries::univariate(&[0.0, 1.0, 0.5]).unwrap();
        let basis =
            BasisSet::from_series(vec![TimeSeries::univariate(&[0.2, 0.3]).unwrap()], 1.0, 0)
                .unwrap();
        let model = calibrate_gammas(&[x.clone(), x], basis).unwrap();
        assert_eq!(model.gammas, vec![DEFAULT_GAMMA, DEFAULT_GAMMA]);
        assert_eq!(model.objective, Some(0.0));
    }

    #[test]
    fn calibration_inverts_closed_form() {
        let e = vec![fv(&[1.0, 1.0]), fv(&[0.0, 0.0])];
        let t = 1.0 - (-1f64).exp();
        let norm = vec![vec![0.0, t], vec![t, 0.0]];
        let g = calibrate_from_parts(&e, &norm).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-9);
        assert!(calibration_objective(&g, &e, &norm).unwrap() < 1e-9);
    }

    #[test]
    fn calibration_finds_non_default_scale() {
        // ||Δφ||^2 = 8, target 1 - e^{-1} => gamma = 2
        let e = vec![fv(&[2.0, 2.0]), fv(&[0.0, 0.0])];
        let t = 1.0 - (-1f64).exp();
        let norm = vec![vec![0.0, t], vec![t, 0.0]];
        let g = calibrate_from_parts(&e, &norm).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn calibration_needs_two_patterns() {
        let x = TimeSeries::univariate(&[0.0, 1.0]).unwrap();
        let basis = BasisSet::from_series(vec![x.clone()], 1.0, 0).unwrap();
        assert!(matches!(
            calibrate_gammas(&[x], basis),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let t = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0);
        assert_abs_diff_eq!(t, 0.3, epsilon = 1e-6);
    }

    #[test]
    fn model_text_round_trip() {
        let pats: Vec<TimeSeries> = [[0.0, 1.0, 2.0], [1.0, 1.0, 0.0], [2.0, 0.5, 0.1]]
            .iter()
            .map(|v| TimeSeries::univariate(v).unwrap())
            .collect();
        let basis = crate::embed::generate_basis(crate::embed::BasisParams {
            count: 4,
            channels: 1,
            l_min: 2,
            l_max: 3,
            sigma2: 0.4,
            seed: 3,
        })
        .unwrap();
        let model = calibrate_gammas(&pats, basis.clone()).unwrap();
        let text = model.to_text("basis.txt");
        let back = KernelModel::from_text(&text, |r| {
            assert_eq!(r, "basis.txt");
            Ok(basis.clone())
        })
        .unwrap();
        assert_eq!(back, model);
    }
}
