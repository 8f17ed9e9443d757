//! Locating the best-fitting stream window under the kernel distance.
//!
//! The decision variables are the start `a` and the length `l` of the window
//! `Y[a..=a+l-1]`, with `l` restricted to `(1-nu)N <= l <= (1+nu)N`. Small
//! spaces are enumerated; larger ones are searched with a Gaussian-process
//! surrogate and expected improvement.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counters::Counters;
use crate::embed::{feature_map_counted, BasisSet, FeatureVector};
use crate::error::{Error, Result};
use crate::gp::{expected_improvement, Gp};
use crate::kernel::{kernel_distance, KernelModel};
use crate::series::TimeSeries;
use crate::subseq::Match;

/// Feasible `(a, l)` pairs for a pattern of length `n_ref` in a stream of
/// length `m_stream`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub n_ref: usize,
    pub m_stream: usize,
    pub nu: f64,
    l_lo: usize,
    l_hi: usize,
}

impl SearchSpace {
    pub fn new(n_ref: usize, m_stream: usize, nu: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&nu) {
            return Err(Error::Parameter(format!(
                "nu must lie in [0, 1), got {}",
                nu
            )));
        }
        if n_ref == 0 || m_stream == 0 {
            return Err(Error::Parameter(
                "pattern and stream must be non-empty".into(),
            ));
        }
        let n = n_ref as f64;
        let l_lo = (((1.0 - nu) * n) - 1e-9).ceil().max(1.0) as usize;
        let l_hi = (((1.0 + nu) * n) + 1e-9).floor().min(m_stream as f64) as usize;
        if l_lo > l_hi {
            return Err(Error::Constraint(format!(
                "no window length in [{}, {}] fits a stream of length {}",
                l_lo,
                ((1.0 + nu) * n).floor(),
                m_stream
            )));
        }
        Ok(Self {
            n_ref,
            m_stream,
            nu,
            l_lo,
            l_hi,
        })
    }

    /// Inclusive range of admissible window lengths.
    pub fn lengths(&self) -> (usize, usize) {
        (self.l_lo, self.l_hi)
    }

    fn lengths_count(&self) -> usize {
        self.l_hi - self.l_lo + 1
    }

    /// Start positions where every admissible length fits.
    fn full_starts(&self) -> usize {
        self.m_stream - self.l_hi + 1
    }

    pub fn size(&self) -> usize {
        let k = self.lengths_count();
        // the tail starts lose one length each
        self.full_starts() * k + k * (k - 1) / 2
    }

    pub fn contains(&self, a: usize, l: usize) -> bool {
        a >= 1 && l >= self.l_lo && l <= self.l_hi && a + l - 1 <= self.m_stream
    }

    /// Point at flat position `idx`; the order is lexicographic in `(a, l)`.
    pub fn point(&self, idx: usize) -> (usize, usize) {
        let k = self.lengths_count();
        let full = self.full_starts() * k;
        if idx < full {
            return (idx / k + 1, self.l_lo + idx % k);
        }
        let mut rest = idx - full;
        let mut a = self.full_starts() + 1;
        let mut count = k - 1;
        while rest >= count {
            rest -= count;
            a += 1;
            count -= 1;
        }
        (a, self.l_lo + rest)
    }

    /// Inverse of [`SearchSpace::point`].
    pub fn index(&self, a: usize, l: usize) -> usize {
        let k = self.lengths_count();
        let fs = self.full_starts();
        if a <= fs {
            return (a - 1) * k + (l - self.l_lo);
        }
        let t = a - fs; // tail row t has k - t entries
        let before: usize = (1..t).map(|s| k - s).sum();
        fs * k + before + (l - self.l_lo)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.size()).map(|i| self.point(i))
    }

    /// Coordinates scaled to the unit square.
    fn scaled(&self, a: usize, l: usize) -> [f64; 2] {
        let a_span = (self.m_stream - self.l_lo).max(1) as f64;
        let l_span = (self.l_hi - self.l_lo).max(1) as f64;
        [(a - 1) as f64 / a_span, (l - self.l_lo) as f64 / l_span]
    }
}

/// Search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoConfig {
    /// Total objective evaluations allowed.
    pub budget: usize,
    /// Space-filling random evaluations before the surrogate takes over.
    pub init_design: usize,
    pub seed: u64,
    /// Spaces with at most this many points (and no more than `budget`) are
    /// enumerated outright.
    pub exhaustive_threshold: usize,
    /// Upper bound on points scored by the acquisition per step. Spaces at
    /// most this large are scored in full.
    pub max_candidates: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            init_design: 10,
            seed: 0,
            exhaustive_threshold: 500,
            max_candidates: 1024,
        }
    }
}

impl BoConfig {
    fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.init_design == 0 {
            return Err(Error::Parameter(
                "budget and init_design must be positive".into(),
            ));
        }
        if self.init_design >= self.budget {
            return Err(Error::Parameter(format!(
                "init_design ({}) must be below budget ({})",
                self.init_design, self.budget
            )));
        }
        if self.max_candidates == 0 {
            return Err(Error::Parameter("max_candidates must be positive".into()));
        }
        Ok(())
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub incumbent: f64,
}

/// Outcome of a search: the incumbent and every evaluation in order.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Match,
    pub trace: Vec<TraceRow>,
    pub exhaustive: bool,
}

impl SearchResult {
    /// CSV with header `iter,a,b,distance,incumbent`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,a,b,distance,incumbent\n");
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iter, r.a, r.b, r.distance, r.incumbent
            )
            .unwrap();
        }
        out
    }
}

struct Recorder {
    trace: Vec<TraceRow>,
    best: Option<(usize, usize, f64)>,
}

impl Recorder {
    fn record(&mut self, a: usize, l: usize, value: f64) {
        if self.best.is_none_or(|(_, _, v)| value < v) {
            self.best = Some((a, l, value));
        }
        let incumbent = self.best.map(|b| b.2).unwrap_or(value);
        self.trace.push(TraceRow {
            iter: self.trace.len() + 1,
            a,
            b: a + l - 1,
            distance: value,
            incumbent,
        });
    }

    fn finish(self, exhaustive: bool) -> SearchResult {
        let (a, l, distance) = self.best.expect("at least one evaluation");
        SearchResult {
            best: Match {
                a,
                b: a + l - 1,
                distance,
                path: None,
            },
            trace: self.trace,
            exhaustive,
        }
    }
}

/// Minimizes a black-box objective over the search space.
///
/// Exactly `min(budget, size)` evaluations are made. With a space no larger
/// than both `budget` and `exhaustive_threshold` every point is evaluated in
/// order. Otherwise `init_design` stratified random points seed a GP surrogate
/// and each further point maximizes expected improvement over the scored
/// candidates. Ties keep the earlier evaluation.
pub fn minimize<F>(space: &SearchSpace, cfg: &BoConfig, mut objective: F) -> Result<SearchResult>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    cfg.validate()?;
    let size = space.size();
    let mut rec = Recorder {
        trace: Vec::new(),
        best: None,
    };
    if size <= cfg.budget && size <= cfg.exhaustive_threshold {
        for (a, l) in space.iter() {
            rec.record(a, l, objective(a, l)?);
        }
        return Ok(rec.finish(true));
    }

    let total = cfg.budget.min(size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evaluated = vec![false; size];
    let mut xs: Vec<[f64; 2]> = Vec::with_capacity(total);
    let mut ys: Vec<f64> = Vec::with_capacity(total);
    let mut eval = |idx: usize,
                    evaluated: &mut Vec<bool>,
                    xs: &mut Vec<[f64; 2]>,
                    ys: &mut Vec<f64>,
                    rec: &mut Recorder|
     -> Result<()> {
        let (a, l) = space.point(idx);
        let v = objective(a, l)?;
        evaluated[idx] = true;
        xs.push(space.scaled(a, l));
        ys.push(v);
        rec.record(a, l, v);
        Ok(())
    };

    let init = cfg.init_design.min(total);
    for k in 0..init {
        let lo = k * size / init;
        let hi = ((k + 1) * size / init).max(lo + 1);
        let idx = rng.random_range(lo..hi);
        eval(idx, &mut evaluated, &mut xs, &mut ys, &mut rec)?;
    }

    let full_scoring = size <= cfg.max_candidates;
    let mut gp_scales = None;
    let mut scratch = Vec::new();
    while ys.len() < total {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        let normed: Vec<f64> = ys.iter().map(|y| (y - mean) / sd).collect();
        let refit = gp_scales.is_none() || (ys.len() - init).is_multiple_of(5);
        let gp = match gp_scales {
            Some(ls) if !refit => Gp::fit(&xs, &normed, ls),
            _ => Gp::fit_best(&xs, &normed),
        };
        gp_scales = Some(gp.length_scales());
        let best_norm = normed.iter().copied().fold(f64::INFINITY, f64::min);

        let candidates: Vec<usize> = if full_scoring {
            (0..size).filter(|&i| !evaluated[i]).collect()
        } else {
            sample_candidates(space, cfg.max_candidates, &rec, &evaluated, &mut rng)
        };
        let mut pick: Option<(usize, f64)> = None;
        for idx in candidates {
            let (a, l) = space.point(idx);
            let (mu, v) = gp.predict(&space.scaled(a, l), &mut scratch);
            let ei = expected_improvement(mu, v, best_norm);
            if pick.is_none_or(|(_, e)| ei > e) {
                pick = Some((idx, ei));
            }
        }
        let idx = match pick {
            Some((idx, _)) => idx,
            None => {
                let (a, l, _) = rec.best.expect("initial design evaluated");
                nearest_unevaluated(space, space.index(a, l), &evaluated)
                    .expect("budget below space size leaves unevaluated points")
            }
        };
        eval(idx, &mut evaluated, &mut xs, &mut ys, &mut rec)?;
    }
    Ok(rec.finish(false))
}

/// Random candidates plus neighbours of the best observations, excluding
/// points already evaluated.
fn sample_candidates(
    space: &SearchSpace,
    count: usize,
    rec: &Recorder,
    evaluated: &[bool],
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let size = space.size();
    let mut out = Vec::with_capacity(count);
    let global = count / 2;
    for _ in 0..global {
        let idx = rng.random_range(0..size);
        if !evaluated[idx] {
            out.push(idx);
        }
    }
    let mut ranked: Vec<&TraceRow> = rec.trace.iter().collect();
    ranked.sort_by(|x, y| x.distance.total_cmp(&y.distance).then(x.iter.cmp(&y.iter)));
    let centres: Vec<(usize, usize)> = ranked
        .iter()
        .take(5)
        .map(|r| (r.a, r.b - r.a + 1))
        .collect();
    let (l_lo, l_hi) = space.lengths();
    let a_radius = (space.m_stream / 50).max(2) as i64;
    let l_radius = ((l_hi - l_lo) / 10).max(1) as i64;
    let local = count - global;
    for k in 0..local {
        let (ca, cl) = centres[k % centres.len()];
        let a = ca as i64 + rng.random_range(-a_radius..=a_radius);
        let l = cl as i64 + rng.random_range(-l_radius..=l_radius);
        if a < 1 || l < 1 {
            continue;
        }
        let (a, l) = (a as usize, l as usize);
        if space.contains(a, l) {
            let idx = space.index(a, l);
            if !evaluated[idx] {
                out.push(idx);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn nearest_unevaluated(space: &SearchSpace, from: usize, evaluated: &[bool]) -> Option<usize> {
    let (fa, fl) = space.point(from);
    let mut best: Option<(usize, usize)> = None;
    for idx in 0..space.size() {
        if evaluated[idx] {
            continue;
        }
        let (a, l) = space.point(idx);
        let d = a.abs_diff(fa) + l.abs_diff(fl);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((idx, d));
        }
    }
    best.map(|b| b.0)
}

/// `d_K` between a pattern embedding and the window `Y[a..=a+l-1]`.
pub fn evaluate_objective(
    pattern_embedding: &FeatureVector,
    y: &TimeSeries,
    a: usize,
    l: usize,
    basis: &BasisSet,
    gamma: f64,
    counters: Option<&Counters>,
) -> Result<f64> {
    if a == 0 || l == 0 || a + l - 1 > y.len() {
        return Err(Error::Bounds(format!(
            "window start {} length {} in a stream of length {}",
            a,
            l,
            y.len()
        )));
    }
    let window = y.slice(a, a + l - 1)?;
    let phi = feature_map_counted(&window, basis, counters)?;
    if let Some(c) = counters {
        c.add_objective_evals(1);
        c.add_kernel_ops(crate::kernel::kernel_distance_ops(phi.len()));
    }
    kernel_distance(pattern_embedding, &phi, gamma)
}

/// Best window of `y` for pattern `pattern_index` of `model` under the kernel
/// distance, subject to the length constraint of `space`.
pub fn optimize_match(
    x: &TimeSeries,
    y: &TimeSeries,
    model: &KernelModel,
    pattern_index: usize,
    space: &SearchSpace,
    cfg: &BoConfig,
    counters: Option<&Counters>,
) -> Result<SearchResult> {
    if space.n_ref != x.len() || space.m_stream != y.len() {
        return Err(Error::Dimension(format!(
            "search space is for lengths {}/{}, got {}/{}",
            space.n_ref,
            space.m_stream,
            x.len(),
            y.len()
        )));
    }
    x.ensure_same_channels(y)?;
    let (Some(&gamma), Some(embedding)) = (
        model.gammas.get(pattern_index),
        model.pattern_embeddings.get(pattern_index),
    ) else {
        return Err(Error::Bounds(format!(
            "pattern {} of {}",
            pattern_index + 1,
            model.len()
        )));
    };
    minimize(space, cfg, |a, l| {
        evaluate_objective(embedding, y, a, l, &model.basis, gamma, counters)
    })
}
