//! Subsequence DTW: locating the stream window that best fits a pattern, and
//! iterated search for all repetitions below a threshold.

use crate::counters::Counters;
use crate::dtw::{
    accumulate_counted, optimal_warping_path, BandConstraint, CostMatrix, Mode, WarpingPath,
};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// A located subsequence `Y[a..=b]` (1-based) and its alignment cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    /// Alignment of the pattern (`i`) against stream positions (`j`), from
    /// `(1, a)` to `(N, b)`. `None` for matches found by the kernel search.
    pub path: Option<WarpingPath>,
}

impl Match {
    pub fn length(&self) -> usize {
        self.b - self.a + 1
    }
}

/// Last row of the subsequence-mode matrix with an exclusion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaFunction {
    values: Vec<f64>,
    excluded: Vec<bool>,
}

impl DeltaFunction {
    pub fn new(values: Vec<f64>) -> Self {
        let excluded = vec![false; values.len()];
        Self { values, excluded }
    }

    /// Raw values; `values()[b-1]` is `Δ(b)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Δ(b)` with masking applied (masked positions read as `+inf`).
    pub fn get(&self, b: usize) -> f64 {
        if self.excluded[b - 1] {
            f64::INFINITY
        } else {
            self.values[b - 1]
        }
    }

    pub fn is_excluded(&self, b: usize) -> bool {
        self.excluded[b - 1]
    }

    /// Masks every `b` with `|b - center| <= radius`.
    pub fn exclude_around(&mut self, center: usize, radius: usize) {
        let lo = center.saturating_sub(radius).max(1);
        let hi = (center + radius).min(self.values.len());
        for b in lo..=hi {
            self.excluded[b - 1] = true;
        }
    }

    /// Smallest `b` minimizing the masked values, or `None` when all are
    /// masked.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for b in 1..=self.values.len() {
            let v = self.get(b);
            if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
                best = Some((b, v));
            }
        }
        best.map(|(b, _)| b)
    }
}

fn subsequence_matrix(
    x: &TimeSeries,
    y: &TimeSeries,
    counters: Option<&Counters>,
) -> Result<CostMatrix> {
    accumulate_counted(x, y, Mode::Subsequence, BandConstraint::None, counters)
}

/// `Δ(b) = D[N][b]` for the subsequence-mode matrix of pattern `x` in `y`.
pub fn delta(x: &TimeSeries, y: &TimeSeries) -> Result<DeltaFunction> {
    let d = subsequence_matrix(x, y, None)?;
    Ok(DeltaFunction::new(d.last_row().to_vec()))
}

fn match_ending_at(d: &CostMatrix, b: usize, distance: f64) -> Result<Match> {
    let path = optimal_warping_path(d, b)?;
    let a = path.first().1;
    Ok(Match {
        a,
        b,
        distance,
        path: Some(path),
    })
}

/// Best-fitting subsequence of `y` for pattern `x`; ties on `b` go to the
/// smallest index.
pub fn best_match(x: &TimeSeries, y: &TimeSeries) -> Result<Match> {
    best_match_counted(x, y, None)
}

pub fn best_match_counted(
    x: &TimeSeries,
    y: &TimeSeries,
    counters: Option<&Counters>,
) -> Result<Match> {
    let d = subsequence_matrix(x, y, counters)?;
    let delta = DeltaFunction::new(d.last_row().to_vec());
    let b = delta
        .argmin()
        .ok_or_else(|| Error::EmptyInput("empty stream".into()))?;
    match_ending_at(&d, b, delta.get(b))
}

/// Repeatedly takes the global minimum of the masked `Δ`, stopping once it
/// exceeds `tau`. After each hit every `b` within `exclusion_radius` of it is
/// masked. Matches come out in discovery order, i.e. by ascending distance.
pub fn find_repetitions(
    x: &TimeSeries,
    y: &TimeSeries,
    tau: f64,
    exclusion_radius: usize,
) -> Result<Vec<Match>> {
    find_repetitions_counted(x, y, tau, exclusion_radius, None)
}

pub fn find_repetitions_counted(
    x: &TimeSeries,
    y: &TimeSeries,
    tau: f64,
    exclusion_radius: usize,
    counters: Option<&Counters>,
) -> Result<Vec<Match>> {
    if !(tau >= 0.0) {
        return Err(Error::Parameter(format!("tau must be >= 0, got {}", tau)));
    }
    if exclusion_radius == 0 {
        return Err(Error::Parameter("exclusion radius must be positive".into()));
    }
    let d = subsequence_matrix(x, y, counters)?;
    let mut delta = DeltaFunction::new(d.last_row().to_vec());
    let mut found = Vec::new();
    while let Some(b) = delta.argmin() {
        let value = delta.get(b);
        if value > tau {
            break;
        }
        found.push(match_ending_at(&d, b, value)?);
        delta.exclude_around(b, exclusion_radius);
    }
    Ok(found)
}

/// Default neighbourhood masked around each repetition: half the pattern
/// length, rounded up.
pub fn default_exclusion_radius(pattern_len: usize) -> usize {
    pattern_len.div_ceil(2).max(1)
}
