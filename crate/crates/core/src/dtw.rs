//! Exact multivariate dynamic time warping.
//!
//! The accumulated cost matrix is stored with a sentinel row and column, so
//! `get(i, j)` uses the same 1-based indices as the series themselves and
//! `get(0, _)`/`get(_, 0)` read the boundary.

use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::series::{euclidean, TimeSeries};

/// Initialization of the first row of the accumulated cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Whole-series alignment: row 1 holds prefix sums of `c(x_1, y_k)`.
    Global,
    /// Pattern query: row 1 holds `c(x_1, y_j)`, so an alignment may start at
    /// any column.
    Subsequence,
}

/// Global path constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandConstraint {
    #[default]
    None,
    /// Cells with `|i - j*N/M| > width` are unreachable.
    SakoeChiba { width: usize },
}

impl BandConstraint {
    /// Inclusive 1-based column range admissible in row `i` of an `n x m` grid.
    fn columns(self, i: usize, n: usize, m: usize) -> (usize, usize) {
        match self {
            BandConstraint::None => (1, m),
            BandConstraint::SakoeChiba { width } => {
                // |i*m - j*n| <= width*m
                let (i, n, m, w) = (i as i128, n as i128, m as i128, width as i128);
                let lo_num = i * m - w * m;
                let hi_num = i * m + w * m;
                let lo = if lo_num <= 0 { 1 } else { (lo_num + n - 1) / n };
                let hi = (hi_num / n).min(m);
                (lo.max(1) as usize, hi.max(0) as usize)
            }
        }
    }
}

/// Accumulated cost matrix `D` of shape `(n+1) x (m+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Vec<f64>,
    mode: Mode,
    n: usize,
    m: usize,
}

impl CostMatrix {
    /// Entry `D[i][j]`, `0 <= i <= n`, `0 <= j <= m`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * (self.m + 1) + j]
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Length of the series along the rows.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Length of the series along the columns.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Last row `D[n][1..=m]`.
    pub fn last_row(&self) -> &[f64] {
        let start = self.n * (self.m + 1) + 1;
        &self.entries[start..start + self.m]
    }
}

/// Ordered 1-based index pairs `(i, j)`: `i` indexes the row series, `j` the
/// column series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPath {
    steps: Vec<(usize, usize)>,
}

impl WarpingPath {
    /// Wraps a step list after checking step sizes.
    pub fn new(steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyInput("warping path without steps".into()));
        }
        if steps.iter().any(|&(i, j)| i == 0 || j == 0) {
            return Err(Error::Bounds("warping path indices are 1-based".into()));
        }
        for w in steps.windows(2) {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!((di, dj), (1, 0) | (0, 1) | (1, 1)) {
                return Err(Error::Constraint(format!(
                    "illegal step {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> (usize, usize) {
        self.steps[0]
    }

    pub fn last(&self) -> (usize, usize) {
        self.steps[self.steps.len() - 1]
    }

    /// True when the path starts at `(1,1)` and ends at `(n,m)`.
    pub fn spans(&self, n: usize, m: usize) -> bool {
        self.first() == (1, 1) && self.last() == (n, m)
    }
}

/// Fills the accumulated cost matrix of `x` (rows) against `y` (columns).
pub fn accumulate(
    x: &TimeSeries,
    y: &TimeSeries,
    mode: Mode,
    band: BandConstraint,
) -> Result<CostMatrix> {
    accumulate_counted(x, y, mode, band, None)
}

pub fn accumulate_counted(
    x: &TimeSeries,
    y: &TimeSeries,
    mode: Mode,
    band: BandConstraint,
    counters: Option<&Counters>,
) -> Result<CostMatrix> {
    x.ensure_same_channels(y)?;
    if mode == Mode::Subsequence && band != BandConstraint::None {
        return Err(Error::Constraint(
            "a Sakoe-Chiba band is only defined for global alignment".into(),
        ));
    }
    let (n, m) = (x.len(), y.len());
    let w = m + 1;
    let mut d = vec![f64::INFINITY; (n + 1) * w];
    if mode == Mode::Global {
        d[0] = 0.0;
    }
    let mut filled = 0u64;
    for i in 1..=n {
        let xi = x.sample0(i - 1);
        let (lo, hi) = band.columns(i, n, m);
        for j in lo..=hi {
            let c = euclidean(xi, y.sample0(j - 1));
            let prev = if mode == Mode::Subsequence && i == 1 {
                0.0
            } else {
                let diag = d[(i - 1) * w + j - 1];
                let up = d[(i - 1) * w + j];
                let left = d[i * w + j - 1];
                diag.min(up).min(left)
            };
            d[i * w + j] = prev + c;
        }
        filled += (hi + 1).saturating_sub(lo) as u64;
    }
    if let Some(c) = counters {
        c.add_cost_evals(filled);
    }
    if mode == Mode::Global && !d[n * w + m].is_finite() {
        return Err(Error::Constraint(format!(
            "band {:?} admits no warping path for lengths {} and {}",
            band, n, m
        )));
    }
    Ok(CostMatrix {
        entries: d,
        mode,
        n,
        m,
    })
}

/// Backtracks the optimal warping path ending at `(n, end_column)`.
///
/// Ties prefer the diagonal predecessor, then `(i-1, j)`, then `(i, j-1)`.
/// In `Global` mode the path runs back to `(1,1)`; in `Subsequence` mode it
/// stops on reaching row 1, whose column is the subsequence start.
pub fn optimal_warping_path(d: &CostMatrix, end_column: usize) -> Result<WarpingPath> {
    if end_column == 0 || end_column > d.m {
        return Err(Error::Bounds(format!(
            "end column {} outside 1..={}",
            end_column, d.m
        )));
    }
    if d.mode == Mode::Global && end_column != d.m {
        return Err(Error::Bounds(format!(
            "global alignment must end at column {}",
            d.m
        )));
    }
    if !d.get(d.n, end_column).is_finite() {
        return Err(Error::Constraint("no path reaches the end cell".into()));
    }
    let (mut i, mut j) = (d.n, end_column);
    let mut steps = vec![(i, j)];
    let done = |i: usize, j: usize| match d.mode {
        Mode::Global => i == 1 && j == 1,
        Mode::Subsequence => i == 1,
    };
    while !done(i, j) {
        if i == 1 {
            j -= 1;
        } else if j == 1 {
            i -= 1;
        } else {
            let diag = d.get(i - 1, j - 1);
            let up = d.get(i - 1, j);
            let left = d.get(i, j - 1);
            if diag <= up && diag <= left {
                i -= 1;
                j -= 1;
            } else if up <= left {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        steps.push((i, j));
    }
    steps.reverse();
    Ok(WarpingPath { steps })
}

/// DTW distance `D[N][M]` of the global alignment. Keeps two rows only.
pub fn dtw_distance(x: &TimeSeries, y: &TimeSeries, band: BandConstraint) -> Result<f64> {
    dtw_distance_counted(x, y, band, None)
}

pub fn dtw_distance_counted(
    x: &TimeSeries,
    y: &TimeSeries,
    band: BandConstraint,
    counters: Option<&Counters>,
) -> Result<f64> {
    x.ensure_same_channels(y)?;
    let (n, m) = (x.len(), y.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    let mut filled = 0u64;
    for i in 1..=n {
        let xi = x.sample0(i - 1);
        let (lo, hi) = band.columns(i, n, m);
        cur.fill(f64::INFINITY);
        for j in lo..=hi {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = best + euclidean(xi, y.sample0(j - 1));
        }
        filled += (hi + 1).saturating_sub(lo) as u64;
        std::mem::swap(&mut prev, &mut cur);
    }
    if let Some(c) = counters {
        c.add_cost_evals(filled);
    }
    let dist = prev[m];
    if !dist.is_finite() {
        return Err(Error::Constraint(format!(
            "band {:?} admits no warping path for lengths {} and {}",
            band, n, m
        )));
    }
    Ok(dist)
}

/// Total cost of aligning `x` and `y` along `path`.
pub fn path_cost(x: &TimeSeries, y: &TimeSeries, path: &WarpingPath) -> Result<f64> {
    x.ensure_same_channels(y)?;
    let mut total = 0.0;
    for &(i, j) in path.steps() {
        if i > x.len() || j > y.len() {
            return Err(Error::Bounds(format!(
                "step ({}, {}) outside a {}x{} grid",
                i,
                j,
                x.len(),
                y.len()
            )));
        }
        total += euclidean(x.sample0(i - 1), y.sample0(j - 1));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(v: &[f64]) -> TimeSeries {
        TimeSeries::univariate(v).unwrap()
    }

    #[test]
    fn identical_series_zero_diagonal() {
        let x = uni(&[1., 2., 3.]);
        let d = accumulate(&x, &x, Mode::Global, BandConstraint::None).unwrap();
        for k in 1..=3 {
            assert_eq!(d.get(k, k), 0.0);
        }
        let p = optimal_warping_path(&d, 3).unwrap();
        assert_eq!(p.steps(), &[(1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn first_column_prefix_sums() {
        let d = accumulate(
            &uni(&[3., 1.]),
            &uni(&[2., 2., 2.]),
            Mode::Global,
            BandConstraint::None,
        )
        .unwrap();
        assert_eq!((d.get(1, 1), d.get(2, 1)), (1.0, 2.0));
        assert_eq!(d.get(0, 0), 0.0);
        assert!(d.get(0, 2).is_infinite() && d.get(2, 0).is_infinite());
    }

    #[test]
    fn subsequence_rows() {
        let d = accumulate(
            &uni(&[1., 2.]),
            &uni(&[5., 5., 1., 2., 5.]),
            Mode::Subsequence,
            BandConstraint::None,
        )
        .unwrap();
        let row1: Vec<f64> = (1..=5).map(|j| d.get(1, j)).collect();
        assert_eq!(row1, vec![4., 4., 0., 1., 4.]);
        assert_eq!(d.last_row(), &[7., 7., 1., 0., 3.]);
        let p = optimal_warping_path(&d, 4).unwrap();
        assert_eq!(p.steps(), &[(1, 3), (2, 4)]);
    }

    #[test]
    fn tie_break_prefers_diagonal() {
        let (x, y) = (uni(&[0., 1., 2.]), uni(&[0., 2.]));
        let d = accumulate(&x, &y, Mode::Global, BandConstraint::None).unwrap();
        let p = optimal_warping_path(&d, 2).unwrap();
        assert_eq!(p.steps(), &[(1, 1), (2, 1), (3, 2)]);
        assert_eq!(dtw_distance(&x, &y, BandConstraint::None).unwrap(), 1.0);
        assert_eq!(path_cost(&x, &y, &p).unwrap(), 1.0);
        let alt = WarpingPath::new(vec![(1, 1), (2, 2), (3, 2)]).unwrap();
        assert_eq!(path_cost(&x, &y, &alt).unwrap(), 1.0);
    }

    #[test]
    fn distance_examples() {
        let x = uni(&[0.3, -1.0, 2.0]);
        assert_eq!(dtw_distance(&x, &x, BandConstraint::None).unwrap(), 0.0);
        assert_eq!(
            dtw_distance(&uni(&[1., 1., 1., 1.]), &uni(&[1.]), BandConstraint::None).unwrap(),
            0.0
        );
    }

    #[test]
    fn end_column_checks() {
        let (x, y) = (uni(&[0., 1.]), uni(&[0., 1., 2.]));
        let g = accumulate(&x, &y, Mode::Global, BandConstraint::None).unwrap();
        assert!(matches!(optimal_warping_path(&g, 2), Err(Error::Bounds(_))));
        let s = accumulate(&x, &y, Mode::Subsequence, BandConstraint::None).unwrap();
        assert!(matches!(optimal_warping_path(&s, 0), Err(Error::Bounds(_))));
        assert!(matches!(optimal_warping_path(&s, 4), Err(Error::Bounds(_))));
    }

    #[test]
    fn channel_mismatch() {
        let a = uni(&[1.0]);
        let b = TimeSeries::from_samples(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            dtw_distance(&a, &b, BandConstraint::None),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            accumulate(&a, &b, Mode::Global, BandConstraint::None),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn band_zero_on_equal_lengths_is_euclidean() {
        let (x, y) = (uni(&[0., 1., 5.]), uni(&[1., 1., 2.]));
        let band = BandConstraint::SakoeChiba { width: 0 };
        assert_eq!(dtw_distance(&x, &y, band).unwrap(), 1.0 + 0.0 + 3.0);
        let d = accumulate(&x, &y, Mode::Global, band).unwrap();
        assert!(d.get(1, 2).is_infinite());
        assert_eq!(
            optimal_warping_path(&d, 3).unwrap().steps(),
            &[(1, 1), (2, 2), (3, 3)]
        );
    }

    #[test]
    fn infeasible_band() {
        let (x, y) = (uni(&[0., 1., 2.]), uni(&[0., 2.]));
        let band = BandConstraint::SakoeChiba { width: 0 };
        assert!(matches!(
            dtw_distance(&x, &y, band),
            Err(Error::Constraint(_))
        ));
        assert!(matches!(
            accumulate(&x, &y, Mode::Global, band),
            Err(Error::Constraint(_))
        ));
        assert!(matches!(
            accumulate(
                &x,
                &y,
                Mode::Subsequence,
                BandConstraint::SakoeChiba { width: 3 }
            ),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn counters_track_cells() {
        let (x, y) = (uni(&[0., 1., 2.]), uni(&[0., 2.]));
        let c = Counters::new();
        dtw_distance_counted(&x, &y, BandConstraint::None, Some(&c)).unwrap();
        assert_eq!(c.snapshot().cost_evals, 6);
    }

    #[test]
    fn path_validation() {
        assert!(WarpingPath::new(vec![(1, 1), (3, 2)]).is_err());
        assert!(WarpingPath::new(vec![(1, 1), (1, 1)]).is_err());
        assert!(WarpingPath::new(vec![]).is_err());
        let p = WarpingPath::new(vec![(1, 1), (2, 3)]);
        assert!(p.is_err());
        let x = uni(&[0.0]);
        let p = WarpingPath::new(vec![(1, 1), (1, 2)]).unwrap();
        assert!(matches!(path_cost(&x, &x, &p), Err(Error::Bounds(_))));
    }
}
