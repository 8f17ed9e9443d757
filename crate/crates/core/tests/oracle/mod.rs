//! Independent reference implementations used by the property and acceptance
//! tests. Nothing here calls into the library's DTW code.

#![allow(dead_code)]

use gaitwarp::TimeSeries;
use rand::{Rng, RngCore};

pub fn cost(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn samples(s: &TimeSeries) -> Vec<Vec<f64>> {
    s.samples().map(<[f64]>::to_vec).collect()
}

/// Minimum cost over every warping path from (1,1) to (N,M), by explicit
/// enumeration. Exponential; keep N, M small.
pub fn brute_force_dtw(x: &TimeSeries, y: &TimeSeries) -> f64 {
    let (xs, ys) = (samples(x), samples(y));
    let mut best = f64::INFINITY;
    let mut stack = vec![(0usize, 0usize, cost(&xs[0], &ys[0]))];
    while let Some((i, j, acc)) = stack.pop() {
        if i + 1 == xs.len() && j + 1 == ys.len() {
            best = best.min(acc);
            continue;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < xs.len() && nj < ys.len() {
                stack.push((ni, nj, acc + cost(&xs[ni], &ys[nj])));
            }
        }
    }
    best
}

/// Every warping path from (1,1) to (N,M), 1-based.
pub fn all_paths(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![(1usize, 1usize)]];
    while let Some(p) = stack.pop() {
        let (i, j) = *p.last().unwrap();
        if (i, j) == (n, m) {
            out.push(p);
            continue;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            if i + di <= n && j + dj <= m {
                let mut q = p.clone();
                q.push((i + di, j + dj));
                stack.push(q);
            }
        }
    }
    out
}

/// Textbook memoized recursion on the DTW definition.
pub fn recursive_dtw(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    fn go(
        i: usize,
        j: usize,
        x: &[Vec<f64>],
        y: &[Vec<f64>],
        memo: &mut Vec<Vec<Option<f64>>>,
    ) -> f64 {
        if let Some(v) = memo[i][j] {
            return v;
        }
        let c = cost(&x[i], &y[j]);
        let v = match (i, j) {
            (0, 0) => c,
            (0, _) => c + go(0, j - 1, x, y, memo),
            (_, 0) => c + go(i - 1, 0, x, y, memo),
            _ => {
                c + go(i - 1, j - 1, x, y, memo)
                    .min(go(i - 1, j, x, y, memo))
                    .min(go(i, j - 1, x, y, memo))
            }
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; y.len()]; x.len()];
    go(x.len() - 1, y.len() - 1, x, y, &mut memo)
}

/// Exhaustive subsequence search: min over 1 <= a <= b <= M of DTW(X, Y[a..=b]).
/// Returns `(a, b, distance)`, preferring the smallest `b`, then smallest `a`.
pub fn exhaustive_subsequence(x: &TimeSeries, y: &TimeSeries) -> (usize, usize, f64) {
    let (xs, ys) = (samples(x), samples(y));
    let mut best = (0, 0, f64::INFINITY);
    for b in 1..=ys.len() {
        for a in 1..=b {
            let d = recursive_dtw(&xs, &ys[a - 1..b]);
            if d < best.2 {
                best = (a, b, d);
            }
        }
    }
    best
}

/// Min over `b` of the exhaustive subsequence distance ending at `b`.
pub fn exhaustive_delta(x: &TimeSeries, y: &TimeSeries) -> Vec<f64> {
    let (xs, ys) = (samples(x), samples(y));
    (1..=ys.len())
        .map(|b| {
            (1..=b)
                .map(|a| recursive_dtw(&xs, &ys[a - 1..b]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn random_series(
    rng: &mut impl RngCore,
    len: usize,
    channels: usize,
    lo: f64,
    hi: f64,
) -> TimeSeries {
    let flat: Vec<f64> = (0..len * channels)
        .map(|_| rng.random_range(lo..=hi))
        .collect();
    TimeSeries::from_flat(flat, channels).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
