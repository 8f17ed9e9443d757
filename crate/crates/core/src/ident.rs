//! User identification: one reference window per user, one stream per user,
//! and a streams x patterns distance matrix whose row-wise argmin is the
//! predicted user.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::bayesopt::{optimize_match, BoConfig, SearchSpace};
use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::series::{Dataset, TimeSeries};
use crate::subseq::{best_match_counted, Match};

/// Samples per reference window.
pub const DEFAULT_WINDOW: usize = 200;

/// A timestamp interval this many times the median counts as missing rows.
const GAP_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    KernelApprox,
    ExactSubsequenceDtw,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::KernelApprox => "kernel",
            Method::ExactSubsequenceDtw => "dtw",
        }
    }
}

/// `stream[start..start+window)` (1-based start).
pub fn extract_reference(stream: &TimeSeries, start: usize, window: usize) -> Result<TimeSeries> {
    if window == 0 {
        return Err(Error::Parameter("window must be positive".into()));
    }
    if start == 0 || start + window - 1 > stream.len() {
        return Err(Error::Bounds(format!(
            "window of {} samples at {} exceeds a stream of length {}",
            window,
            start,
            stream.len()
        )));
    }
    stream.slice(start, start + window - 1)
}

/// First start whose window contains no timestamp gap wider than three times
/// the median sampling interval. Streams without timestamps start at 1.
pub fn default_window_start(stream: &TimeSeries, window: usize) -> Result<usize> {
    if window == 0 || window > stream.len() {
        return Err(Error::Bounds(format!(
            "window of {} samples in a stream of length {}",
            window,
            stream.len()
        )));
    }
    let Some(ts) = stream.timestamps() else {
        return Ok(1);
    };
    if ts.len() < 2 {
        return Ok(1);
    }
    let mut steps: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = steps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let limit = if median > 0.0 {
        GAP_FACTOR * median
    } else {
        f64::INFINITY
    };
    for s in steps.iter_mut() {
        *s = if *s > limit { 1.0 } else { 0.0 };
    }
    // a window starting at `start` spans intervals start..start+window-2 (0-based)
    let mut gaps: f64 = steps[..window - 1].iter().sum();
    let last_start = stream.len() - window + 1;
    for start in 1..=last_start {
        if start > 1 {
            gaps += steps[start + window - 3] - steps[start - 2];
        }
        if gaps == 0.0 {
            return Ok(start);
        }
    }
    Ok(1)
}

/// The part of a recording searched for its own user: the samples after the
/// reference window, or before it when the tail is shorter than the window.
pub fn holdout_stream(stream: &TimeSeries, start: usize, window: usize) -> Result<TimeSeries> {
    let end = start + window - 1;
    let tail = stream.len().saturating_sub(end);
    if tail >= window {
        return stream.slice(end + 1, stream.len());
    }
    if start > window {
        return stream.slice(1, start - 1);
    }
    Err(Error::Bounds(format!(
        "recording of {} samples is too short to hold out a window of {}",
        stream.len(),
        window
    )))
}

/// Parses `label,start` lines into per-user window starts.
pub fn parse_window_offsets(text: &str) -> Result<HashMap<String, usize>> {
    let mut out = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, start) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: k + 1,
            msg: "expected `label,start`".into(),
        })?;
        let start: usize = start.trim().parse().map_err(|_| Error::Parse {
            line: k + 1,
            msg: format!("bad start {:?}", start.trim()),
        })?;
        out.insert(label.trim().to_string(), start);
    }
    Ok(out)
}

/// Reference patterns and search streams derived from a dataset.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub labels: Vec<String>,
    pub starts: Vec<usize>,
    pub patterns: Vec<TimeSeries>,
    pub streams: Vec<TimeSeries>,
}

/// Extracts one window per recording. With `holdout`, each stream excludes
/// its own reference window; otherwise streams are the full recordings.
pub fn prepare_experiment(
    dataset: &Dataset,
    window: usize,
    offsets: &HashMap<String, usize>,
    holdout: bool,
) -> Result<Experiment> {
    let mut exp = Experiment {
        labels: Vec::new(),
        starts: Vec::new(),
        patterns: Vec::new(),
        streams: Vec::new(),
    };
    for (k, rec) in dataset.streams().iter().enumerate() {
        let label = rec
            .label()
            .map(str::to_string)
            .unwrap_or_else(|| (k + 1).to_string());
        let start = match offsets.get(&label) {
            Some(&s) => s,
            None => default_window_start(rec, window)?,
        };
        let pattern = extract_reference(rec, start, window)?;
        let stream = if holdout {
            holdout_stream(rec, start, window)?
        } else {
            rec.clone()
        };
        exp.labels.push(label);
        exp.starts.push(start);
        exp.patterns.push(pattern);
        exp.streams.push(stream);
    }
    Ok(exp)
}

/// Kernel-search settings used by [`build_ident_matrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub nu: f64,
    pub bo: BoConfig,
}

/// Distances with rows = streams and columns = patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentMatrix {
    pub distances: Vec<Vec<f64>>,
    pub method: Method,
    pub predictions: Vec<usize>,
    pub matches: Vec<Vec<Match>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

fn row_argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = k;
        }
    }
    best
}

fn cell_seed(seed: u64, row: usize, col: usize) -> u64 {
    seed ^ ((row as u64) << 32 | col as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn label_of(s: &TimeSeries, k: usize) -> String {
    s.label()
        .map(str::to_string)
        .unwrap_or_else(|| (k + 1).to_string())
}

/// Fills the identification matrix. Cells are independent and computed in
/// parallel; each kernel-search cell derives its seed from `(row, column)`.
pub fn build_ident_matrix(
    patterns: &[TimeSeries],
    streams: &[TimeSeries],
    model: Option<&KernelModel>,
    method: Method,
    search: &SearchParams,
    counters: Option<&Counters>,
) -> Result<IdentMatrix> {
    if patterns.is_empty() || streams.is_empty() {
        return Err(Error::EmptyInput("need patterns and streams".into()));
    }
    for s in patterns.iter().chain(streams) {
        patterns[0].ensure_same_channels(s)?;
    }
    if method == Method::KernelApprox {
        match model {
            Some(m) if m.is_calibrated() && m.len() == patterns.len() => {}
            Some(m) if m.is_calibrated() => {
                return Err(Error::State(format!(
                    "model holds {} patterns, {} given",
                    m.len(),
                    patterns.len()
                )))
            }
            _ => {
                return Err(Error::State(
                    "kernel identification needs a calibrated model".into(),
                ))
            }
        }
    }
    let (n, m) = (patterns.len(), streams.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|r| (0..n).map(move |c| (r, c))).collect();
    let results = cells
        .par_iter()
        .map(|&(row, col)| -> Result<Match> {
            let (x, y) = (&patterns[col], &streams[row]);
            match method {
                Method::ExactSubsequenceDtw => best_match_counted(x, y, counters),
                Method::KernelApprox => {
                    let model = model.expect("checked above");
                    let space = SearchSpace::new(x.len(), y.len(), search.nu)?;
                    let cfg = BoConfig {
                        seed: cell_seed(search.bo.seed, row, col),
                        ..search.bo
                    };
                    Ok(optimize_match(x, y, model, col, &space, &cfg, counters)?.best)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut matches = vec![Vec::with_capacity(n); m];
    for (&(row, _), hit) in cells.iter().zip(results) {
        matches[row].push(hit);
    }
    let distances: Vec<Vec<f64>> = matches
        .iter()
        .map(|r| r.iter().map(|h| h.distance).collect())
        .collect();
    let predictions = distances.iter().map(|r| row_argmin(r)).collect();
    Ok(IdentMatrix {
        distances,
        method,
        predictions,
        matches,
        row_labels: streams
            .iter()
            .enumerate()
            .map(|(k, s)| label_of(s, k))
            .collect(),
        col_labels: patterns
            .iter()
            .enumerate()
            .map(|(k, s)| label_of(s, k))
            .collect(),
    })
}

/// Identification score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
    pub fraction: f64,
}

impl IdentMatrix {
    /// Matrix from precomputed distances; predictions are recomputed.
    pub fn from_distances(distances: Vec<Vec<f64>>, method: Method) -> Result<Self> {
        let cols = distances.first().map(Vec::len).unwrap_or(0);
        if cols == 0 || distances.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged or empty distance matrix".into()));
        }
        let predictions = distances.iter().map(|r| row_argmin(r)).collect();
        Ok(Self {
            matches: distances
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|&d| Match {
                            a: 1,
                            b: 1,
                            distance: d,
                            path: None,
                        })
                        .collect()
                })
                .collect(),
            row_labels: (1..=distances.len()).map(|k| k.to_string()).collect(),
            col_labels: (1..=cols).map(|k| k.to_string()).collect(),
            distances,
            method,
            predictions,
        })
    }

    pub fn rows(&self) -> usize {
        self.distances.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    /// CSV with a header of pattern labels and a leading stream-label column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stream");
        for l in &self.col_labels {
            write!(out, ",{}", l).unwrap();
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.distances) {
            out.push_str(label);
            for v in row {
                write!(out, ",{}", v).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Located windows as CSV rows `stream,pattern,a,b,distance`.
    pub fn matches_csv(&self) -> String {
        let mut out = String::from("stream,pattern,a,b,distance\n");
        for (r, row) in self.matches.iter().enumerate() {
            for (c, m) in row.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    self.row_labels[r], self.col_labels[c], m.a, m.b, m.distance
                )
                .unwrap();
            }
        }
        out
    }

    /// Binary portable graymap, `cell` pixels per matrix entry. Each row is
    /// min-max normalized and brighter means closer.
    pub fn heatmap_pgm(&self, cell: usize) -> Vec<u8> {
        let cell = cell.max(1);
        let (rows, cols) = (self.rows(), self.cols());
        let (w, h) = (cols * cell, rows * cell);
        let mut out = format!("P5\n{} {}\n255\n", w, h).into_bytes();
        for row in &self.distances {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pixels: Vec<u8> = row
                .iter()
                .map(|&v| {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                    (255.0 * (1.0 - t)).round() as u8
                })
                .collect();
            let mut line = Vec::with_capacity(w);
            for p in pixels {
                line.extend(std::iter::repeat_n(p, cell));
            }
            for _ in 0..cell {
                out.extend_from_slice(&line);
            }
        }
        out
    }
}

/// Counts rows whose prediction equals the true column.
pub fn accuracy(matrix: &IdentMatrix, truth: &[usize]) -> Result<Accuracy> {
    if truth.len() != matrix.rows() {
        return Err(Error::Dimension(format!(
            "{} truth labels for {} rows",
            truth.len(),
            matrix.rows()
        )));
    }
    let correct = matrix
        .predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    let total = truth.len();
    Ok(Accuracy {
        correct,
        total,
        fraction: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
    })
}
