//! Random basis series and the DTW feature map.
//!
//! Each basis series `s_i` gets its own ChaCha8 stream (`seed`, stream `i`),
//! so generation does not depend on how many series are drawn or in which
//! order. The length is drawn first, uniformly from `[l_min, l_max]`, then the
//! `d x L_i` values are drawn i.i.d. from `N(0, sigma2)`, sample by sample.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::counters::Counters;
use crate::dtw::{dtw_distance_counted, BandConstraint};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Parameters that fully determine a basis set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisParams {
    pub count: usize,
    pub channels: usize,
    pub l_min: usize,
    pub l_max: usize,
    /// Variance of the generating normal distribution.
    pub sigma2: f64,
    pub seed: u64,
}

impl BasisParams {
    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Parameter("basis size R must be >= 1".into()));
        }
        if self.channels == 0 {
            return Err(Error::Parameter("basis channel count must be >= 1".into()));
        }
        if self.l_min == 0 || self.l_min > self.l_max {
            return Err(Error::Parameter(format!(
                "basis lengths need 1 <= l_min <= l_max, got {}..{}",
                self.l_min, self.l_max
            )));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Parameter(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// The `R` random series used by the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    params: BasisParams,
    series: Vec<TimeSeries>,
}

/// `φ_S(X)`: DTW distances from a series to each basis series.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn basis_series(p: &BasisParams, i: usize, normal: &Normal<f64>) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(i as u64);
    let len = rng.random_range(p.l_min..=p.l_max);
    let values: Vec<f64> = (0..len * p.channels)
        .map(|_| normal.sample(&mut rng))
        .collect();
    TimeSeries::from_flat(values, p.channels)
        .expect("generated basis values are finite")
        .with_label(format!("s{}", i + 1))
}

/// Draws `R` basis series. Deterministic in `params`.
pub fn generate_basis(params: BasisParams) -> Result<BasisSet> {
    params.validate()?;
    let normal =
        Normal::new(0.0, params.sigma2.sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
    let series = (0..params.count)
        .into_par_iter()
        .map(|i| basis_series(&params, i, &normal))
        .collect();
    Ok(BasisSet { params, series })
}

impl BasisSet {
    /// Assembles a basis set from explicit series. All series must share one
    /// channel count; the recorded parameters describe the set but cannot
    /// regenerate it.
    pub fn from_series(series: Vec<TimeSeries>, sigma2: f64, seed: u64) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::EmptyInput("empty basis set".into()))?;
        for s in &series[1..] {
            first.ensure_same_channels(s)?;
        }
        let l_min = series.iter().map(TimeSeries::len).min().unwrap_or(1);
        let l_max = series.iter().map(TimeSeries::len).max().unwrap_or(1);
        let params = BasisParams {
            count: series.len(),
            channels: first.channels(),
            l_min,
            l_max,
            sigma2,
            seed,
        };
        params.validate()?;
        Ok(Self { params, series })
    }

    pub fn params(&self) -> &BasisParams {
        &self.params
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.params.channels
    }

    /// Text form: header `R d l_min l_max sigma2 seed`, then per series a line
    /// `i L_i` followed by `L_i` rows of `d` comma-separated values.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        writeln!(
            out,
            "{} {} {} {} {} {}",
            p.count, p.channels, p.l_min, p.l_max, p.sigma2, p.seed
        )
        .unwrap();
        for (i, s) in self.series.iter().enumerate() {
            writeln!(out, "{} {}", i + 1, s.len()).unwrap();
            for sample in s.samples() {
                let row: Vec<String> = sample.iter().map(|v| v.to_string()).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("empty basis file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 {
            return Err(parse_err(hl, "header needs `R d l_min l_max sigma2 seed`"));
        }
        let params = BasisParams {
            count: parse_field(hl, h[0])?,
            channels: parse_field(hl, h[1])?,
            l_min: parse_field(hl, h[2])?,
            l_max: parse_field(hl, h[3])?,
            sigma2: parse_field(hl, h[4])?,
            seed: parse_field(hl, h[5])?,
        };
        params.validate()?;
        let mut series = Vec::with_capacity(params.count);
        for expect in 1..=params.count {
            let (ln, block) = lines
                .next()
                .ok_or_else(|| Error::EmptyInput(format!("missing basis series {}", expect)))?;
            let b: Vec<&str> = block.split_whitespace().collect();
            if b.len() != 2 || parse_field::<usize>(ln, b[0])? != expect {
                return Err(parse_err(
                    ln,
                    &format!("expected block header `{} L`", expect),
                ));
            }
            let len: usize = parse_field(ln, b[1])?;
            if len < params.l_min || len > params.l_max {
                return Err(parse_err(ln, "series length outside [l_min, l_max]"));
            }
            let mut values = Vec::with_capacity(len * params.channels);
            for _ in 0..len {
                let (vl, row) = lines.next().ok_or_else(|| {
                    Error::EmptyInput(format!("basis series {} truncated", expect))
                })?;
                let fields: Vec<&str> = row.split(',').map(str::trim).collect();
                if fields.len() != params.channels {
                    return Err(parse_err(vl, "wrong number of channels"));
                }
                for f in fields {
                    values.push(parse_field(vl, f)?);
                }
            }
            series.push(
                TimeSeries::from_flat(values, params.channels)?.with_label(format!("s{}", expect)),
            );
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing content after last basis series"));
        }
        Ok(Self { params, series })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_text(&text).map_err(|e| e.in_file(path))
    }
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, &format!("cannot parse {:?}", s)))
}

/// Embeds `x` as its DTW distances to every basis series. Components are
/// computed in parallel and gathered by index.
pub fn feature_map(x: &TimeSeries, basis: &BasisSet) -> Result<FeatureVector> {
    feature_map_counted(x, basis, None)
}

pub fn feature_map_counted(
    x: &TimeSeries,
    basis: &BasisSet,
    counters: Option<&Counters>,
) -> Result<FeatureVector> {
    if x.channels() != basis.channels() {
        return Err(Error::Dimension(format!(
            "series has {} channels, basis has {}",
            x.channels(),
            basis.channels()
        )));
    }
    let components = basis
        .series
        .par_iter()
        .map(|s| dtw_distance_counted(x, s, BandConstraint::None, counters))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureVector(components))
}

/// Sequential variant of [`feature_map`], used where the caller already
/// parallelizes at a coarser grain.
pub fn feature_map_sequential(
    x: &TimeSeries,
    basis: &BasisSet,
    counters: Option<&Counters>,
) -> Result<FeatureVector> {
    if x.channels() != basis.channels() {
        return Err(Error::Dimension(format!(
            "series has {} channels, basis has {}",
            x.channels(),
            basis.channels()
        )));
    }
    basis
        .series
        .iter()
        .map(|s| dtw_distance_counted(x, s, BandConstraint::None, counters))
        .collect::<Result<Vec<_>>>()
        .map(FeatureVector)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(count: usize, l_min: usize, l_max: usize, seed: u64) -> BasisParams {
        BasisParams {
            count,
            channels: 3,
            l_min,
            l_max,
            sigma2: 0.4,
            seed,
        }
    }

    #[test]
    fn default_experiment_shape() {
        let b = generate_basis(params(64, 20, 30, 1)).unwrap();
        assert_eq!(b.len(), 64);
        assert!(b
            .series()
            .iter()
            .all(|s| s.channels() == 3 && (20..=30).contains(&s.len())));
    }

    #[test]
    fn seeded_determinism() {
        let a = generate_basis(params(16, 3, 9, 42)).unwrap();
        let b = generate_basis(params(16, 3, 9, 42)).unwrap();
        assert_eq!(a, b);
        let c = generate_basis(params(16, 3, 9, 43)).unwrap();
        assert_ne!(a, c);
        // streams are per index: a prefix of a larger set is the smaller set
        let big = generate_basis(params(20, 3, 9, 42)).unwrap();
        assert_eq!(&big.series()[..16], a.series());
    }

    #[test]
    fn degenerate_length_range() {
        let b = generate_basis(params(1, 5, 5, 0)).unwrap();
        assert_eq!(b.series()[0].len(), 5);
    }

    #[test]
    fn bad_params() {
        assert!(generate_basis(params(4, 6, 5, 0)).is_err());
        assert!(generate_basis(params(0, 1, 5, 0)).is_err());
        let mut p = params(1, 1, 1, 0);
        p.sigma2 = 0.0;
        assert!(generate_basis(p).is_err());
    }

    #[test]
    fn sample_variance_close_to_sigma2() {
        let b = generate_basis(BasisParams {
            count: 200,
            channels: 2,
            l_min: 50,
            l_max: 50,
            sigma2: 0.4,
            seed: 9,
        })
        .unwrap();
        let all: Vec<f64> = b
            .series()
            .iter()
            .flat_map(|s| s.as_flat().to_vec())
            .collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {}", mean);
        assert!((var - 0.4).abs() < 0.02, "var {}", var);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let b = generate_basis(params(8, 2, 6, 5)).unwrap();
        let back = BasisSet::from_text(&b.to_text()).unwrap();
        assert_eq!(b, back);
    }

    #[test]
    fn text_rejects_truncation() {
        let b = generate_basis(params(2, 2, 3, 5)).unwrap();
        let text = b.to_text();
        let cut: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(BasisSet::from_text(&cut).is_err());
        assert!(BasisSet::from_text("").is_err());
    }

    #[test]
    fn feature_map_examples() {
        let x = TimeSeries::univariate(&[0.0, 1.0]).unwrap();
        let self_basis = BasisSet::from_series(vec![x.clone()], 1.0, 0).unwrap();
        assert_eq!(feature_map(&x, &self_basis).unwrap().0, vec![0.0]);

        let s = BasisSet::from_series(
            vec![
                TimeSeries::univariate(&[0.0]).unwrap(),
                TimeSeries::univariate(&[1.0]).unwrap(),
            ],
            1.0,
            0,
        )
        .unwrap();
        assert_eq!(feature_map(&x, &s).unwrap().0, vec![1.0, 1.0]);
    }

    #[test]
    fn feature_map_channel_mismatch() {
        let b = generate_basis(params(2, 2, 3, 5)).unwrap();
        let x = TimeSeries::univariate(&[0.0, 1.0]).unwrap();
        assert!(matches!(feature_map(&x, &b), Err(Error::Dimension(_))));
    }
}
