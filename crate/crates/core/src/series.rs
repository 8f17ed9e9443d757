//! Multivariate time-series values, the Euclidean sample cost and ingestion of
//! `time,x,y,z` accelerometer recordings.
//!
//! Public indices are 1-based and inclusive, so `slice(1, len)` is the whole
//! series.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A real-valued series of `len` samples with `channels` values each.
///
/// Samples are stored contiguously (sample-major) so that the cost function
/// can borrow one sample as a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    channels: usize,
    timestamps: Option<Vec<f64>>,
    label: Option<String>,
}

impl TimeSeries {
    /// Builds a series from sample-major values (`len * channels` entries).
    pub fn from_flat(values: Vec<f64>, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Parameter(
                "a series needs at least one channel".into(),
            ));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput(
                "a series needs at least one sample".into(),
            ));
        }
        if !values.len().is_multiple_of(channels) {
            return Err(Error::Dimension(format!(
                "{} values do not split into samples of {} channels",
                values.len(),
                channels
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "sample {} channel {}",
                pos / channels + 1,
                pos % channels + 1
            )));
        }
        Ok(Self {
            values,
            channels,
            timestamps: None,
            label: None,
        })
    }

    /// Builds a series from a list of samples, each a vector of channel values.
    pub fn from_samples<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let channels = samples.first().map(|s| s.as_ref().len()).unwrap_or(0);
        if samples.is_empty() {
            return Err(Error::EmptyInput(
                "a series needs at least one sample".into(),
            ));
        }
        let mut values = Vec::with_capacity(samples.len() * channels);
        for (t, s) in samples.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != channels {
                return Err(Error::Dimension(format!(
                    "sample {} has {} channels, expected {}",
                    t + 1,
                    s.len(),
                    channels
                )));
            }
            values.extend_from_slice(s);
        }
        Self::from_flat(values, channels)
    }

    /// Single-channel series.
    pub fn univariate(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1)
    }

    pub fn with_timestamps(mut self, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} timestamps for {} samples",
                timestamps.len(),
                self.len()
            )));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("timestamp".into()));
        }
        if let Some(k) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Constraint(format!(
                "timestamps decrease at sample {}",
                k + 2
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    /// Always false; a series holds at least one sample.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Sample at 0-based position `t`.
    #[inline]
    pub(crate) fn sample0(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    /// Sample at 1-based position `t`.
    pub fn sample(&self, t: usize) -> Result<&[f64]> {
        if t == 0 || t > self.len() {
            return Err(Error::Bounds(format!(
                "sample {} outside 1..={}",
                t,
                self.len()
            )));
        }
        Ok(self.sample0(t - 1))
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.channels)
    }

    /// Inclusive 1-based subsequence `a..=b`; the result owns its data.
    pub fn slice(&self, a: usize, b: usize) -> Result<TimeSeries> {
        if a == 0 || a > b || b > self.len() {
            return Err(Error::Bounds(format!(
                "slice {}..={} of a series of length {}",
                a,
                b,
                self.len()
            )));
        }
        let d = self.channels;
        Ok(TimeSeries {
            values: self.values[(a - 1) * d..b * d].to_vec(),
            channels: d,
            timestamps: self.timestamps.as_ref().map(|ts| ts[a - 1..b].to_vec()),
            label: self.label.clone(),
        })
    }

    /// Per-channel z-normalization. Constant channels are centred only.
    pub fn z_normalized(&self) -> TimeSeries {
        let d = self.channels;
        let n = self.len() as f64;
        let mut out = self.values.clone();
        for c in 0..d {
            let mean = self.samples().map(|s| s[c]).sum::<f64>() / n;
            let var = self.samples().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for t in 0..self.len() {
                let v = &mut out[t * d + c];
                *v -= mean;
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
        TimeSeries {
            values: out,
            channels: d,
            timestamps: self.timestamps.clone(),
            label: self.label.clone(),
        }
    }

    pub(crate) fn ensure_same_channels(&self, other: &TimeSeries) -> Result<()> {
        if self.channels != other.channels {
            return Err(Error::Dimension(format!(
                "{} channels vs {} channels",
                self.channels, other.channels
            )));
        }
        Ok(())
    }

    /// Renders the series as `time,c1,...,cd` rows. Samples without timestamps
    /// get their 0-based index as time.
    pub fn to_uci_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 12);
        for (t, s) in self.samples().enumerate() {
            match &self.timestamps {
                Some(ts) => write!(out, "{}", ts[t]).unwrap(),
                None => write!(out, "{}", t).unwrap(),
            }
            for v in s {
                write!(out, ",{}", v).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_uci_file(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_uci_string())?;
        Ok(())
    }
}

/// Euclidean distance between two samples.
pub fn euclidean_cost(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Dimension(format!(
            "cost between samples of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(euclidean(x, y))
}

#[inline]
pub(crate) fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Parses the accelerometer row format: one `time,x,y,z` sample per line,
/// no header. Blank lines are skipped; any malformed row aborts.
pub fn parse_uci(text: &str) -> Result<TimeSeries> {
    parse_rows(text, Some(3))
}

/// Parses `time,c1,...,cd` rows. With `channels = None` the channel count is
/// taken from the first row and every later row must agree.
pub fn parse_rows(text: &str, channels: Option<usize>) -> Result<TimeSeries> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut width = channels.map(|d| d + 1);
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected || expected < 2 {
            return Err(Error::Parse {
                line: k + 1,
                msg: format!(
                    "expected {} comma-separated fields, found {}",
                    expected.max(2),
                    fields.len()
                ),
            });
        }
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: k + 1,
                msg: format!("field {} is not a number: {:?}", col + 1, f),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("field {} is not finite", col + 1),
                });
            }
            if col == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyInput("no samples".into()));
    }
    let d = width.map(|w| w - 1).unwrap_or(1);
    TimeSeries::from_flat(values, d)?.with_timestamps(times)
}

/// Loads a `time,c1,...,cd` file with any channel count; the file stem
/// becomes the label.
pub fn load_series_file(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    let ts = parse_rows(&text, None).map_err(|e| e.in_file(path))?;
    Ok(ts.with_label(file_label(path)))
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads one participant recording; the file stem becomes the label.
pub fn load_uci_file(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    let ts = parse_uci(&text).map_err(|e| e.in_file(path))?;
    Ok(ts.with_label(file_label(path)))
}

/// A set of recordings sharing one channel count.
#[derive(Debug, Clone)]
pub struct Dataset {
    streams: Vec<TimeSeries>,
    source_paths: Vec<PathBuf>,
}

impl Dataset {
    pub fn new(streams: Vec<TimeSeries>, source_paths: Vec<PathBuf>) -> Result<Self> {
        if streams.len() != source_paths.len() {
            return Err(Error::Dimension("one source path per stream".into()));
        }
        if let Some(first) = streams.first() {
            for s in &streams[1..] {
                first.ensure_same_channels(s)?;
            }
        }
        Ok(Self {
            streams,
            source_paths,
        })
    }

    /// Loads every regular file in `dir`, ordered by natural file-name order
    /// (`2.csv` before `10.csv`). Hidden files are ignored.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::from(e).in_file(dir))? {
            let path = entry?.path();
            let hidden = path
                .file_name()
                .map(|n| n.to_string_lossy().starts_with('.'))
                .unwrap_or(true);
            if path.is_file() && !hidden {
                paths.push(path);
            }
        }
        if paths.is_empty() {
            return Err(Error::EmptyInput(format!(
                "no recordings in {}",
                dir.display()
            )));
        }
        paths.sort_by_key(|a| natural_key(a));
        let streams = paths
            .iter()
            .map(load_uci_file)
            .collect::<Result<Vec<_>>>()?;
        Self::new(streams, paths)
    }

    pub fn streams(&self) -> &[TimeSeries] {
        &self.streams
    }

    pub fn source_paths(&self) -> &[PathBuf] {
        &self.source_paths
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn channels(&self) -> Option<usize> {
        self.streams.first().map(TimeSeries::channels)
    }
}

fn natural_key(path: &Path) -> (u64, String) {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let digits: String = name.chars().take_while(char::is_ascii_digit).collect();
    let num = digits.parse().unwrap_or(u64::MAX);
    (num, name)
}
