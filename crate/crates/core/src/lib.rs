//! Time-series pattern queries under dynamic time warping.
//!
//! * [`dtw`]: exact multivariate DTW with optional Sakoe-Chiba band.
//! * [`subseq`]: subsequence DTW and threshold-based repetition search.
//! * [`embed`]: random basis series and the DTW feature map.
//! * [`kernel`]: RBF kernel distance on embeddings and length-scale calibration.
//! * [`bayesopt`]: surrogate-driven search for the best window under the
//!   kernel distance.
//! * [`ident`]: user identification from walking recordings with either
//!   method.

pub mod bayesopt;
pub mod counters;
pub mod dtw;
pub mod embed;
pub mod error;
mod gp;
pub mod ident;
pub mod kernel;
pub mod series;
pub mod subseq;

pub use counters::{CounterSnapshot, Counters};
pub use error::{Error, Result};
pub use series::{euclidean_cost, load_series_file, load_uci_file, Dataset, TimeSeries};
