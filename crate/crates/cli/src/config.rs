//! Run configuration. Precedence: command-line flags, then a flat
//! `key = value` file, then the built-in defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use gaitwarp::bayesopt::BoConfig;
use gaitwarp::embed::BasisParams;

/// Resolved settings for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub r: usize,
    pub d_min: usize,
    pub d_max: usize,
    pub nu: f64,
    pub sigma2: f64,
    pub tau: f64,
    pub window: usize,
    pub seed: u64,
    pub budget: usize,
    pub init_design: usize,
    pub exhaustive_threshold: usize,
    pub max_candidates: usize,
    pub exclusion_radius: Option<usize>,
    pub band_width: Option<usize>,
    pub z_norm: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bo = BoConfig::default();
        Self {
            r: 64,
            d_min: 20,
            d_max: 30,
            nu: 0.5,
            sigma2: 0.4,
            tau: 1.0,
            window: gaitwarp::ident::DEFAULT_WINDOW,
            seed: 0,
            budget: bo.budget,
            init_design: bo.init_design,
            exhaustive_threshold: bo.exhaustive_threshold,
            max_candidates: bo.max_candidates,
            exclusion_radius: None,
            band_width: None,
            z_norm: false,
        }
    }
}

/// Keys accepted in a config file; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(alias = "R")]
    pub r: Option<usize>,
    #[serde(alias = "lmin")]
    pub d_min: Option<usize>,
    #[serde(alias = "lmax")]
    pub d_max: Option<usize>,
    pub nu: Option<f64>,
    pub sigma2: Option<f64>,
    pub tau: Option<f64>,
    pub window: Option<usize>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub init_design: Option<usize>,
    pub exhaustive_threshold: Option<usize>,
    pub max_candidates: Option<usize>,
    pub exclusion_radius: Option<usize>,
    pub band: Option<usize>,
    pub z_norm: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Flags shared by the commands that take run parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// Number of random basis series.
    #[arg(long = "R")]
    pub r: Option<usize>,
    /// Minimum basis series length.
    #[arg(long)]
    pub lmin: Option<usize>,
    /// Maximum basis series length.
    #[arg(long)]
    pub lmax: Option<usize>,
    /// Admitted relative deviation of a match length from the pattern length.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Variance of the basis generator.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Repetition threshold for subsequence search.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Reference window length in samples.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Objective evaluations per kernel search.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub init_design: Option<usize>,
    #[arg(long)]
    pub exhaustive_threshold: Option<usize>,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    /// Positions masked on each side of a found repetition.
    #[arg(long)]
    pub exclusion_radius: Option<usize>,
    /// Sakoe-Chiba band width for global DTW.
    #[arg(long)]
    pub band: Option<usize>,
    /// Z-normalize every channel before any distance computation.
    #[arg(long)]
    pub z_norm: bool,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

impl RunFlags {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let d = RunConfig::default();
        let cfg = RunConfig {
            r: self.r.or(file.r).unwrap_or(d.r),
            d_min: self.lmin.or(file.d_min).unwrap_or(d.d_min),
            d_max: self.lmax.or(file.d_max).unwrap_or(d.d_max),
            nu: self.nu.or(file.nu).unwrap_or(d.nu),
            sigma2: self.sigma2.or(file.sigma2).unwrap_or(d.sigma2),
            tau: self.tau.or(file.tau).unwrap_or(d.tau),
            window: self.window.or(file.window).unwrap_or(d.window),
            seed: self.seed.or(file.seed).unwrap_or(d.seed),
            budget: self.budget.or(file.budget).unwrap_or(d.budget),
            init_design: self
                .init_design
                .or(file.init_design)
                .unwrap_or(d.init_design),
            exhaustive_threshold: self
                .exhaustive_threshold
                .or(file.exhaustive_threshold)
                .unwrap_or(d.exhaustive_threshold),
            max_candidates: self
                .max_candidates
                .or(file.max_candidates)
                .unwrap_or(d.max_candidates),
            exclusion_radius: self.exclusion_radius.or(file.exclusion_radius),
            band_width: self.band.or(file.band),
            z_norm: self.z_norm || file.z_norm.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            bail!("R must be at least 1");
        }
        if self.d_min == 0 || self.d_min > self.d_max {
            bail!("need 1 <= lmin <= lmax, got {}..{}", self.d_min, self.d_max);
        }
        if !(0.0..1.0).contains(&self.nu) {
            bail!("nu must lie in [0, 1), got {}", self.nu);
        }
        if !(self.sigma2 > 0.0) {
            bail!("sigma2 must be positive, got {}", self.sigma2);
        }
        if !(self.tau >= 0.0) {
            bail!("tau must be non-negative, got {}", self.tau);
        }
        if self.window == 0 {
            bail!("window must be positive");
        }
        if self.init_design == 0 || self.init_design >= self.budget {
            bail!(
                "need 0 < init_design < budget, got {} and {}",
                self.init_design,
                self.budget
            );
        }
        if self.exclusion_radius == Some(0) {
            bail!("exclusion radius must be positive");
        }
        Ok(())
    }

    pub fn basis_params(&self, channels: usize) -> BasisParams {
        BasisParams {
            count: self.r,
            channels,
            l_min: self.d_min,
            l_max: self.d_max,
            sigma2: self.sigma2,
            seed: self.seed,
        }
    }

    pub fn bo(&self) -> BoConfig {
        BoConfig {
            budget: self.budget,
            init_design: self.init_design,
            seed: self.seed,
            exhaustive_threshold: self.exhaustive_threshold,
            max_candidates: self.max_candidates,
        }
    }

    /// One `key = value` line per setting, readable back as a config file.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "R = {}\nd_min = {}\nd_max = {}\nnu = {}\nsigma2 = {}\ntau = {}\nwindow = {}\nseed = {}\n\
             budget = {}\ninit_design = {}\nexhaustive_threshold = {}\nmax_candidates = {}\nz_norm = {}\n",
            self.r,
            self.d_min,
            self.d_max,
            self.nu,
            self.sigma2,
            self.tau,
            self.window,
            self.seed,
            self.budget,
            self.init_design,
            self.exhaustive_threshold,
            self.max_candidates,
            self.z_norm
        );
        if let Some(r) = self.exclusion_radius {
            out.push_str(&format!("exclusion_radius = {}\n", r));
        }
        if let Some(b) = self.band_width {
            out.push_str(&format!("band = {}\n", b));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_experiment_settings() {
        let c = RunFlags::default().resolve().unwrap();
        assert_eq!(
            (c.r, c.d_min, c.d_max, c.nu, c.sigma2),
            (64, 20, 30, 0.5, 0.4)
        );
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "R = 8\nseed = 3\nnu = 0.25\n").unwrap();
        let flags = RunFlags {
            r: Some(16),
            config: Some(path),
            ..RunFlags::default()
        };
        let c = flags.resolve().unwrap();
        assert_eq!((c.r, c.seed, c.nu), (16, 3, 0.25));
    }

    #[test]
    fn describe_round_trips() {
        let c = RunConfig {
            exclusion_radius: Some(4),
            band_width: Some(2),
            ..RunConfig::default()
        };
        let f = FileConfig::parse(&c.describe()).unwrap();
        assert_eq!(f.r, Some(64));
        assert_eq!(f.exclusion_radius, Some(4));
        assert_eq!(f.band, Some(2));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(FileConfig::parse("bogus = 1").is_err());
        let flags = RunFlags {
            nu: Some(1.5),
            ..RunFlags::default()
        };
        assert!(flags.resolve().is_err());
        let flags = RunFlags {
            lmin: Some(40),
            ..RunFlags::default()
        };
        assert!(flags.resolve().is_err());
    }
}
