//! Run configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "curvcrb", version, about = "Curvature-corrected Cramér-Rao bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Geometry report (J, G, Gamma, b, G_N, C) as JSON.
    Geometry,
    /// Directional bound for one direction `--v`.
    Bound,
    /// Directional bounds for `--count` random unit directions, as CSV.
    Sweep,
    /// Solve and verify the matrix-correction certificate.
    Sdp,
    /// Check all bounds against the estimator's covariance.
    Validate,
    /// Computed versus closed-form values for the curved Gaussian example.
    PaperExample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    /// X ~ N((θ₁, θ₂, α θ₁²), σ² I₃) with the gamma estimator.
    CurvedGaussian,
    /// X ~ N((θ, α θ²), σ² I₂) with the gamma estimator.
    #[value(name = "curved-gaussian-1d")]
    #[serde(rename = "curved-gaussian-1d")]
    CurvedGaussian1d,
    /// X ~ N(A θ, σ² I) with least squares.
    LinearGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendName {
    Closed,
    Gh,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyName {
    /// Rank-one normal Gram `c e₁e₁ᵀ` with error pairings `a` on the first pair.
    Remark3,
    /// Zero normal Gram: every correction vanishes.
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceName {
    Auto,
    Empirical,
}

/// Every setting, each optional. Keys match the long flag names.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub model: Option<ModelName>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<Vec<f64>>,
    /// Rows of the design matrix of `linear-gaussian`.
    pub design: Option<Vec<Vec<f64>>>,
    pub v: Option<Vec<f64>>,
    pub backend: Option<BackendName>,
    pub gh_order: Option<usize>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub verify_samples: Option<usize>,
    pub covariance: Option<CovarianceName>,
    pub out: Option<PathBuf>,
    pub toy: Option<ToyName>,
    pub a: Option<Vec<f64>>,
    pub c: Option<f64>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// TOML file with any of the settings below; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelName>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Comma-separated parameter point.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Comma-separated direction.
    #[arg(long = "v", global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendName>,
    #[arg(long, global = true)]
    pub gh_order: Option<usize>,
    /// Draws for the Monte Carlo backend and for the sampled covariance.
    #[arg(long, global = true)]
    pub mc_samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directions in a sweep.
    #[arg(long, global = true)]
    pub count: Option<usize>,
    /// Directions used to verify a certificate.
    #[arg(long, global = true)]
    pub verify_samples: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub covariance: Option<CovarianceName>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub toy: Option<ToyName>,
    #[arg(long = "a", global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    #[arg(long = "c", global = true, allow_hyphen_values = true)]
    pub c: Option<f64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Loads `--config` if given, then applies every flag that was set.
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        cfg.overlay(flags);
        Ok(cfg)
    }

    pub fn overlay(&mut self, f: &Flags) {
        fn set<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        set(&mut self.model, &f.model);
        set(&mut self.sigma, &f.sigma);
        set(&mut self.alpha, &f.alpha);
        set(&mut self.gamma, &f.gamma);
        set(&mut self.theta, &f.theta);
        set(&mut self.v, &f.v);
        set(&mut self.backend, &f.backend);
        set(&mut self.gh_order, &f.gh_order);
        set(&mut self.mc_samples, &f.mc_samples);
        set(&mut self.seed, &f.seed);
        set(&mut self.count, &f.count);
        set(&mut self.verify_samples, &f.verify_samples);
        set(&mut self.covariance, &f.covariance);
        set(&mut self.out, &f.out);
        set(&mut self.toy, &f.toy);
        set(&mut self.a, &f.a);
        set(&mut self.c, &f.c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::from_toml("model = \"curved-gaussian\"\nsigma = 2.0\ngh-order = 8\n").unwrap();
        let flags = Flags {
            sigma: Some(0.5),
            ..Flags::default()
        };
        cfg.overlay(&flags);
        assert_eq!(cfg.sigma, Some(0.5));
        assert_eq!(cfg.gh_order, Some(8));
        assert_eq!(cfg.model, Some(ModelName::CurvedGaussian));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml("sigmaa = 1.0"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_toml("model = \"circle\""), Err(CliError::Config(_))));
    }

    #[test]
    fn negative_and_list_flags_parse() {
        let cli = Cli::try_parse_from(["curvcrb", "bound", "--theta", "-0.5,1", "--v", "1,-2", "--sigma", "-1"]).unwrap();
        assert_eq!(cli.command, Command::Bound);
        assert_eq!(cli.flags.theta, Some(vec![-0.5, 1.0]));
        assert_eq!(cli.flags.v, Some(vec![1.0, -2.0]));
        assert_eq!(cli.flags.sigma, Some(-1.0));
    }
}
