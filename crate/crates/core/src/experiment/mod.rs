//! Experiment configuration, single training runs, sweeps and CSV reports.

mod config;
mod presets;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::ConfigError;
use crate::oracle::OracleError;
use crate::ppo::{CheckpointError, TrainError};

pub use config::{config_to_toml, load_config, parse_config, save_config, ExperimentConfig};
pub use presets::{preset, PRESET_NAMES};
pub use run::{
    read_runs, report, run_sweep, run_train, summarize, DerivedRow, RunRecord, SummaryRow,
    SweepOptions, SweepSummary, EPOCH_COLUMNS, SUMMARY_COLUMNS,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown preset {0:?} (expected no1..no17)")]
    UnknownPreset(String),
    #[error("a sweep needs at least one config")]
    EmptySweep,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl ExperimentError {
    pub(crate) fn invalid(field: &'static str, reason: &str) -> Self {
        Self::Invalid {
            field,
            reason: reason.to_string(),
        }
    }
}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid { field, reason } => Self::Invalid { field, reason },
        }
    }
}

/// Baseline trains without the useless-action penalty; proposal with it.
/// Nothing else differs between the two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Proposal,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Baseline, Mode::Proposal];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Proposal => "proposal",
        }
    }

    pub fn penalty_enabled(self) -> bool {
        self == Mode::Proposal
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "proposal" => Ok(Mode::Proposal),
            _ => Err(format!("unknown mode {s:?} (expected baseline or proposal)")),
        }
    }
}

/// Geometric mean of positive values; `None` for an empty slice or any
/// non-positive entry.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    Some(mean_log.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geomean_identity() {
        assert!((geometric_mean(&[0.5, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((geometric_mean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(geometric_mean(&[]), None);
        assert_eq!(geometric_mean(&[1.0, 0.0]), None);
    }

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("naive".parse::<Mode>().is_err());
        assert!(!Mode::Baseline.penalty_enabled());
        assert!(Mode::Proposal.penalty_enabled());
    }
}
