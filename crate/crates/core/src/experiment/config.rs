//! TOML experiment files.
//!
//! ```toml
//! name = "no1"
//! repeats = 10
//! output_dir = "results"
//!
//! [env]
//! preset = "no1"          # optional; keys below override the preset
//! attacker_addrs = [4, 7] # inclusive bounds, [] for none
//! flush_enabled = false
//!
//! [rewards]
//! r_useless = -0.01
//!
//! [policy]
//! hidden_units = 256
//!
//! [hyper]
//! lr = 3e-4
//! ```
//!
//! Unknown keys are rejected everywhere. Without a preset, `[env]` must give
//! `hierarchy`, `victim_addrs` and `attacker_addrs`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{preset, ExperimentError};
use crate::cache::{HierarchyConfig, SnapshotScope};
use crate::env::{default_max_episode_len, AddrRange, EnvConfig, RewardConfig};
use crate::ppo::{Activation, PolicySpec, TrainHyper};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Identifies the configuration in reports.
    pub name: String,
    pub env: EnvConfig,
    pub policy: PolicySpec,
    pub hyper: TrainHyper,
    pub repeats: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for a named preset, or `None` for an unknown name.
    pub fn from_preset(name: &str) -> Option<Self> {
        let env = preset(name)?;
        Some(Self {
            name: name.to_string(),
            policy: PolicySpec::new(env.obs_dim(), env.n_actions()),
            env,
            hyper: TrainHyper::default(),
            repeats: 10,
            output_dir: PathBuf::from("results"),
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.repeats == 0 {
            return Err(ExperimentError::invalid("repeats", "must be at least 1"));
        }
        self.env.validate()?;
        self.policy
            .validate()
            .map_err(|field| ExperimentError::invalid(field, "must be positive"))?;
        if self.policy.obs_dim != self.env.obs_dim() || self.policy.n_actions != self.env.n_actions() {
            return Err(ExperimentError::invalid(
                "policy",
                "input/output sizes do not match the environment",
            ));
        }
        self.hyper.validate()?;
        Ok(())
    }
}

/// Inclusive `[lo, hi]`, or `[]` for an empty range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
struct RangeBounds(Vec<u64>);

impl RangeBounds {
    fn to_range(&self, field: &'static str) -> Result<AddrRange, ExperimentError> {
        match self.0.as_slice() {
            [] => Ok(AddrRange::empty()),
            [lo, hi] if lo <= hi => Ok(AddrRange::inclusive(*lo, *hi)),
            _ => Err(ExperimentError::invalid(field, "expected [] or [lo, hi] with lo <= hi")),
        }
    }

    fn from_range(r: &AddrRange) -> Self {
        if r.is_empty() {
            Self(Vec::new())
        } else {
            Self(vec![r.start, r.end - 1])
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    victim_addrs: Option<RangeBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attacker_addrs: Option<RangeBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flush_enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    useless_penalty_enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_scope: Option<SnapshotScope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_episode_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epoch_actions: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hierarchy: Option<HierarchyConfig>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden_units: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    activation: Option<Activation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shared_trunk: Option<bool>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    env: EnvSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    rewards: Option<RewardConfig>,
    #[serde(default)]
    policy: PolicySection,
    #[serde(skip_serializing_if = "Option::is_none")]
    hyper: Option<TrainHyper>,
}

fn missing(field: &'static str) -> ExperimentError {
    ExperimentError::invalid(field, "required when no preset is given")
}

fn build_env(section: EnvSection, rewards: Option<RewardConfig>) -> Result<EnvConfig, ExperimentError> {
    let base = match &section.preset {
        Some(name) => Some(preset(name).ok_or_else(|| ExperimentError::UnknownPreset(name.clone()))?),
        None => None,
    };
    let hierarchy = match (section.hierarchy, &base) {
        (Some(h), _) => h,
        (None, Some(b)) => b.hierarchy.clone(),
        (None, None) => return Err(missing("hierarchy")),
    };
    let victim = match (&section.victim_addrs, &base) {
        (Some(r), _) => r.to_range("victim_addrs")?,
        (None, Some(b)) => b.victim_addrs,
        (None, None) => return Err(missing("victim_addrs")),
    };
    let attacker = match (&section.attacker_addrs, &base) {
        (Some(r), _) => r.to_range("attacker_addrs")?,
        (None, Some(b)) => b.attacker_addrs,
        (None, None) => return Err(missing("attacker_addrs")),
    };
    let flush = section
        .flush_enabled
        .or(base.as_ref().map(|b| b.flush_enabled))
        .unwrap_or(false);
    let mut env = EnvConfig::new(hierarchy, victim, attacker, flush);
    if let Some(b) = &base {
        env.epoch_actions = b.epoch_actions;
        env.seed = b.seed;
    }
    // The episode bound follows the attacker range unless set explicitly.
    env.max_episode_len = section
        .max_episode_len
        .unwrap_or_else(|| default_max_episode_len(&env.attacker_addrs));
    if let Some(v) = section.useless_penalty_enabled {
        env.useless_penalty_enabled = v;
    }
    if let Some(v) = section.snapshot_scope {
        env.snapshot_scope = v;
    }
    if let Some(v) = section.epoch_actions {
        env.epoch_actions = v;
    }
    if let Some(v) = section.seed {
        env.seed = v;
    }
    if let Some(r) = rewards {
        env.rewards = r;
    }
    Ok(env)
}

/// Parses and validates an experiment file's contents. `default_name` is
/// used when the file has neither `name` nor `env.preset`.
pub fn parse_config(text: &str, default_name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let file: ExperimentFile = toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    let name = file
        .name
        .or_else(|| file.env.preset.clone())
        .unwrap_or_else(|| default_name.to_string());
    let env = build_env(file.env, file.rewards)?;
    let mut policy = PolicySpec::new(env.obs_dim(), env.n_actions());
    if let Some(v) = file.policy.hidden_units {
        policy.hidden_units = v;
    }
    if let Some(v) = file.policy.activation {
        policy.activation = v;
    }
    if let Some(v) = file.policy.shared_trunk {
        policy.shared_trunk = v;
    }
    let cfg = ExperimentConfig {
        name,
        env,
        policy,
        hyper: file.hyper.unwrap_or_default(),
        repeats: file.repeats.unwrap_or(10),
        output_dir: file.output_dir.unwrap_or_else(|| PathBuf::from("results")),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("config");
    parse_config(&text, stem)
}

/// Fully expanded form (no preset) that loads back to an equal config.
pub fn config_to_toml(cfg: &ExperimentConfig) -> String {
    let env = &cfg.env;
    let file = ExperimentFile {
        name: Some(cfg.name.clone()),
        repeats: Some(cfg.repeats),
        output_dir: Some(cfg.output_dir.clone()),
        env: EnvSection {
            preset: None,
            victim_addrs: Some(RangeBounds::from_range(&env.victim_addrs)),
            attacker_addrs: Some(RangeBounds::from_range(&env.attacker_addrs)),
            flush_enabled: Some(env.flush_enabled),
            useless_penalty_enabled: Some(env.useless_penalty_enabled),
            snapshot_scope: Some(env.snapshot_scope),
            max_episode_len: Some(env.max_episode_len),
            epoch_actions: Some(env.epoch_actions),
            seed: Some(env.seed),
            hierarchy: Some(env.hierarchy.clone()),
        },
        rewards: Some(env.rewards.clone()),
        policy: PolicySection {
            hidden_units: Some(cfg.policy.hidden_units),
            activation: Some(cfg.policy.activation),
            shared_trunk: Some(cfg.policy.shared_trunk),
        },
        hyper: Some(cfg.hyper.clone()),
    };
    toml::to_string(&file).expect("experiment config serializes")
}

pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<(), ExperimentError> {
    std::fs::write(path, config_to_toml(cfg))?;
    Ok(())
}
