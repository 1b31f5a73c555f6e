//! Self-contained PPO: MLP actor-critic, GAE, clipped surrogate, Adam, and
//! the epoch-driven training loop.

mod adam;
mod buffer;
mod checkpoint;
mod gae;
mod net;
mod train;
mod update;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::Adam;
pub use buffer::RolloutBuffer;
pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use gae::{compute_gae, normalize};
pub use net::{Activation, ForwardCache, Params, PolicySpec};
pub use train::{extract_plans, greedy_action, train, TrainReport, Trainer};
pub use update::{loss_and_grad, ppo_update, LossCoeffs, LossSummary, Sample, UpdateSummary};

use crate::env::EnvError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite loss in minibatch {minibatch}: total={total}, value_loss={value_loss}")]
    NonFinite {
        minibatch: usize,
        total: f64,
        value_loss: f64,
    },
    #[error("invalid hyperparameter {field}: {reason}")]
    Hyper { field: &'static str, reason: String },
    #[error("policy shape does not match the environment: {0}")]
    Shape(String),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub gamma: f64,
    pub lr: f64,
    pub clip_ratio: f64,
    /// Environment steps collected per update.
    pub rollout_len: usize,
    pub minibatch: usize,
    pub gae_lambda: f64,
    pub ppo_epochs_per_update: usize,
    pub value_coef: f64,
    /// 0.01 tends to stall on no1: the policy either locks into a partial
    /// prime+probe or learns to guess on the first step.
    pub entropy_coef: f64,
    pub max_epochs: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 3e-4,
            clip_ratio: 0.2,
            rollout_len: 2048,
            minibatch: 64,
            gae_lambda: 0.95,
            ppo_epochs_per_update: 4,
            value_coef: 0.5,
            entropy_coef: 0.05,
            max_epochs: 999,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, reason: &str| {
            Err(TrainError::Hyper {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must be in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda", "must be in (0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(self.clip_ratio > 0.0) {
            return bad("clip_ratio", "must be positive");
        }
        if self.rollout_len == 0 {
            return bad("rollout_len", "must be positive");
        }
        if self.minibatch == 0 || !self.rollout_len.is_multiple_of(self.minibatch) {
            return bad("minibatch", "must divide rollout_len");
        }
        if self.ppo_epochs_per_update == 0 {
            return bad("ppo_epochs_per_update", "must be positive");
        }
        if !(self.value_coef >= 0.0) {
            return bad("value_coef", "must be non-negative");
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef", "must be non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be positive");
        }
        Ok(())
    }
}

/// Softmax restricted to legal actions; illegal entries get probability 0
/// and log-probability `-inf`.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(logits.len(), mask.len(), "logits and mask differ in length");
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max > f64::NEG_INFINITY, "no legal action");
    let sum: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| (l - max).exp())
        .sum();
    let lse = max + sum.ln();
    let mut probs = vec![0.0; logits.len()];
    let mut log_probs = vec![f64::NEG_INFINITY; logits.len()];
    for i in 0..logits.len() {
        if mask[i] {
            log_probs[i] = logits[i] - lse;
            probs[i] = log_probs[i].exp();
        }
    }
    (probs, log_probs)
}

/// Samples an action index from the masked softmax of `logits`.
///
/// Panics when no action is legal.
pub fn sample_action<R: Rng>(logits: &[f64], mask: &[bool], rng: &mut R) -> (usize, f64) {
    let (probs, log_probs) = masked_softmax(logits, mask);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        chosen = Some(i);
        acc += p;
        if u < acc {
            break;
        }
    }
    let i = chosen.expect("at least one legal action");
    (i, log_probs[i])
}
