use super::gae::{compute_gae, normalize};

/// Transitions collected between two updates.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    obs_dim: usize,
    obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncated: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, capacity: usize) -> Self {
        Self {
            obs_dim,
            obs: Vec::with_capacity(obs_dim * capacity),
            ..Default::default()
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        obs: &[f64],
        action: usize,
        log_prob: f64,
        reward: f64,
        value: f64,
        done: bool,
        truncated: bool,
    ) {
        assert_eq!(obs.len(), self.obs_dim);
        self.obs.extend_from_slice(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
        self.truncated.push(truncated);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Fills advantages (normalized) and returns. Episode truncation by the
    /// step limit is terminal, so only a rollout cut mid-episode bootstraps
    /// from `last_value`.
    pub fn finish(&mut self, last_value: f64, gamma: f64, lambda: f64) {
        let (mut adv, ret) = compute_gae(
            &self.rewards,
            &self.values,
            &self.dones,
            last_value,
            gamma,
            lambda,
        );
        normalize(&mut adv);
        self.advantages = adv;
        self.returns = ret;
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
        self.truncated.clear();
        self.advantages.clear();
        self.returns.clear();
    }
}
