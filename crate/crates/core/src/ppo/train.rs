use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::buffer::RolloutBuffer;
use super::net::{Params, PolicySpec};
use super::update::ppo_update;
use super::{sample_action, TrainError, TrainHyper};
use crate::env::{Action, AttackEnv, EnvConfig, EpochStats};
use crate::oracle::{replay_branches, AttackPlan, Trace};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Some epoch reached a correct rate of exactly 1.
    pub converged: bool,
    pub epochs_run: usize,
    pub epochs: Vec<EpochStats>,
    pub total_actions: u64,
    pub total_useless: u64,
    pub useless_ratio: f64,
    pub wall_time: f64,
    pub updates: usize,
    /// One greedy rollout per secret, each as a single-branch plan.
    pub extracted_plans: Vec<AttackPlan>,
    /// Oracle replay accuracy of `extracted_plans` read as one adaptive attack.
    pub plan_accuracy: f64,
}

/// Owns the environment, network and optimizer for one training run.
pub struct Trainer {
    env: AttackEnv,
    env_cfg: EnvConfig,
    hyper: TrainHyper,
    params: Params,
    adam: Adam,
    rng: ChaCha8Rng,
    mask: Vec<bool>,
}

impl Trainer {
    /// The environment is seeded with `env_cfg.seed + seed`; the policy
    /// initialization, action sampling and minibatch shuffles use `seed`.
    pub fn new(
        env_cfg: &EnvConfig,
        spec: &PolicySpec,
        hyper: &TrainHyper,
        seed: u64,
    ) -> Result<Self, TrainError> {
        hyper.validate()?;
        spec.validate()
            .map_err(|field| TrainError::Shape(format!("{field} must be positive")))?;
        if spec.obs_dim != env_cfg.obs_dim() || spec.n_actions != env_cfg.n_actions() {
            return Err(TrainError::Shape(format!(
                "policy is {}->{}, environment needs {}->{}",
                spec.obs_dim,
                spec.n_actions,
                env_cfg.obs_dim(),
                env_cfg.n_actions()
            )));
        }
        let mut cfg = env_cfg.clone();
        cfg.seed = env_cfg.seed.wrapping_add(seed);
        let env = AttackEnv::new(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(spec, &mut rng);
        Ok(Self {
            adam: Adam::new(params.len(), hyper.lr),
            mask: vec![true; spec.n_actions],
            env,
            env_cfg: env_cfg.clone(),
            hyper: hyper.clone(),
            params,
            rng,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn env(&self) -> &AttackEnv {
        &self.env
    }

    pub fn run(&mut self) -> Result<TrainReport, TrainError> {
        self.run_with(|_, _| {})
    }

    /// Trains until an epoch is fully correct or `max_epochs` epochs have
    /// run. `on_epoch` sees the 1-based epoch number and its stats.
    pub fn run_with<F>(&mut self, mut on_epoch: F) -> Result<TrainReport, TrainError>
    where
        F: FnMut(usize, &EpochStats),
    {
        let started = Instant::now();
        let obs_dim = self.env_cfg.obs_dim();
        let mut buffer = RolloutBuffer::new(obs_dim, self.hyper.rollout_len);
        let mut epochs: Vec<EpochStats> = Vec::new();
        let mut converged = false;
        let mut updates = 0;
        let mut obs = self.env.reset_episode();
        // Discard anything counted before training starts.
        self.env.epoch_stats();

        'training: loop {
            buffer.clear();
            while buffer.len() < self.hyper.rollout_len {
                let (logits, value) = self.params.forward(obs.as_slice());
                let (action, log_prob) = sample_action(&logits, &self.mask, &mut self.rng);
                let step = self.env.step_index(action)?;
                buffer.push(
                    obs.as_slice(),
                    action,
                    log_prob,
                    step.reward,
                    value,
                    step.done,
                    step.info.truncated,
                );
                obs = if step.done {
                    self.env.reset_episode()
                } else {
                    step.observation
                };
                if self.env.epoch_complete() {
                    let stats = self.env.epoch_stats();
                    on_epoch(epochs.len() + 1, &stats);
                    let perfect = stats.is_perfect();
                    epochs.push(stats);
                    if perfect {
                        converged = true;
                        break 'training;
                    }
                    if epochs.len() >= self.hyper.max_epochs {
                        break 'training;
                    }
                }
            }
            let (_, last_value) = self.params.forward(obs.as_slice());
            buffer.finish(last_value, self.hyper.gamma, self.hyper.gae_lambda);
            ppo_update(
                &buffer,
                &mut self.params,
                &mut self.adam,
                &self.hyper,
                &self.mask,
                &mut self.rng,
            )?;
            updates += 1;
        }
        self.env.flush_trace().ok();

        let total_actions: u64 = epochs.iter().map(|e| e.total_actions).sum();
        let total_useless: u64 = epochs.iter().map(|e| e.useless_actions).sum();
        let extracted_plans = extract_plans(&self.params, &self.env_cfg)?;
        let plan_accuracy = replay_branches(&extracted_plans, &self.env_cfg)?;
        Ok(TrainReport {
            converged,
            epochs_run: epochs.len(),
            total_actions,
            total_useless,
            useless_ratio: if total_actions > 0 {
                total_useless as f64 / total_actions as f64
            } else {
                0.0
            },
            epochs,
            wall_time: started.elapsed().as_secs_f64(),
            updates,
            extracted_plans,
            plan_accuracy,
        })
    }

    /// Starts writing a per-step trace CSV for the training environment.
    pub fn enable_trace<W: std::io::Write + Send + 'static>(&mut self, w: W) {
        self.env.enable_trace(w);
    }
}

pub fn train(
    env_cfg: &EnvConfig,
    spec: &PolicySpec,
    hyper: &TrainHyper,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    Trainer::new(env_cfg, spec, hyper, seed)?.run()
}

/// Index of the largest legal logit (first one on ties).
pub fn greedy_action(logits: &[f64], mask: &[bool]) -> usize {
    let mut best = None;
    for (i, (&l, &m)) in logits.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|(_, b)| l > b) {
            best = Some((i, l));
        }
    }
    best.expect("at least one legal action").0
}

/// Greedy rollout for every secret, each recorded as a plan whose single
/// decode entry maps the observed trace to the policy's guess. A rollout
/// that hits the step limit yields an empty decode table.
pub fn extract_plans(params: &Params, env_cfg: &EnvConfig) -> Result<Vec<AttackPlan>, TrainError> {
    let mut env = AttackEnv::new(env_cfg.clone())?;
    let mask = vec![true; env.legal_actions().len()];
    let mut plans = Vec::new();
    for secret in env_cfg.secret_domain() {
        let mut obs = env.reset_with_secret(secret);
        let mut plan = AttackPlan::default();
        let mut trace = Vec::new();
        loop {
            let (logits, _) = params.forward(obs.as_slice());
            let index = greedy_action(&logits, &mask);
            let action = env.legal_actions()[index];
            let step = env.step(action)?;
            match action {
                Action::Guess(guess) => {
                    plan.decode.push((Trace(trace), guess));
                    break;
                }
                _ => {
                    plan.prefix.push(action);
                    trace.push(step.info.observed);
                }
            }
            if step.done {
                break;
            }
            obs = step.observation;
        }
        plans.push(plan);
    }
    Ok(plans)
}
