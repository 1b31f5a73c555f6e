//! Fixtures shared by the throughput benches.

use cacheprobe::ppo::{sample_action, Params, PolicySpec, RolloutBuffer};
use cacheprobe::{AttackEnv, EnvConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Address stream drawn uniformly from `0..span`.
pub fn address_stream(len: usize, span: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(0..span)).collect()
}

/// Freshly initialised network sized for `cfg`.
pub fn network_for(cfg: &EnvConfig, hidden: usize, seed: u64) -> Params {
    let spec = PolicySpec::new(cfg.obs_dim(), cfg.n_actions()).with_hidden(hidden);
    Params::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A finished rollout of `len` steps collected with `params`.
pub fn rollout(cfg: &EnvConfig, params: &Params, len: usize, seed: u64) -> RolloutBuffer {
    let mut env = AttackEnv::new(cfg.clone()).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = vec![true; cfg.n_actions()];
    let mut buffer = RolloutBuffer::new(cfg.obs_dim(), len);
    let mut obs = env.reset_episode();
    for _ in 0..len {
        let (logits, value) = params.forward(obs.as_slice());
        let (action, log_prob) = sample_action(&logits, &mask, &mut rng);
        let step = env.step_index(action).expect("legal index");
        buffer.push(obs.as_slice(), action, log_prob, step.reward, value, step.done, step.info.truncated);
        obs = if step.done { env.reset_episode() } else { step.observation };
    }
    let (_, last) = params.forward(obs.as_slice());
    buffer.finish(last, 0.99, 0.95);
    buffer
}
