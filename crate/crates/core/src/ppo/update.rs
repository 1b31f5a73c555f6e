//! Clipped-surrogate PPO loss, its analytic gradient, and the update pass.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::buffer::RolloutBuffer;
use super::net::Params;
use super::{masked_softmax, TrainError, TrainHyper};

/// One training example for the loss.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct LossCoeffs {
    pub clip_ratio: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl From<&TrainHyper> for LossCoeffs {
    fn from(h: &TrainHyper) -> Self {
        Self {
            clip_ratio: h.clip_ratio,
            value_coef: h.value_coef,
            entropy_coef: h.entropy_coef,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossSummary {
    /// Mean clipped surrogate objective (to be maximized).
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// `-surrogate + value_coef * value_loss - entropy_coef * entropy`.
    pub total: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// Minibatch loss; when `grad` is given, its gradient is added into it.
pub fn loss_and_grad(
    params: &Params,
    batch: &[Sample],
    mask: &[bool],
    coeffs: LossCoeffs,
    mut grad: Option<&mut [f64]>,
) -> LossSummary {
    let n = batch.len() as f64;
    let (lo, hi) = (1.0 - coeffs.clip_ratio, 1.0 + coeffs.clip_ratio);
    let mut summary = LossSummary::default();
    let mut dlogits = vec![0.0; mask.len()];

    for s in batch {
        let cache = params.forward_cached(s.obs);
        let (probs, log_probs) = masked_softmax(&cache.logits, mask);
        let logp = log_probs[s.action];
        let ratio = (logp - s.old_log_prob).exp();
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(lo, hi) * s.advantage;
        let surrogate = unclipped.min(clipped);
        let entropy: f64 = probs
            .iter()
            .zip(&log_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, lp)| -p * lp)
            .sum();
        let verr = cache.value - s.ret;

        summary.surrogate += surrogate / n;
        summary.value_loss += verr * verr / n;
        summary.entropy += entropy / n;
        summary.mean_ratio += ratio / n;
        if ratio < lo || ratio > hi {
            summary.clip_fraction += 1.0 / n;
        }

        if let Some(grad) = grad.as_deref_mut() {
            // d(-surrogate)/d(logp): only the unclipped branch carries gradient.
            let d_logp = if unclipped <= clipped {
                -unclipped / n
            } else {
                0.0
            };
            for (j, d) in dlogits.iter_mut().enumerate() {
                if !mask[j] {
                    *d = 0.0;
                    continue;
                }
                let p = probs[j];
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                let d_entropy = -p * (log_probs[j] + entropy);
                *d = d_logp * (onehot - p) - coeffs.entropy_coef * d_entropy / n;
            }
            let dvalue = coeffs.value_coef * 2.0 * verr / n;
            params.backward(s.obs, &cache, &dlogits, dvalue, grad);
        }
    }
    summary.total =
        -summary.surrogate + coeffs.value_coef * summary.value_loss - coeffs.entropy_coef * summary.entropy;
    summary
}

/// Summary of one `ppo_update` call, averaged over its minibatches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateSummary {
    pub first: LossSummary,
    pub mean: LossSummary,
    pub minibatches: usize,
}

/// Runs `ppo_epochs_per_update` passes of shuffled minibatches over a
/// finished buffer, stepping Adam after each minibatch.
pub fn ppo_update(
    buffer: &RolloutBuffer,
    params: &mut Params,
    adam: &mut Adam,
    hyper: &TrainHyper,
    mask: &[bool],
    rng: &mut ChaCha8Rng,
) -> Result<UpdateSummary, TrainError> {
    assert_eq!(buffer.advantages.len(), buffer.len(), "buffer not finished");
    let coeffs = LossCoeffs::from(hyper);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut grad = vec![0.0; params.len()];
    let mut out = UpdateSummary::default();
    for _ in 0..hyper.ppo_epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(hyper.minibatch) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| Sample {
                    obs: buffer.obs(i),
                    action: buffer.actions[i],
                    old_log_prob: buffer.log_probs[i],
                    advantage: buffer.advantages[i],
                    ret: buffer.returns[i],
                })
                .collect();
            grad.fill(0.0);
            let s = loss_and_grad(params, &batch, mask, coeffs, Some(&mut grad));
            if !s.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite {
                    minibatch: out.minibatches,
                    total: s.total,
                    value_loss: s.value_loss,
                });
            }
            if out.minibatches == 0 {
                out.first = s;
            }
            out.minibatches += 1;
            accumulate(&mut out.mean, &s);
            adam.step(&mut params.data, &grad);
        }
    }
    let k = out.minibatches.max(1) as f64;
    out.mean.surrogate /= k;
    out.mean.value_loss /= k;
    out.mean.entropy /= k;
    out.mean.total /= k;
    out.mean.clip_fraction /= k;
    out.mean.mean_ratio /= k;
    Ok(out)
}

fn accumulate(acc: &mut LossSummary, s: &LossSummary) {
    acc.surrogate += s.surrogate;
    acc.value_loss += s.value_loss;
    acc.entropy += s.entropy;
    acc.total += s.total;
    acc.clip_fraction += s.clip_fraction;
    acc.mean_ratio += s.mean_ratio;
}
