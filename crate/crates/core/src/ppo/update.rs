use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::{evaluate_loss, LossTerms};
use super::rollout::RolloutBatch;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::losses::SymmetryHook;
use crate::nn::{Adam, GaussianPolicy, PolicySnapshot, SnapshotTag, ValueFunction};

/// Separate optimizers: the policy and the critic share no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl Optimizers {
    pub fn new(policy: &GaussianPolicy, value: &ValueFunction, cfg: &PpoConfig) -> Self {
        Self {
            policy: Adam::new(policy.num_params(), cfg.adam()),
            value: Adam::new(value.num_params(), cfg.adam()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub optimizer_steps: usize,
    pub mean_total_loss: f64,
    pub mean_surrogate: f64,
    pub mean_value_loss: f64,
    pub mean_symmetry_loss: f64,
    pub mean_clip_fraction: f64,
    pub mean_approx_kl: f64,
}

/// Runs `epochs` shuffled passes of mini-batch steps over `batch`.
///
/// `last` is re-captured after every optimizer step. On an aborted step the
/// parameters stay at the last valid state and the error is returned.
pub fn update_epochs<R: Rng>(
    batch: &RolloutBatch,
    policy: &mut GaussianPolicy,
    value: &mut ValueFunction,
    opts: &mut Optimizers,
    cfg: &PpoConfig,
    hook: &SymmetryHook,
    rng: &mut R,
    last: &mut PolicySnapshot,
) -> Result<UpdateStats> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyInput("empty rollout batch".into()));
    }
    let mb = cfg.minibatch_size.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let eval = evaluate_loss(batch, chunk, policy, value, cfg, hook, LossTerms::ALL)?;
            let finite = eval.policy_grad.mean.iter().chain(&eval.policy_grad.log_sigma).chain(&eval.value_grad).all(|g| g.is_finite());
            if !finite {
                return Err(Error::AbortUpdate("non-finite gradient".into()));
            }
            policy.apply_gradients(&eval.policy_grad, &mut opts.policy)?;
            value.apply_gradients(&eval.value_grad, &mut opts.value)?;
            *last = PolicySnapshot::capture(policy, SnapshotTag::Last);
            stats.optimizer_steps += 1;
            stats.mean_total_loss += eval.total;
            stats.mean_surrogate += eval.ppo.surrogate;
            stats.mean_value_loss += eval.ppo.value_loss;
            stats.mean_symmetry_loss += eval.symmetry;
            stats.mean_clip_fraction += eval.ppo.clip_fraction;
            stats.mean_approx_kl += eval.ppo.approx_kl;
        }
    }
    let k = stats.optimizer_steps.max(1) as f64;
    stats.mean_total_loss /= k;
    stats.mean_surrogate /= k;
    stats.mean_value_loss /= k;
    stats.mean_symmetry_loss /= k;
    stats.mean_clip_fraction /= k;
    stats.mean_approx_kl /= k;
    Ok(stats)
}
