//! Mini-batch loss evaluation.
//!
//! Every mini-batch step runs one stacked forward pass per network over the
//! rows `[s_t; f_1(s_t); ...; f_N(s_t)]` (one block per active symmetry
//! transform). The PPO term and the symmetry hook both write gradients with
//! respect to the network outputs; a single backward pass then turns those
//! into parameter gradients.

use ndarray::{Array2, ArrayView1};

use super::rollout::RolloutBatch;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::losses::SymmetryHook;
use crate::nn::{GaussianPolicy, PolicyGrad, ValueFunction};

/// Network outputs over the stacked rows; block `k` spans rows `k*m..(k+1)*m`.
#[derive(Debug, Clone)]
pub struct StackedOutputs {
    pub rows: usize,
    pub mu: Array2<f64>,
    pub values: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl StackedOutputs {
    pub fn mu_row(&self, block: usize, t: usize) -> ArrayView1<'_, f64> {
        self.mu.row(block * self.rows + t)
    }

    pub fn value(&self, block: usize, t: usize) -> f64 {
        self.values[block * self.rows + t]
    }
}

/// Loss gradients with respect to the stacked outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads {
    pub d_mu: Array2<f64>,
    pub d_v: Array2<f64>,
    pub d_log_sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub ppo: bool,
    pub symmetry: bool,
}

impl LossTerms {
    pub const ALL: Self = Self { ppo: true, symmetry: true };
    pub const PPO_ONLY: Self = Self { ppo: true, symmetry: false };
    pub const SYMMETRY_ONLY: Self = Self { ppo: false, symmetry: true };
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoParts {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone)]
pub struct LossEval {
    /// Minimized objective: `-surrogate + c_v * value_loss - c_e * entropy + symmetry`.
    pub total: f64,
    pub ppo: PpoParts,
    pub symmetry: f64,
    pub policy_grad: PolicyGrad,
    pub value_grad: Vec<f64>,
}

fn clip_bound(adv: f64, eps: f64) -> f64 {
    let sgn = if adv > 0.0 {
        1.0
    } else if adv < 0.0 {
        -1.0
    } else {
        0.0
    };
    (1.0 + sgn * eps) * adv
}

/// Sign form of the clipped surrogate; `sgn(0) = 0`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(clip_bound(adv, eps))
}

fn gather_rows(src: &Array2<f64>, indices: &[usize], dst: &mut ndarray::ArrayViewMut2<'_, f64>) {
    for (k, &t) in indices.iter().enumerate() {
        dst.row_mut(k).assign(&src.row(t));
    }
}

fn ppo_terms(
    batch: &RolloutBatch,
    indices: &[usize],
    out: &StackedOutputs,
    log_sigma: &[f64],
    cfg: &PpoConfig,
    grads: &mut OutputGrads,
) -> Result<(f64, PpoParts)> {
    let m = indices.len() as f64;
    let sigma = &out.sigma;
    let log_norm: f64 = log_sigma.iter().sum::<f64>() + 0.5 * sigma.len() as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut parts = PpoParts::default();
    let mut clipped = 0usize;
    for (k, &t) in indices.iter().enumerate() {
        let mu = out.mu_row(0, k);
        let a = batch.actions.row(t);
        let mut quad = 0.0;
        for i in 0..sigma.len() {
            let z = (a[i] - mu[i]) / sigma[i];
            quad += z * z;
        }
        let logp = -0.5 * quad - log_norm;
        let log_ratio = logp - batch.log_probs[t];
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(Error::AbortUpdate(format!("probability ratio {ratio} at step {t}")));
        }
        let adv = batch.advantages[t];
        let surr = clipped_surrogate(ratio, adv, cfg.clip);
        parts.surrogate += surr / m;
        parts.approx_kl += ((ratio - 1.0) - log_ratio) / m;
        if ratio * adv < clip_bound(adv, cfg.clip) {
            // d(-surr)/dlogp = -adv * ratio
            let c = -adv * ratio / m;
            let mut d_mu = grads.d_mu.row_mut(k);
            for i in 0..sigma.len() {
                let z = (a[i] - mu[i]) / sigma[i];
                d_mu[i] += c * z / sigma[i];
                grads.d_log_sigma[i] += c * (z * z - 1.0);
            }
        } else {
            clipped += 1;
        }
        let diff = out.value(0, k) - batch.value_targets[t];
        parts.value_loss += diff * diff / m;
        grads.d_v[[k, 0]] += cfg.value_coef * 2.0 * diff / m;
    }
    parts.clip_fraction = clipped as f64 / m;
    let half_log_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    parts.entropy = log_sigma.iter().map(|l| l + half_log_2pi_e).sum();
    for g in grads.d_log_sigma.iter_mut() {
        *g -= cfg.entropy_coef;
    }
    let total = -parts.surrogate + cfg.value_coef * parts.value_loss - cfg.entropy_coef * parts.entropy;
    Ok((total, parts))
}

/// Loss and parameter gradients on the mini-batch `indices`.
pub fn evaluate_loss(
    batch: &RolloutBatch,
    indices: &[usize],
    policy: &GaussianPolicy,
    value: &ValueFunction,
    cfg: &PpoConfig,
    hook: &SymmetryHook,
    terms: LossTerms,
) -> Result<LossEval> {
    let active: &[usize] = if terms.symmetry { hook.active() } else { &[] };
    let m = indices.len();
    let blocks = 1 + active.len();
    let mut x = Array2::zeros((blocks * m, batch.obs_dim()));
    gather_rows(&batch.states, indices, &mut x.slice_mut(ndarray::s![0..m, ..]));
    for (k, &j) in active.iter().enumerate() {
        let lo = (k + 1) * m;
        gather_rows(&batch.sym_states[j], indices, &mut x.slice_mut(ndarray::s![lo..lo + m, ..]));
    }

    if !policy.mean_net.is_finite() || policy.log_sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::PoisonedParameters("policy contains a non-finite parameter".into()));
    }
    if !value.value_net.is_finite() {
        return Err(Error::PoisonedParameters("value function contains a non-finite parameter".into()));
    }
    let p_cache = policy.mean_net.forward_cached(x.view())?;
    let v_cache = value.value_net.forward_cached(x.view())?;
    let out = StackedOutputs {
        rows: m,
        mu: p_cache.output().clone(),
        values: v_cache.output().iter().copied().collect(),
        sigma: policy.sigma(),
    };
    let mut grads = OutputGrads {
        d_mu: Array2::zeros(out.mu.raw_dim()),
        d_v: Array2::zeros((blocks * m, 1)),
        d_log_sigma: vec![0.0; policy.act_dim()],
    };

    let (mut total, mut ppo) = (0.0, PpoParts::default());
    if terms.ppo {
        let (t, parts) = ppo_terms(batch, indices, &out, &policy.log_sigma, cfg, &mut grads)?;
        total += t;
        ppo = parts;
    }
    let symmetry = if terms.symmetry {
        hook.accumulate(batch, indices, &out, cfg, &mut grads)?
    } else {
        0.0
    };
    total += symmetry;

    let mut policy_grad = PolicyGrad::zeros_like(policy);
    policy.mean_net.backward(&p_cache, grads.d_mu.view(), &mut policy_grad.mean)?;
    policy_grad.log_sigma = grads.d_log_sigma;
    let mut value_grad = vec![0.0; value.num_params()];
    value.value_net.backward(&v_cache, grads.d_v.view(), &mut value_grad)?;
    Ok(LossEval {
        total,
        ppo,
        symmetry,
        policy_grad,
        value_grad,
    })
}

/// Vanilla PPO loss on a mini-batch.
pub fn ppo_loss(
    batch: &RolloutBatch,
    indices: &[usize],
    policy: &GaussianPolicy,
    value: &ValueFunction,
    cfg: &PpoConfig,
) -> Result<LossEval> {
    evaluate_loss(batch, indices, policy, value, cfg, &SymmetryHook::None, LossTerms::PPO_ONLY)
}
