//! Symmetry loss terms attached to the PPO objective.
//!
//! A [`SymmetryHook`] is prepared once per batch (targets, gates and frozen
//! estimators are fixed there) and then queried on every mini-batch step.

pub mod asl;
pub mod gates;
pub mod msl;
pub mod psl;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ppo::{OutputGrads, PpoConfig, RolloutBatch, StackedOutputs};
use crate::symmetry::{TransformKind, TransformSpec};

pub use asl::{asl_delta_mu, asl_ratio, asl_target, asl_xi, delta_mu_full, AslContext, EXPONENT_CLAMP};
pub use gates::{
    dead_zone_gate, neutral_distance, value_gate, value_gate_threshold, value_gate_threshold_branch, value_gates,
    GateOutputs,
};
pub use msl::{msl_residual, msl_residual_prefix, MslContext};
pub use psl::PslContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    None,
    Msl,
    Psl,
    Asl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Msl => "msl",
            Method::Psl => "psl",
            Method::Asl => "asl",
        }
    }

    /// Policy weight used when the config does not set one.
    pub fn default_policy_weight(self) -> f64 {
        match self {
            Method::None => 0.0,
            Method::Msl => 3.0,
            Method::Psl => 0.003,
            Method::Asl => 0.05,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "ppo" => Ok(Method::None),
            "msl" => Ok(Method::Msl),
            "psl" => Ok(Method::Psl),
            "asl" => Ok(Method::Asl),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymLossConfig {
    pub method: Method,
    /// Shared policy weight; `None` picks the method's default.
    pub policy_weight: Option<f64>,
    pub value_weight: f64,
    /// Per-transform overrides, in declaration order.
    pub policy_weights: Option<Vec<f64>>,
    pub value_weights: Option<Vec<f64>>,
    /// Maximum distribution shift.
    pub k_s: f64,
    pub k_s_per_transform: Option<Vec<f64>>,
    pub dead_zone_reflection: f64,
    pub dead_zone_rotation: f64,
    pub dead_zone_per_transform: Option<Vec<f64>>,
    pub k_v: f64,
    /// Dead-zone statistics cover this many batches of visited states.
    pub window_batches: usize,
}

impl Default for SymLossConfig {
    fn default() -> Self {
        Self {
            method: Method::None,
            policy_weight: None,
            value_weight: 0.5,
            policy_weights: None,
            value_weights: None,
            k_s: 0.3,
            k_s_per_transform: None,
            dead_zone_reflection: 0.1,
            dead_zone_rotation: 0.0,
            dead_zone_per_transform: None,
            k_v: 1.5,
            window_batches: 10,
        }
    }
}

/// Per-transform hyperparameters after defaults and overrides are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SymWeights {
    pub policy: Vec<f64>,
    pub value: Vec<f64>,
    pub k_s: Vec<f64>,
    pub k_d: Vec<f64>,
}

impl SymWeights {
    /// Transforms with a nonzero weight; the others never enter the stacked pass.
    pub fn active(&self) -> Vec<usize> {
        (0..self.policy.len())
            .filter(|&j| self.policy[j] > 0.0 || self.value[j] > 0.0)
            .collect()
    }
}

impl SymLossConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("symmetry.{what} out of range")));
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !self.policy_weight.map_or(true, nonneg) || !nonneg(self.value_weight) {
            return bad("policy_weight/value_weight");
        }
        for list in [&self.policy_weights, &self.value_weights, &self.k_s_per_transform, &self.dead_zone_per_transform]
            .into_iter()
            .flatten()
        {
            if !list.iter().all(|v| nonneg(*v)) {
                return bad("per-transform list");
            }
        }
        if !nonneg(self.k_s) || !nonneg(self.dead_zone_reflection) || !nonneg(self.dead_zone_rotation) {
            return bad("k_s/dead_zone");
        }
        if !(self.k_v > 1.0) || !self.k_v.is_finite() {
            return bad("k_v");
        }
        if self.window_batches == 0 {
            return bad("window_batches");
        }
        Ok(())
    }

    pub fn resolve(&self, specs: &[TransformSpec]) -> Result<SymWeights> {
        self.validate()?;
        let n = specs.len();
        let pick = |over: &Option<Vec<f64>>, what: &str, default: &dyn Fn(usize) -> f64| -> Result<Vec<f64>> {
            match over {
                Some(v) if v.len() != n => Err(Error::Config(format!(
                    "symmetry.{what} has {} entries for {n} transforms",
                    v.len()
                ))),
                Some(v) => Ok(v.clone()),
                None => Ok((0..n).map(default).collect()),
            }
        };
        let pw = self.policy_weight.unwrap_or(self.method.default_policy_weight());
        let (policy, value) = if self.method == Method::None {
            (vec![0.0; n], vec![0.0; n])
        } else {
            (
                pick(&self.policy_weights, "policy_weights", &|_| pw)?,
                pick(&self.value_weights, "value_weights", &|_| self.value_weight)?,
            )
        };
        Ok(SymWeights {
            policy,
            value,
            k_s: pick(&self.k_s_per_transform, "k_s_per_transform", &|_| self.k_s)?,
            k_d: pick(&self.dead_zone_per_transform, "dead_zone_per_transform", &|j| match specs[j].kind {
                TransformKind::Reflection => self.dead_zone_reflection,
                TransformKind::Rotation => self.dead_zone_rotation,
            })?,
        })
    }
}

/// Symmetry term of the loss for the current batch.
#[derive(Debug, Clone, Default)]
pub enum SymmetryHook {
    #[default]
    None,
    Msl(MslContext),
    Psl(PslContext),
    Asl(AslContext),
}

impl SymmetryHook {
    /// Transform indices that get a stacked block, in block order.
    pub fn active(&self) -> &[usize] {
        match self {
            SymmetryHook::None => &[],
            SymmetryHook::Msl(c) => &c.active,
            SymmetryHook::Psl(c) => &c.active,
            SymmetryHook::Asl(c) => &c.active,
        }
    }

    /// Adds the symmetry loss gradients to `grads` and returns the loss value.
    pub fn accumulate(
        &self,
        batch: &RolloutBatch,
        indices: &[usize],
        out: &StackedOutputs,
        cfg: &PpoConfig,
        grads: &mut OutputGrads,
    ) -> Result<f64> {
        match self {
            SymmetryHook::None => Ok(0.0),
            SymmetryHook::Msl(c) => c.accumulate(batch, indices, out, grads),
            SymmetryHook::Psl(c) => c.accumulate(batch, indices, out, cfg, grads),
            SymmetryHook::Asl(c) => c.accumulate(batch, indices, out, grads),
        }
    }
}

/// `sum_j w_V[j] * mean_t mask * (V(f_j(s_t)) - V_targ)^2`, shared by all methods.
pub(crate) fn value_term(
    batch: &RolloutBatch,
    indices: &[usize],
    out: &StackedOutputs,
    active: &[usize],
    weights: &[f64],
    mask: impl Fn(usize, usize) -> bool,
    grads: &mut OutputGrads,
) -> f64 {
    let m = indices.len() as f64;
    let mut loss = 0.0;
    for (k, &j) in active.iter().enumerate() {
        let w = weights[j];
        if w == 0.0 {
            continue;
        }
        for (r, &t) in indices.iter().enumerate() {
            if !mask(j, t) {
                continue;
            }
            let diff = out.value(k + 1, r) - batch.value_targets[t];
            loss += w * diff * diff / m;
            grads.d_v[[(k + 1) * out.rows + r, 0]] += 2.0 * w * diff / m;
        }
    }
    loss
}

#[cfg(test)]
pub(crate) mod testutil {
    //! Small fixtures shared by the loss tests.

    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::nn::{GaussianPolicy, ValueFunction};
    use crate::ppo::{LossTerms, PpoConfig, RolloutBatch};
    use crate::symmetry::TransformSpec;

    use super::SymmetryHook;

    pub fn nets(obs: usize, act: usize, seed: u64) -> (GaussianPolicy, ValueFunction) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = GaussianPolicy::new(obs, act, &[5], -0.5, &mut rng).unwrap();
        // larger output weights than the production init so the losses see real asymmetry
        for v in p.mean_net.as_mut_slice() {
            *v = rng.gen_range(-0.8..0.8);
        }
        for l in p.log_sigma.iter_mut() {
            *l = rng.gen_range(-0.7..0.0);
        }
        let mut v = ValueFunction::new(obs, &[4], &mut rng).unwrap();
        for x in v.value_net.as_mut_slice() {
            *x = rng.gen_range(-0.8..0.8);
        }
        (p, v)
    }

    /// Random batch whose "old" quantities come from `policy`/`value`.
    pub fn batch(policy: &GaussianPolicy, value: &ValueFunction, specs: &[TransformSpec], n: usize, seed: u64) -> RolloutBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (obs, act) = (policy.obs_dim(), policy.act_dim());
        let states = Array2::from_shape_fn((n, obs), |_| rng.gen_range(-1.0..1.0));
        let means = policy.forward_mean_batch(states.view()).unwrap();
        let mut actions = Array2::zeros((n, act));
        let mut log_probs = vec![0.0; n];
        for t in 0..n {
            let s = states.row(t).to_vec();
            let (a, lp) = policy.sample_action(&s, &mut rng).unwrap();
            actions.row_mut(t).assign(&ndarray::ArrayView1::from(&a));
            log_probs[t] = lp;
        }
        let values = value.value_batch(states.view()).unwrap();
        let mut sym_states = Vec::new();
        let mut sym_means = Vec::new();
        let mut sym_values = Vec::new();
        for spec in specs {
            let fs = crate::ppo::rollout::transform_rows(spec, &states).unwrap();
            sym_means.push(policy.forward_mean_batch(fs.view()).unwrap());
            sym_values.push(value.value_batch(fs.view()).unwrap());
            sym_states.push(fs);
        }
        RolloutBatch {
            states,
            actions,
            log_probs,
            rewards: vec![0.0; n],
            terminated: vec![false; n],
            episode_end: vec![false; n],
            next_values: values.clone(),
            values,
            means,
            sym_states,
            sym_means,
            sym_values,
            advantages: (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            value_targets: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            episode_returns: vec![],
        }
    }

    pub fn loss(
        batch: &RolloutBatch,
        p: &GaussianPolicy,
        v: &ValueFunction,
        hook: &SymmetryHook,
        terms: LossTerms,
    ) -> f64 {
        let idx: Vec<usize> = (0..batch.len()).collect();
        crate::ppo::evaluate_loss(batch, &idx, p, v, &PpoConfig::default(), hook, terms)
            .unwrap()
            .total
    }

    /// Central-difference check of every parameter; returns the worst relative error.
    pub fn gradient_check(
        batch: &RolloutBatch,
        p: &GaussianPolicy,
        v: &ValueFunction,
        hook: &SymmetryHook,
        terms: LossTerms,
    ) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..batch.len()).collect();
        let eval = crate::ppo::evaluate_loss(batch, &idx, p, v, &PpoConfig::default(), hook, terms).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut rel = |num: f64, ana: f64| {
            let e = (num - ana).abs() / ana.abs().max(num.abs()).max(1e-3);
            worst = worst.max(e);
        };
        for i in 0..p.mean_net.num_params() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.mean_net.as_mut_slice()[i] += h;
            b.mean_net.as_mut_slice()[i] -= h;
            let num = (loss(batch, &a, v, hook, terms) - loss(batch, &b, v, hook, terms)) / (2.0 * h);
            rel(num, eval.policy_grad.mean[i]);
        }
        for i in 0..p.act_dim() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.log_sigma[i] += h;
            b.log_sigma[i] -= h;
            let num = (loss(batch, &a, v, hook, terms) - loss(batch, &b, v, hook, terms)) / (2.0 * h);
            rel(num, eval.policy_grad.log_sigma[i]);
        }
        for i in 0..v.num_params() {
            let (mut a, mut b) = (v.clone(), v.clone());
            a.value_net.as_mut_slice()[i] += h;
            b.value_net.as_mut_slice()[i] -= h;
            let num = (loss(batch, p, &a, hook, terms) - loss(batch, p, &b, hook, terms)) / (2.0 * h);
            rel(num, eval.value_grad[i]);
        }
        (worst, eval.policy_grad.log_sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{triangle_transforms, Crawler, Dynamics};

    #[test]
    fn resolve_applies_kind_defaults_and_overrides() {
        let specs = Crawler::new().spec().transforms.clone();
        let w = SymLossConfig::with_method(Method::Asl).resolve(&specs).unwrap();
        assert_eq!(w.policy, vec![0.05; 7]);
        assert_eq!(&w.k_d[..4], &[0.1; 4]);
        assert_eq!(&w.k_d[4..], &[0.0; 3]);
        let cfg = SymLossConfig {
            method: Method::Msl,
            policy_weights: Some(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]),
            value_weight: 0.0,
            ..SymLossConfig::default()
        };
        assert_eq!(cfg.resolve(&specs).unwrap().active(), vec![0, 6]);
        let short = SymLossConfig {
            value_weights: Some(vec![0.5]),
            ..cfg
        };
        assert!(short.resolve(&specs).is_err());
    }

    #[test]
    fn none_has_no_active_transforms() {
        let specs = triangle_transforms([1.0, 1.0, 1.0]);
        assert!(SymLossConfig::default().resolve(&specs).unwrap().active().is_empty());
    }

    #[test]
    fn rejects_bad_k_v() {
        let cfg = SymLossConfig {
            k_v: 1.0,
            ..SymLossConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_round_trip() {
        for m in [Method::None, Method::Msl, Method::Psl, Method::Asl] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
