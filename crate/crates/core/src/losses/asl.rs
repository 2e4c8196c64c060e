//! Adaptive symmetry loss: a restricted update of `pi(. | f(s))` toward a
//! clipped target produced by the fitted action-transform estimators.

use ndarray::Array2;

use super::gates::{dead_zone_gate, value_gates, GateOutputs};
use super::{value_term, SymWeights};
use crate::error::{shape_err, Error, Result};
use crate::ppo::{OutputGrads, RolloutBatch, StackedOutputs};
use crate::symmetry::{estimator::compose_into, EstimatorParams, RelationGraph};

/// Ratio exponents are clamped to `[-EXPONENT_CLAMP, EXPONENT_CLAMP]`.
pub const EXPONENT_CLAMP: f64 = 30.0;

/// Per-element soft limit such that `n` elements jointly stay within `1 + eps`.
pub fn asl_xi(eps: f64, n: usize) -> f64 {
    (1.0 + eps).powf(1.0 / n as f64) - 1.0
}

/// Maximum mean shift `k_s * sigma * sqrt(2 ln(1 + xi))`.
pub fn asl_delta_mu(k_s: f64, sigma: f64, xi: f64) -> f64 {
    k_s * sigma * (2.0 * (1.0 + xi).ln()).sqrt()
}

/// Mean shift for a distribution whose explored action sits `k_e` deviations away.
pub fn delta_mu_full(k_e: f64, sigma: f64, xi: f64) -> f64 {
    let p = ((1.0 + xi) * (-0.5 * k_e * k_e).exp()).min(1.0);
    sigma * (k_e - (-2.0 * p.ln()).sqrt())
}

/// Elementwise `clip(g_hat, a' - dmu, a' + dmu)`.
pub fn asl_target(g_hat: &[f64], a_sym: &[f64], delta_mu: &[f64]) -> Vec<f64> {
    g_hat
        .iter()
        .zip(a_sym)
        .zip(delta_mu)
        .map(|((g, a), d)| g.clamp(a - d, a + d))
        .collect()
}

/// Unclamped log ratio.
pub fn asl_exponent(tau: &[f64], a_sym: &[f64], mu: &[f64], sigma: &[f64], w_g: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..tau.len() {
        let before = tau[i] - a_sym[i];
        let after = tau[i] - mu[i];
        e += w_g[i] * (before * before - after * after) / (2.0 * sigma[i] * sigma[i]);
    }
    e
}

/// Ratio of the current and old densities at the target, both centred with `sigma`.
pub fn asl_ratio(tau: &[f64], a_sym: &[f64], mu: &[f64], sigma: &[f64], w_g: &[f64]) -> f64 {
    asl_exponent(tau, a_sym, mu, sigma, w_g)
        .clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP)
        .exp()
}

/// Dead-zone and value gates for every declared transform, from the old critic.
pub fn compute_gates(batch: &RolloutBatch, k_d: &[f64], mad: &[f64], k_v: f64) -> Result<GateOutputs> {
    if k_d.len() != batch.num_transforms() {
        return shape_err("one dead zone per transform");
    }
    let mut out = GateOutputs::default();
    for (j, &kd) in k_d.iter().enumerate() {
        let (psi, nsrr) = dead_zone_gate(&batch.states, &batch.sym_states[j], mad, kd)?;
        out.psi.push(psi);
        out.nsrr.push(nsrr);
        out.phi.push(value_gates(&batch.values, &batch.sym_values[j], k_v)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AslContext {
    pub weights: SymWeights,
    pub active: Vec<usize>,
    pub graph: RelationGraph,
    /// Estimators, frozen for the whole update.
    pub nu: EstimatorParams,
    /// Function weights `w_G[j][i]`.
    pub w_g: Vec<Vec<f64>>,
    /// `delta_mu[j][i]`.
    pub delta_mu: Vec<Vec<f64>>,
    pub sigma_old: Vec<f64>,
    pub gates: GateOutputs,
    /// Means of the `last` policy at every batch state. When unset, the
    /// detached block-0 output of the current forward pass is used, which is
    /// the same quantity when `last` is refreshed after every step.
    pub frozen_last: Option<Array2<f64>>,
}

impl AslContext {
    #[allow(clippy::too_many_arguments)]
    pub fn prepare(
        weights: SymWeights,
        graph: RelationGraph,
        nu: EstimatorParams,
        w_g: Vec<Vec<f64>>,
        gates: GateOutputs,
        sigma_old: Vec<f64>,
        clip: f64,
    ) -> Result<Self> {
        let n_t = weights.policy.len();
        let n = graph.act_dim;
        if graph.recipes.len() != n_t || w_g.len() != n_t || w_g.iter().any(|r| r.len() != n) || sigma_old.len() != n {
            return shape_err("adaptive loss inputs disagree on transform or action counts");
        }
        if gates.psi.len() != n_t || gates.phi.len() != n_t {
            return shape_err("one gate row per transform");
        }
        if w_g.iter().flatten().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Domain("function weights must lie in [0, 1]".into()));
        }
        let xi = asl_xi(clip, n);
        let delta_mu = weights
            .k_s
            .iter()
            .map(|k| sigma_old.iter().map(|s| asl_delta_mu(*k, *s, xi)).collect())
            .collect();
        Ok(Self {
            active: weights.active(),
            weights,
            graph,
            nu,
            w_g,
            delta_mu,
            sigma_old,
            gates,
            frozen_last: None,
        })
    }

    pub(crate) fn accumulate(
        &self,
        batch: &RolloutBatch,
        indices: &[usize],
        out: &StackedOutputs,
        grads: &mut OutputGrads,
    ) -> Result<f64> {
        let m = indices.len() as f64;
        let rows = out.rows;
        let n = self.graph.act_dim;
        let sigma = &self.sigma_old;
        let mut g_hat = vec![0.0; n];
        let mut loss = 0.0;
        for (k, &j) in self.active.iter().enumerate() {
            let w = self.weights.policy[j];
            if w == 0.0 {
                continue;
            }
            let w_g = &self.w_g[j];
            let dmu = &self.delta_mu[j];
            for (r, &t) in indices.iter().enumerate() {
                if !self.gates.open(j, t) {
                    continue;
                }
                let last = match &self.frozen_last {
                    Some(f) => f.row(t).to_vec(),
                    None => out.mu_row(0, r).to_vec(),
                };
                compose_into(&self.graph, &self.nu, j, &last, &mut g_hat)?;
                let a_sym = batch.sym_means[j].row(t);
                let a_sym = a_sym.as_slice().expect("standard layout");
                let tau = asl_target(&g_hat, a_sym, dmu);
                let mu_row = out.mu_row(k + 1, r);
                let mu = mu_row.as_slice().expect("standard layout");
                let e = asl_exponent(&tau, a_sym, mu, sigma, w_g);
                if !e.is_finite() {
                    return Err(Error::AbortUpdate(format!("adaptive ratio exponent {e} at step {t}")));
                }
                let ratio = e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP).exp();
                loss -= w * ratio / m;
                if e.abs() <= EXPONENT_CLAMP {
                    let c = -w * ratio / m;
                    let row = (k + 1) * rows + r;
                    for i in 0..n {
                        grads.d_mu[[row, i]] += c * w_g[i] * (tau[i] - mu[i]) / (sigma[i] * sigma[i]);
                    }
                }
            }
        }
        let gates = &self.gates;
        loss += value_term(batch, indices, out, &self.active, &self.weights.value, |j, t| gates.open(j, t), grads);
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{batch, gradient_check, nets};
    use super::super::{Method, SymLossConfig, SymmetryHook};
    use super::*;
    use crate::env::{Crawler, Dynamics};
    use crate::ppo::{LossTerms, PpoConfig};
    use crate::symmetry::extract_relation_graph;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_form_constants() {
        assert!((asl_xi(0.2, 4) - 0.046635).abs() < 1e-6);
        assert!((asl_delta_mu(1.0, 1.0, 0.2) - 0.603857).abs() < 1e-6);
        assert!((asl_delta_mu(1.0, 1.0, asl_xi(0.2, 1)) - (2.0 * 1.2f64.ln()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn conveyor_target() {
        assert_eq!(asl_target(&[5.0], &[-5.0], &[0.5]), vec![-4.5]);
        assert_eq!(asl_target(&[-4.8], &[-5.0], &[0.5]), vec![-4.8]);
    }

    #[test]
    fn full_shift_is_linear_then_decreasing() {
        let xi = 0.2;
        let k_star = (2.0 * 1.2f64.ln()).sqrt();
        assert_eq!(delta_mu_full(0.0, 1.0, xi), 0.0);
        for k in [0.1, 0.3, 0.5, 0.6] {
            assert!((delta_mu_full(k, 2.0, xi) - 2.0 * k).abs() < 1e-12);
        }
        assert!((delta_mu_full(k_star, 1.0, xi) - k_star).abs() < 1e-9);
        let mut prev = delta_mu_full(k_star, 1.0, xi);
        for step in 1..50 {
            let d = delta_mu_full(k_star + 0.05 * step as f64, 1.0, xi);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn ratio_examples() {
        let (tau, a, s, w) = ([1.0, -0.5], [0.6, -0.2], [0.5, 0.8], [1.0, 0.7]);
        assert_eq!(asl_ratio(&tau, &a, &a, &s, &w), 1.0);
        let at_target = asl_ratio(&tau, &a, &tau, &s, &w);
        let oracle = (0.4f64.powi(2) / (2.0 * 0.25) + 0.7 * 0.3f64.powi(2) / (2.0 * 0.64)).exp();
        assert!((at_target - oracle).abs() < 1e-12);
        assert!((asl_ratio(&tau, &a, &[3.0, 2.0], &s, &[1e-300, 1e-300]) - 1.0).abs() < 1e-12);
        assert_eq!(asl_ratio(&[100.0], &[0.0], &[100.0], &[1.0], &[1.0]), EXPONENT_CLAMP.exp());
    }

    proptest! {
        #[test]
        fn moving_toward_target_raises_ratio(
            tau in -2.0f64..2.0, a in -2.0f64..2.0, mu in -2.0f64..2.0, step in 0.01f64..0.99, sigma in 0.2f64..2.0,
        ) {
            prop_assume!((tau - mu).abs() > 1e-3);
            // inside the clamp; saturated ratios are flat by design
            let worst = (tau - a).powi(2).max((1.5 * (tau - mu)).powi(2)).max((tau - mu).powi(2) + (tau - a).powi(2));
            prop_assume!(worst / (2.0 * sigma * sigma) < EXPONENT_CLAMP);
            let r0 = asl_ratio(&[tau], &[a], &[mu], &[sigma], &[1.0]);
            let closer = mu + step * (tau - mu);
            prop_assert!(asl_ratio(&[tau], &[a], &[closer], &[sigma], &[1.0]) > r0);
            let past = tau + (tau - mu) * 0.5;
            prop_assert!(asl_ratio(&[tau], &[a], &[past], &[sigma], &[1.0]) < asl_ratio(&[tau], &[a], &[tau], &[sigma], &[1.0]));
        }
    }

    fn context(b: &RolloutBatch, p: &crate::nn::GaussianPolicy, open_prob: f64, seed: u64) -> AslContext {
        let specs = Crawler::new().spec().transforms.clone();
        let graph = extract_relation_graph(&specs).unwrap();
        let mut nu = EstimatorParams::from_declared(&graph, &specs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // perturbed estimators so the targets differ from the declared map
        for m in nu.pair_m.iter_mut() {
            *m *= rng.gen_range(0.7..1.3);
        }
        for v in nu.pair_b.iter_mut().chain(nu.single_b.iter_mut()) {
            *v = rng.gen_range(-0.1..0.1);
        }
        let cfg = SymLossConfig {
            method: Method::Asl,
            policy_weight: Some(0.8),
            policy_weights: Some(vec![0.8, 0.0, 0.5, 0.0, 0.3, 0.0, 0.0]),
            value_weights: Some(vec![0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0]),
            k_s: 2.0,
            ..SymLossConfig::default()
        };
        let weights = cfg.resolve(&specs).unwrap();
        let w_g = (0..7).map(|_| (0..8).map(|_| rng.gen_range(0.2..1.0)).collect()).collect();
        let n = b.len();
        let gates = GateOutputs {
            psi: (0..7).map(|_| (0..n).map(|_| rng.gen_bool(open_prob)).collect()).collect(),
            phi: (0..7).map(|_| (0..n).map(|_| rng.gen_bool(open_prob)).collect()).collect(),
            nsrr: vec![0.0; 7],
        };
        let mut ctx = AslContext::prepare(weights, graph, nu, w_g, gates, p.sigma(), 0.4).unwrap();
        ctx.frozen_last = Some(p.forward_mean_batch(b.states.view()).unwrap());
        ctx
    }

    #[test]
    fn gradients_match_finite_differences_with_gates() {
        let specs = Crawler::new().spec().transforms.clone();
        for seed in 0..3 {
            let (p, v) = nets(22, 8, 20 + seed);
            let b = batch(&p, &v, &specs, 8, 30 + seed);
            let hook = SymmetryHook::Asl(context(&b, &p, 0.7, seed));
            let (err, ls) = gradient_check(&b, &p, &v, &hook, LossTerms::SYMMETRY_ONLY);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
            assert!(ls.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn closed_gates_give_zero_loss_and_gradient() {
        let specs = Crawler::new().spec().transforms.clone();
        let (p, v) = nets(22, 8, 40);
        let b = batch(&p, &v, &specs, 8, 41);
        let hook = SymmetryHook::Asl(context(&b, &p, 0.0, 1));
        let idx: Vec<usize> = (0..8).collect();
        let ev = crate::ppo::evaluate_loss(&b, &idx, &p, &v, &PpoConfig::default(), &hook, LossTerms::SYMMETRY_ONLY).unwrap();
        assert_eq!(ev.symmetry, 0.0);
        assert!(ev.policy_grad.mean.iter().chain(&ev.value_grad).all(|g| *g == 0.0));
    }

    #[test]
    fn detached_block_zero_equals_frozen_last() {
        let specs = Crawler::new().spec().transforms.clone();
        let (p, v) = nets(22, 8, 50);
        let b = batch(&p, &v, &specs, 8, 51);
        let frozen = context(&b, &p, 1.0, 2);
        let detached = AslContext {
            frozen_last: None,
            ..frozen.clone()
        };
        let idx: Vec<usize> = (0..8).collect();
        let cfg = PpoConfig::default();
        let a = crate::ppo::evaluate_loss(&b, &idx, &p, &v, &cfg, &SymmetryHook::Asl(frozen), LossTerms::ALL).unwrap();
        let c = crate::ppo::evaluate_loss(&b, &idx, &p, &v, &cfg, &SymmetryHook::Asl(detached), LossTerms::ALL).unwrap();
        assert!((a.total - c.total).abs() < 1e-12);
        for (x, y) in a.policy_grad.mean.iter().zip(&c.policy_grad.mean) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gates_are_deterministic() {
        let specs = Crawler::new().spec().transforms.clone();
        let (p, v) = nets(22, 8, 60);
        let b = batch(&p, &v, &specs, 10, 61);
        let mad = vec![0.3; 22];
        let k_d = vec![0.1, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0];
        let g1 = compute_gates(&b, &k_d, &mad, 1.5).unwrap();
        let g2 = compute_gates(&b, &k_d, &mad, 1.5).unwrap();
        assert_eq!(g1, g2);
        for j in 0..7 {
            for t in 0..10 {
                let vt = if b.values[t] >= 0.0 { 1.5 * b.values[t] } else { b.values[t] / 1.5 };
                assert_eq!(g1.phi[j][t], vt > b.sym_values[j][t]);
            }
        }
    }
}
