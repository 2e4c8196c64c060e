//! Proximal symmetry loss: pulls `pi(. | f(s))` toward the transformed old mean,
//! capped by the old density of the explored action.

use ndarray::Array2;

use super::{value_term, SymWeights};
use crate::error::Result;
use crate::numerics::log_density_unchecked;
use crate::ppo::{OutputGrads, PpoConfig, RolloutBatch, StackedOutputs};
use crate::symmetry::TransformSpec;

/// Old densities below `exp(MIN_LOG_DENSITY)` are treated as underflow.
pub const MIN_LOG_DENSITY: f64 = -708.0;

#[derive(Debug, Clone)]
pub struct PslContext {
    pub weights: SymWeights,
    pub active: Vec<usize>,
    /// `g_j(a_bar_t)` per transform.
    pub targets: Vec<Array2<f64>>,
    /// `log pi_old(g_j(a_bar_t) | f_j(s_t))`.
    pub log_den: Vec<Vec<f64>>,
    /// Steps whose denominator did not underflow.
    pub valid: Vec<Vec<bool>>,
}

impl PslContext {
    /// Fixes targets and denominators for one batch; `sigma_old` is the old policy's spread.
    pub fn prepare(weights: SymWeights, specs: &[TransformSpec], batch: &RolloutBatch, sigma_old: &[f64]) -> Result<Self> {
        let active = weights.active();
        let n = batch.len();
        let mut targets = Vec::with_capacity(specs.len());
        let mut log_den = Vec::with_capacity(specs.len());
        let mut valid = Vec::with_capacity(specs.len());
        let mut skipped = 0usize;
        for (j, spec) in specs.iter().enumerate() {
            let mut tgt = Array2::zeros((n, batch.act_dim()));
            let mut den = vec![0.0; n];
            let mut ok = vec![false; n];
            if active.contains(&j) {
                for t in 0..n {
                    let abar = batch.means.row(t);
                    let mut y = tgt.row_mut(t);
                    spec.apply_action_into(abar.as_slice().expect("standard layout"), y.as_slice_mut().expect("standard layout"))?;
                    let mu_old = batch.sym_means[j].row(t);
                    den[t] = log_density_unchecked(
                        y.as_slice().expect("standard layout"),
                        mu_old.as_slice().expect("standard layout"),
                        sigma_old,
                    );
                    ok[t] = den[t] > MIN_LOG_DENSITY;
                    skipped += usize::from(!ok[t]);
                }
            }
            targets.push(tgt);
            log_den.push(den);
            valid.push(ok);
        }
        if skipped > 0 {
            log::warn!("proximal symmetry loss: skipping {skipped} steps with an underflowing old density");
        }
        Ok(Self {
            weights,
            active,
            targets,
            log_den,
            valid,
        })
    }

    pub(crate) fn accumulate(
        &self,
        batch: &RolloutBatch,
        indices: &[usize],
        out: &StackedOutputs,
        cfg: &PpoConfig,
        grads: &mut OutputGrads,
    ) -> Result<f64> {
        let m = indices.len() as f64;
        let rows = out.rows;
        let sigma = &out.sigma;
        let cap = 1.0 + cfg.clip;
        let mut loss = 0.0;
        for (k, &j) in self.active.iter().enumerate() {
            let w = self.weights.policy[j];
            if w == 0.0 {
                continue;
            }
            for (r, &t) in indices.iter().enumerate() {
                if !self.valid[j][t] {
                    continue;
                }
                let y = self.targets[j].row(t);
                let y = y.as_slice().expect("standard layout");
                let mu_row = out.mu_row(k + 1, r);
                let mu = mu_row.as_slice().expect("standard layout");
                let l_theta = log_density_unchecked(y, mu, sigma);
                let l_cap = batch.log_probs[t];
                let x = (l_theta.min(l_cap) - self.log_den[j][t]).exp();
                loss -= w * x.min(cap) / m;
                if l_theta <= l_cap && x < cap {
                    let c = -w * x / m;
                    let row = (k + 1) * rows + r;
                    for i in 0..sigma.len() {
                        let z = (y[i] - mu[i]) / sigma[i];
                        grads.d_mu[[row, i]] += c * z / sigma[i];
                        grads.d_log_sigma[i] += c * (z * z - 1.0);
                    }
                }
            }
        }
        loss += value_term(batch, indices, out, &self.active, &self.weights.value, |_, _| true, grads);
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{batch, gradient_check, nets};
    use super::super::{Method, SymLossConfig, SymmetryHook};
    use super::*;
    use crate::env::{Crawler, Dynamics};
    use crate::ppo::LossTerms;

    fn setup(seed: u64) -> (crate::nn::GaussianPolicy, crate::nn::ValueFunction, RolloutBatch, Vec<TransformSpec>) {
        let all = Crawler::new().spec().transforms.clone();
        let specs = vec![all[1].clone(), all[5].clone()];
        let (p, v) = nets(22, 8, seed);
        let b = batch(&p, &v, &specs, 8, seed + 100);
        (p, v, b, specs)
    }

    fn hook(b: &RolloutBatch, p: &crate::nn::GaussianPolicy, specs: &[TransformSpec], w: f64) -> SymmetryHook {
        let cfg = SymLossConfig {
            method: Method::Psl,
            policy_weight: Some(w),
            ..SymLossConfig::default()
        };
        SymmetryHook::Psl(PslContext::prepare(cfg.resolve(specs).unwrap(), specs, b, &p.sigma()).unwrap())
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let (p, v, b, specs) = setup(seed);
            let h = hook(&b, &p, &specs, 0.9);
            let (err, _) = gradient_check(&b, &p, &v, &h, LossTerms::SYMMETRY_ONLY);
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn per_step_term_is_bounded() {
        let (p, v, b, specs) = setup(7);
        let SymmetryHook::Psl(ctx) = hook(&b, &p, &specs, 1.0) else { unreachable!() };
        let cfg = PpoConfig::default();
        for t in 0..b.len() {
            let mut out_b = b.clone();
            out_b.value_targets = b.values.clone();
            let idx = [t];
            let ev = crate::ppo::evaluate_loss(
                &out_b,
                &idx,
                &p,
                &v,
                &cfg,
                &SymmetryHook::Psl(PslContext {
                    weights: SymWeights {
                        value: vec![0.0; 2],
                        ..ctx.weights.clone()
                    },
                    ..ctx.clone()
                }),
                LossTerms::SYMMETRY_ONLY,
            )
            .unwrap();
            // two transforms with weight 1, each in [-(1+eps), 0)
            assert!(ev.symmetry < 0.0 && ev.symmetry >= -2.0 * (1.0 + cfg.clip), "{}", ev.symmetry);
        }
    }

    #[test]
    fn numerator_never_exceeds_explored_density() {
        let (p, _v, b, specs) = setup(2);
        let SymmetryHook::Psl(ctx) = hook(&b, &p, &specs, 1.0) else { unreachable!() };
        let sigma = p.sigma();
        // push sigma down so pi_theta at the target becomes large: the capped ratio stays put
        let narrow: Vec<f64> = sigma.iter().map(|s| s * 0.01).collect();
        for t in 0..b.len() {
            let fs = b.sym_states[0].row(t).to_vec();
            let mu = p.forward_mean(&fs).unwrap();
            let y = ctx.targets[0].row(t).to_vec();
            let l = log_density_unchecked(&y, &mu, &narrow);
            let num = l.min(b.log_probs[t]);
            assert!(num <= b.log_probs[t]);
        }
    }

    #[test]
    fn unit_ratio_at_symmetric_fixed_point() {
        // identity transform: the target equals the old mean, so x = 1 when a_t is the mean
        let spec = TransformSpec::new(
            "id",
            crate::symmetry::TransformKind::Reflection,
            (0..3).collect(),
            vec![1.0; 3],
            (0..2).collect(),
            vec![1.0; 2],
        )
        .unwrap();
        let (p, v) = nets(3, 2, 9);
        let mut b = batch(&p, &v, std::slice::from_ref(&spec), 4, 10);
        b.actions = b.means.clone();
        for t in 0..4 {
            b.log_probs[t] = p.log_prob(&b.means.row(t).to_vec(), &b.means.row(t).to_vec()).unwrap();
        }
        let cfg = SymLossConfig {
            method: Method::Psl,
            policy_weight: Some(1.0),
            value_weight: 0.0,
            ..SymLossConfig::default()
        };
        let ctx = PslContext::prepare(cfg.resolve(std::slice::from_ref(&spec)).unwrap(), &[spec], &b, &p.sigma()).unwrap();
        let idx: Vec<usize> = (0..4).collect();
        let ev = crate::ppo::evaluate_loss(&b, &idx, &p, &v, &PpoConfig::default(), &SymmetryHook::Psl(ctx), LossTerms::SYMMETRY_ONLY).unwrap();
        assert!((ev.symmetry + 1.0).abs() < 1e-12);
    }
}
