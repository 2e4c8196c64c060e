//! Mirror symmetry loss with the transformation applied on the explored side,
//! which keeps it correct for non-involutory transforms.

use super::{value_term, SymWeights};
use crate::error::{shape_err, Result};
use crate::ppo::{OutputGrads, RolloutBatch, StackedOutputs};
use crate::symmetry::TransformSpec;

/// `||g(mu(s)) - mu(f(s))||^2`.
pub fn msl_residual(spec: &TransformSpec, mu_s: &[f64], mu_fs: &[f64]) -> Result<f64> {
    let g = spec.apply_action(mu_s)?;
    if mu_fs.len() != g.len() {
        return shape_err("action lengths disagree");
    }
    Ok(g.iter().zip(mu_fs).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `||mu(s) - g(mu(f(s)))||^2`, only equivalent to [`msl_residual`] for involutions.
pub fn msl_residual_prefix(spec: &TransformSpec, mu_s: &[f64], mu_fs: &[f64]) -> Result<f64> {
    let g = spec.apply_action(mu_fs)?;
    if mu_s.len() != g.len() {
        return shape_err("action lengths disagree");
    }
    Ok(g.iter().zip(mu_s).map(|(a, b)| (a - b) * (a - b)).sum())
}

#[derive(Debug, Clone)]
pub struct MslContext {
    pub weights: SymWeights,
    pub active: Vec<usize>,
    pub specs: Vec<TransformSpec>,
}

impl MslContext {
    pub fn new(weights: SymWeights, specs: Vec<TransformSpec>) -> Self {
        let active = weights.active();
        Self { weights, active, specs }
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
        let mut loss = 0.0;
        for (k, &j) in self.active.iter().enumerate() {
            let w = self.weights.policy[j];
            if w == 0.0 {
                continue;
            }
            let spec = &self.specs[j];
            for r in 0..rows {
                let mu_s = out.mu_row(0, r);
                let mu_f = out.mu_row(k + 1, r);
                for u in 0..spec.act_dim() {
                    let src = spec.act_indices[u];
                    let mult = spec.act_multipliers[u];
                    let res = mult * mu_s[src] - mu_f[u];
                    loss += w * res * res / m;
                    let c = 2.0 * w * res / m;
                    grads.d_mu[[r, src]] += c * mult;
                    grads.d_mu[[(k + 1) * rows + r, u]] -= c;
                }
            }
        }
        loss += value_term(batch, indices, out, &self.active, &self.weights.value, |_, _| true, grads);
        Ok(loss)
    }
}
