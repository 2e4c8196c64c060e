use std::ops::Deref;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::adam::Adam;
use super::mlp::MlpParams;
use crate::error::{shape_err, Error, Result};
use crate::numerics::log_density_unchecked;

/// Scale applied to the randomly initialized output layer of the mean network.
pub const POLICY_OUTPUT_SCALE: f64 = 0.01;

/// Diagonal Gaussian policy with a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: MlpParams,
    pub log_sigma: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every policy parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub mean: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl PolicyGrad {
    pub fn zeros_like(p: &GaussianPolicy) -> Self {
        Self {
            mean: vec![0.0; p.mean_net.num_params()],
            log_sigma: vec![0.0; p.log_sigma.len()],
        }
    }

    pub fn add_assign(&mut self, other: &PolicyGrad) {
        for (a, b) in self.mean.iter_mut().zip(&other.mean) {
            *a += b;
        }
        for (a, b) in self.log_sigma.iter_mut().zip(&other.log_sigma) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.mean
            .iter()
            .chain(&self.log_sigma)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        log_std_init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mean_net = MlpParams::init(&layer_sizes(obs_dim, hidden, act_dim), POLICY_OUTPUT_SCALE, rng)?;
        Ok(Self {
            mean_net,
            log_sigma: vec![log_std_init; act_dim],
        })
    }

    pub fn from_parts(mean_net: MlpParams, log_sigma: Vec<f64>) -> Result<Self> {
        if mean_net.output_dim() != log_sigma.len() {
            return shape_err(format!(
                "mean network emits {} actions but log_sigma has {}",
                mean_net.output_dim(),
                log_sigma.len()
            ));
        }
        Ok(Self { mean_net, log_sigma })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_sigma.len()
    }

    pub fn num_params(&self) -> usize {
        self.mean_net.num_params() + self.log_sigma.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    fn check_finite(&self) -> Result<()> {
        if self.mean_net.is_finite() && self.log_sigma.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::PoisonedParameters("policy contains a non-finite parameter".into()))
        }
    }

    /// Deterministic action mean for one state.
    pub fn forward_mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_finite()?;
        self.mean_net.forward_one(s)
    }

    /// Action means for a batch of states, one per row.
    pub fn forward_mean_batch(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_finite()?;
        self.mean_net.forward(states)
    }

    pub fn log_prob(&self, a: &[f64], mu: &[f64]) -> Result<f64> {
        if a.len() != self.act_dim() || mu.len() != self.act_dim() {
            return shape_err(format!(
                "policy has {} actions, got action {} and mean {}",
                self.act_dim(),
                a.len(),
                mu.len()
            ));
        }
        Ok(log_density_unchecked(a, mu, &self.sigma()))
    }

    /// Draws `a = mu(s) + sigma * z` and returns it with its log density.
    pub fn sample_action<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mu = self.forward_mean(s)?;
        let sigma = self.sigma();
        let a: Vec<f64> = mu
            .iter()
            .zip(&sigma)
            .map(|(m, sd)| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let logp = log_density_unchecked(&a, &mu, &sigma);
        Ok((a, logp))
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        let half_log_2pi_e = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        self.log_sigma.iter().map(|l| l + half_log_2pi_e).sum()
    }

    /// One optimizer step on every policy parameter.
    pub fn apply_gradients(&mut self, grad: &PolicyGrad, opt: &mut Adam) -> Result<()> {
        opt.step(&mut [
            (self.mean_net.as_mut_slice(), &grad.mean),
            (&mut self.log_sigma, &grad.log_sigma),
        ])
    }

    /// FNV-1a over the parameter bit patterns; used to prove snapshots are frozen.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.mean_net.as_slice().iter().chain(&self.log_sigma) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// State-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub value_net: MlpParams,
}

impl ValueFunction {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self {
            value_net: MlpParams::init(&layer_sizes(obs_dim, hidden, 1), 1.0, rng)?,
        })
    }

    pub fn from_net(value_net: MlpParams) -> Result<Self> {
        if value_net.output_dim() != 1 {
            return shape_err(format!("value network must emit 1 output, has {}", value_net.output_dim()));
        }
        Ok(Self { value_net })
    }

    pub fn num_params(&self) -> usize {
        self.value_net.num_params()
    }

    fn check_finite(&self) -> Result<()> {
        if self.value_net.is_finite() {
            Ok(())
        } else {
            Err(Error::PoisonedParameters("value function contains a non-finite parameter".into()))
        }
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        self.check_finite()?;
        Ok(self.value_net.forward_one(s)?[0])
    }

    pub fn value_batch(&self, states: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_finite()?;
        Ok(self.value_net.forward(states)?.into_raw_vec_and_offset().0)
    }

    pub fn apply_gradients(&mut self, grad: &[f64], opt: &mut Adam) -> Result<()> {
        opt.step(&mut [(self.value_net.as_mut_slice(), grad)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotTag {
    Old,
    Last,
}

/// Frozen, shareable copy of a policy. Dereferences to the policy for read access.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    policy: Arc<GaussianPolicy>,
    tag: SnapshotTag,
}

impl PolicySnapshot {
    pub fn capture(policy: &GaussianPolicy, tag: SnapshotTag) -> Self {
        Self {
            policy: Arc::new(policy.clone()),
            tag,
        }
    }

    pub fn tag(&self) -> SnapshotTag {
        self.tag
    }
}

impl Deref for PolicySnapshot {
    type Target = GaussianPolicy;

    fn deref(&self) -> &GaussianPolicy {
        &self.policy
    }
}
