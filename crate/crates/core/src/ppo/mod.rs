//! Rollout collection, advantage estimation and the clipped-surrogate update
//! that the symmetry losses attach to.

pub mod gae;
pub mod loss;
pub mod rollout;
pub mod update;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::nn::AdamConfig;

pub use gae::{compute_gae, normalize_advantages};
pub use loss::{clipped_surrogate, evaluate_loss, ppo_loss, LossEval, LossTerms, OutputGrads, StackedOutputs};
pub use rollout::{build_batch, RawRollout, RolloutBatch, RolloutWorker};
pub use update::{update_epochs, Optimizers, UpdateStats};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub batch_steps: usize,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.4,
            gamma: 0.99,
            lambda: 0.9,
            epochs: 20,
            minibatch_size: 64,
            entropy_coef: 0.0,
            value_coef: 0.5,
            learning_rate: 3e-5,
            batch_steps: 4096,
            max_grad_norm: 0.5,
            hidden: vec![256, 256],
            log_std_init: -1.0,
        }
    }
}

impl PpoConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            max_grad_norm: Some(self.max_grad_norm),
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("ppo.{what} out of range")));
        if !(self.clip > 0.0) {
            return bad("clip");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.batch_steps < 2 {
            return bad("epochs/minibatch_size/batch_steps");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate/max_grad_norm");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("entropy_coef/value_coef");
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return bad("hidden");
        }
        Ok(())
    }
}
