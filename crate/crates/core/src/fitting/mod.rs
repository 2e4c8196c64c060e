//! Online fitting of the action-transform estimators from the policy itself.

pub mod dataset;
pub mod round;

use serde::Deserialize;

use crate::error::{Error, Result};

pub use dataset::{build_pair_dataset, build_single_dataset, pair_sections, Section};
pub use round::{
    cycle_error, fit_round, function_weight, ground_truth_multipliers, slot_weights, update_weight, FitReport,
    FitState, LocalFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
pub enum FitForm {
    /// `y = m x + b` for pairs, `y = -x + b` for singles.
    #[default]
    #[serde(rename = "mx+b", alias = "mxb")]
    MxB,
    /// `y = m x`; singles stay unbiased.
    #[serde(rename = "mx")]
    Mx,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub enabled: bool,
    pub form: FitForm,
    /// Largest update weight; also the weight of pairs outside every cycle and of singles.
    pub max_update: f64,
    /// `k` in the cycle penalty; the weight halves at a cycle error of `k^(1/4)`.
    pub cycle_softness: f64,
    /// Base of the target-spread penalty `base^-x`.
    pub spread_base: f64,
    /// Fit rounds kept in each estimator's target history.
    pub history: usize,
    /// Estimators with fewer data points skip the round.
    pub min_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            form: FitForm::MxB,
            max_update: 0.05,
            cycle_softness: 0.01,
            spread_base: 1.1,
            history: 10,
            min_points: 64,
        }
    }
}

impl FitConfig {
    /// Cycle penalty `max_update * k / (k + x^4)`.
    pub fn h_u(&self, x: f64) -> f64 {
        self.max_update * self.cycle_softness / (self.cycle_softness + x.powi(4))
    }

    /// Target-spread penalty `base^-x`.
    pub fn h_g(&self, x: f64) -> f64 {
        self.spread_base.powf(-x)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("fitting.{what} out of range")));
        if !(self.max_update > 0.0 && self.max_update <= 1.0) {
            return bad("max_update");
        }
        if !(self.cycle_softness > 0.0) {
            return bad("cycle_softness");
        }
        if !(self.spread_base >= 1.0) || !self.spread_base.is_finite() {
            return bad("spread_base");
        }
        if self.history == 0 {
            return bad("history");
        }
        if self.min_points < 2 {
            return bad("min_points");
        }
        Ok(())
    }
}
