//! Deterministic kinematic environments that are exactly equivariant under
//! their declared transforms, plus the actuator perturbation wrapper.

pub mod crawler;
pub mod perturb;
pub mod scenario;
pub mod triangle;

use std::fmt::Debug;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{shape_err, Result};
use crate::symmetry::TransformSpec;

pub use crawler::Crawler;
pub use perturb::{inject_perturbation, ClipMode, PerturbationConfig};
pub use scenario::{load_scenario, parse_scenario, EnvKind, PerturbationSection, Scenario};
pub use triangle::{triangle_transforms, TriangleRobot};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub transforms: Vec<TransformSpec>,
    pub step_limit: usize,
    /// Truncate after this many consecutive steps without new best progress.
    pub no_progress_window: Option<usize>,
    pub num_goals: usize,
}

/// One application of the deterministic dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub reward: f64,
    /// The state left the viable region (episode terminates, no bootstrap).
    pub failed: bool,
    /// Signed progress toward the goal made by this step.
    pub progress: f64,
}

pub trait Dynamics: Send + Sync + Debug {
    fn spec(&self) -> &EnvSpec;

    fn initial_state(&self, goal: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>>;

    /// Pure transition from an observation; observations are the full dynamic state.
    fn transition(&self, s: &[f64], a: &[f64]) -> Result<Transition>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Episode bookkeeping around a [`Dynamics`] with an action injector.
#[derive(Debug, Clone)]
pub struct Environment {
    dynamics: Arc<dyn Dynamics>,
    perturbation: PerturbationConfig,
    state: Vec<f64>,
    steps: usize,
    progress: f64,
    best_progress: f64,
    since_progress: usize,
    done: bool,
}

impl Environment {
    pub fn new(dynamics: Arc<dyn Dynamics>) -> Self {
        let act_dim = dynamics.spec().act_dim;
        Self {
            dynamics,
            perturbation: PerturbationConfig::identity(act_dim),
            state: Vec::new(),
            steps: 0,
            progress: 0.0,
            best_progress: 0.0,
            since_progress: 0,
            done: true,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        self.dynamics.spec()
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn perturbation(&self) -> &PerturbationConfig {
        &self.perturbation
    }

    pub(crate) fn set_perturbation(&mut self, cfg: PerturbationConfig) {
        self.perturbation = cfg;
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn reset(&mut self, goal: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.state = self.dynamics.initial_state(goal, rng)?;
        self.steps = 0;
        self.progress = 0.0;
        self.best_progress = 0.0;
        self.since_progress = 0;
        self.done = false;
        Ok(self.state.clone())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        assert!(!self.done, "step called on a finished episode; call reset first");
        let spec = self.dynamics.spec();
        if action.len() != spec.act_dim {
            return shape_err(format!("expected {} actions, got {}", spec.act_dim, action.len()));
        }
        let applied = self.perturbation.apply(action);
        let t = self.dynamics.transition(&self.state, &applied)?;
        self.steps += 1;
        self.progress += t.progress;
        if self.progress > self.best_progress + 1e-9 {
            self.best_progress = self.progress;
            self.since_progress = 0;
        } else {
            self.since_progress += 1;
        }
        let stalled = spec.no_progress_window.is_some_and(|w| self.since_progress >= w);
        let terminated = t.failed;
        let truncated = !terminated && (self.steps >= spec.step_limit || stalled);
        self.done = terminated || truncated;
        self.state = t.state.clone();
        Ok(StepResult {
            state: t.state,
            reward: t.reward,
            terminated,
            truncated,
        })
    }
}

/// `|| f_j(step(s, a)) - step(f_j(s), g_j(a)) ||_inf + |reward difference|`
/// on the raw dynamics.
pub fn equivariance_residual(dynamics: &dyn Dynamics, j: usize, s: &[f64], a: &[f64]) -> Result<f64> {
    let spec = &dynamics.spec().transforms[j];
    let direct = dynamics.transition(s, a)?;
    let mirrored = dynamics.transition(&spec.apply_state(s)?, &spec.apply_action(a)?)?;
    let image = spec.apply_state(&direct.state)?;
    let state_gap = image
        .iter()
        .zip(&mirrored.state)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(state_gap + (direct.reward - mirrored.reward).abs())
}
