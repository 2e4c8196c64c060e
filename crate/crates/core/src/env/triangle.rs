//! Three-limb planar robot with threefold rotational and three reflection
//! symmetries. State `[X0, X1, X2, Z]`: limb coordinates plus a decaying clock.

use rand::{Rng, RngCore};

use super::{Dynamics, EnvSpec, Transition};
use crate::error::{shape_err, Result};
use crate::symmetry::{TransformKind, TransformSpec};

pub const KAPPA: f64 = 0.1;
pub const Z_DECAY: f64 = 0.01;
pub const STEP_LIMIT: usize = 100;

#[derive(Debug, Clone)]
pub struct TriangleRobot {
    gains: [f64; 3],
    spec: EnvSpec,
}

/// Transforms a-e. With non-unit `gains` the action multipliers absorb the
/// gain ratios so the dynamics stay equivariant.
pub fn triangle_transforms(gains: [f64; 3]) -> Vec<TransformSpec> {
    let mk = |name: &str, kind: TransformKind, idx: [usize; 3]| {
        let sign = if kind == TransformKind::Reflection { -1.0 } else { 1.0 };
        let mut obs_idx = idx.to_vec();
        obs_idx.push(3);
        let mut obs_mult = vec![sign; 3];
        obs_mult.push(1.0);
        let act_mult = (0..3).map(|u| sign * gains[idx[u]] / gains[u]).collect();
        TransformSpec::new(name, kind, obs_idx, obs_mult, idx.to_vec(), act_mult).expect("static triangle transform")
    };
    use TransformKind::*;
    vec![
        mk("a", Reflection, [0, 2, 1]),
        mk("b", Reflection, [2, 1, 0]),
        mk("c", Reflection, [1, 0, 2]),
        mk("d", Rotation, [2, 0, 1]),
        mk("e", Rotation, [1, 2, 0]),
    ]
}

impl TriangleRobot {
    pub fn new() -> Self {
        Self::with_gains([1.0; 3])
    }

    /// Limb `i` moves by `KAPPA * gains[i] * a[i]`; declared transforms stay the unit prior.
    pub fn with_gains(gains: [f64; 3]) -> Self {
        Self {
            gains,
            spec: EnvSpec {
                name: "triangle".into(),
                obs_dim: 4,
                act_dim: 3,
                transforms: triangle_transforms([1.0; 3]),
                step_limit: STEP_LIMIT,
                no_progress_window: None,
                num_goals: 1,
            },
        }
    }

    pub fn gains(&self) -> [f64; 3] {
        self.gains
    }
}

impl Default for TriangleRobot {
    fn default() -> Self {
        Self::new()
    }
}

impl Dynamics for TriangleRobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, _goal: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut s: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        s.push(1.0);
        Ok(s)
    }

    fn transition(&self, s: &[f64], a: &[f64]) -> Result<Transition> {
        if s.len() != 4 || a.len() != 3 {
            return shape_err(format!("triangle needs a 4-state and 3-action, got {} and {}", s.len(), a.len()));
        }
        let mut next = s.to_vec();
        for i in 0..3 {
            next[i] += KAPPA * self.gains[i] * a[i];
        }
        next[3] -= Z_DECAY;
        let before: f64 = s[..3].iter().map(|x| x * x).sum();
        let after: f64 = next[..3].iter().map(|x| x * x).sum();
        Ok(Transition {
            state: next,
            reward: -after,
            failed: false,
            progress: before - after,
        })
    }
}
