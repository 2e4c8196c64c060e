use serde::Deserialize;

use super::Environment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// Clip the modified command to `[-1, 1]`.
    #[default]
    Fixed,
    /// Clip the modified command to `[-|AM_i|, |AM_i|]`.
    Scaled,
}

/// Unobservable per-slot actuator gain applied before the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    pub modifiers: Vec<f64>,
    pub clip: ClipMode,
    pub enabled: bool,
}

impl PerturbationConfig {
    pub fn identity(act_dim: usize) -> Self {
        Self {
            modifiers: vec![1.0; act_dim],
            clip: ClipMode::Fixed,
            enabled: false,
        }
    }

    pub fn new(modifiers: Vec<f64>, clip: ClipMode) -> Result<Self> {
        if let Some((i, m)) = modifiers.iter().enumerate().find(|(_, m)| !m.is_finite() || **m == 0.0) {
            return Err(Error::Domain(format!("action modifier {i} is {m}")));
        }
        Ok(Self {
            modifiers,
            clip,
            enabled: true,
        })
    }

    /// `clip(AM * a, range)`; disabled configs only clip to `[-1, 1]`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        if !self.enabled {
            return a.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        }
        a.iter()
            .zip(&self.modifiers)
            .map(|(x, m)| {
                let v = m * x;
                match self.clip {
                    ClipMode::Fixed => v.clamp(-1.0, 1.0),
                    ClipMode::Scaled => v.clamp(-m.abs(), m.abs()),
                }
            })
            .collect()
    }
}

pub fn inject_perturbation(mut env: Environment, cfg: PerturbationConfig) -> Result<Environment> {
    if cfg.modifiers.len() != env.spec().act_dim {
        return Err(Error::Shape(format!(
            "{} modifiers for {} action slots",
            cfg.modifiers.len(),
            env.spec().act_dim
        )));
    }
    env.set_perturbation(cfg);
    Ok(env)
}
