//! Scenario documents: base environment, actuator perturbation and goal sets.
//!
//! ```toml
//! format = "asl-scenario"
//! version = 1
//! name = "a2.1"
//! env = "crawler"              # or "triangle"
//! train_goals = [0, 1, 2, 3, 4, 5, 6, 7]
//! eval_goals = [0, 1, 2, 3, 4, 5, 6, 7]
//! transforms = "path.toml"     # optional; defaults to the environment's own
//!
//! [perturbation]               # optional
//! modifiers = [0.65, 0.75, 0.85, 0.95, 1.05, 1.15, 1.25, 1.35]
//! clip = "fixed"               # or "scaled"
//! ground_truth = true          # score fitted slopes against the modifiers
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::{inject_perturbation, ClipMode, Crawler, Dynamics, Environment, PerturbationConfig, TriangleRobot};
use crate::error::{Error, Result};
use crate::symmetry::{load_transforms, TransformSpec};

pub const SCENARIO_FORMAT: &str = "asl-scenario";
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Triangle,
    Crawler,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub modifiers: Vec<f64>,
    #[serde(default)]
    pub clip: ClipMode,
    #[serde(default)]
    pub ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub env: EnvKind,
    pub train_goals: Vec<usize>,
    pub eval_goals: Vec<usize>,
    #[serde(default)]
    pub transforms: Option<PathBuf>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSection>,
}

impl Scenario {
    /// Unperturbed scenario over every goal of `env`.
    pub fn unperturbed(name: &str, env: EnvKind) -> Self {
        let goals: Vec<usize> = match env {
            EnvKind::Triangle => vec![0],
            EnvKind::Crawler => (0..super::crawler::NUM_GOALS).collect(),
        };
        Self {
            format: SCENARIO_FORMAT.into(),
            version: SCENARIO_VERSION,
            name: name.into(),
            env,
            train_goals: goals.clone(),
            eval_goals: goals,
            transforms: None,
            perturbation: None,
        }
    }

    pub fn dynamics(&self) -> Arc<dyn Dynamics> {
        match self.env {
            EnvKind::Triangle => Arc::new(TriangleRobot::new()),
            EnvKind::Crawler => Arc::new(Crawler::new()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SCENARIO_FORMAT {
            return Err(Error::Config(format!(
                "expected format `{SCENARIO_FORMAT}`, found `{}`",
                self.format
            )));
        }
        if self.version != SCENARIO_VERSION {
            return Err(Error::Config(format!("unsupported scenario version {}", self.version)));
        }
        let dynamics = self.dynamics();
        let spec = dynamics.spec();
        for (what, goals) in [("train_goals", &self.train_goals), ("eval_goals", &self.eval_goals)] {
            if goals.is_empty() {
                return Err(Error::Config(format!("{what} is empty")));
            }
            if let Some(g) = goals.iter().find(|g| **g >= spec.num_goals) {
                return Err(Error::Config(format!("{what} contains goal {g}; {} has {}", spec.name, spec.num_goals)));
            }
        }
        if let Some(p) = &self.perturbation {
            if p.modifiers.len() != spec.act_dim {
                return Err(Error::Config(format!(
                    "{} modifiers for {} action slots",
                    p.modifiers.len(),
                    spec.act_dim
                )));
            }
            PerturbationConfig::new(p.modifiers.clone(), p.clip)?;
        }
        Ok(())
    }

    pub fn perturbation_config(&self) -> Result<Option<PerturbationConfig>> {
        self.perturbation
            .as_ref()
            .map(|p| PerturbationConfig::new(p.modifiers.clone(), p.clip))
            .transpose()
    }

    pub fn build_env(&self) -> Result<Environment> {
        let env = Environment::new(self.dynamics());
        match self.perturbation_config()? {
            Some(cfg) => inject_perturbation(env, cfg),
            None => Ok(env),
        }
    }

    /// Declared transforms: the override file if given, else the environment's own.
    pub fn transform_specs(&self, base_dir: Option<&Path>) -> Result<Vec<TransformSpec>> {
        let dynamics = self.dynamics();
        let specs = match &self.transforms {
            Some(path) => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                load_transforms(&full)?
            }
            None => dynamics.spec().transforms.clone(),
        };
        let spec = dynamics.spec();
        for t in &specs {
            if t.obs_dim() != spec.obs_dim || t.act_dim() != spec.act_dim {
                return Err(Error::InvalidTransform {
                    transform: t.name.clone(),
                    reason: format!(
                        "declared for {}-dim states and {}-dim actions, environment has {} and {}",
                        t.obs_dim(),
                        t.act_dim(),
                        spec.obs_dim,
                        spec.act_dim
                    ),
                });
            }
        }
        Ok(specs)
    }

    /// Modifiers to score fitted slopes against, when the scenario declares them as ground truth.
    pub fn ground_truth_modifiers(&self) -> Option<&[f64]> {
        self.perturbation
            .as_ref()
            .filter(|p| p.ground_truth)
            .map(|p| p.modifiers.as_slice())
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text)?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}
