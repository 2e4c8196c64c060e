//! Experiment configuration documents.
//!
//! ```toml
//! format = "asl-experiment"
//! version = 1
//! scenario = "../scenarios/a1.toml"   # relative to this file
//! total_steps = 200000
//! seeds = [0, 1, 2, 3, 4]
//! out_dir = "runs/a1-asl"             # relative to the working directory
//!
//! [ppo]
//! hidden = [64, 64]
//!
//! [symmetry]
//! method = "asl"
//! policy_weight = 0.05
//!
//! [fitting]
//! enabled = true
//! ```
//!
//! Every table is optional; missing keys take their defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::env::{load_scenario, Scenario};
use crate::error::{Error, Result};
use crate::fitting::FitConfig;
use crate::losses::{Method, SymLossConfig};
use crate::ppo::PpoConfig;

pub const EXPERIMENT_FORMAT: &str = "asl-experiment";
pub const EXPERIMENT_VERSION: u32 = 1;

/// Hidden widths and step budget of the scaled-down runs.
pub const DESK_HIDDEN: [usize; 2] = [64, 64];
pub const DESK_TOTAL_STEPS: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format: String,
    pub version: u32,
    pub scenario: PathBuf,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub symmetry: SymLossConfig,
    #[serde(default)]
    pub fitting: FitConfig,
    /// Directory the scenario path is resolved against; set by [`load_config`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Iteration counts between evaluation, logging and checkpoint events.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub eval_every: u64,
    pub log_every: u64,
    pub eval_episodes: usize,
    pub checkpoint_every: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            eval_every: 15,
            log_every: 5,
            eval_episodes: 16,
            checkpoint_every: 15,
        }
    }
}

fn default_total_steps() -> u64 {
    4_000_000
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// Configuration for `scenario` with every other field at its default.
    pub fn new(scenario: impl Into<PathBuf>, method: Method) -> Self {
        Self {
            format: EXPERIMENT_FORMAT.into(),
            version: EXPERIMENT_VERSION,
            scenario: scenario.into(),
            total_steps: default_total_steps(),
            seeds: default_seeds(),
            out_dir: None,
            schedule: Schedule::default(),
            ppo: PpoConfig::default(),
            symmetry: SymLossConfig::with_method(method),
            fitting: FitConfig::default(),
            base_dir: None,
        }
    }

    pub fn method(&self) -> Method {
        self.symmetry.method
    }

    /// Scaled-down budget and network width.
    pub fn desk(mut self) -> Self {
        self.ppo.hidden = DESK_HIDDEN.to_vec();
        self.total_steps = DESK_TOTAL_STEPS;
        self
    }

    /// Training iterations; a trailing partial batch is dropped.
    pub fn iterations(&self) -> u64 {
        self.total_steps / self.ppo.batch_steps as u64
    }

    /// Evaluations happen after every `eval_every`-th iteration, not before training.
    pub fn evaluation_points(&self) -> u64 {
        self.iterations() / self.schedule.eval_every
    }

    pub fn scenario_path(&self) -> PathBuf {
        match &self.base_dir {
            Some(dir) if self.scenario.is_relative() => dir.join(&self.scenario),
            _ => self.scenario.clone(),
        }
    }

    pub fn load_scenario(&self) -> Result<Scenario> {
        load_scenario(&self.scenario_path())
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != EXPERIMENT_FORMAT {
            return Err(Error::Config(format!(
                "expected format `{EXPERIMENT_FORMAT}`, found `{}`",
                self.format
            )));
        }
        if self.version != EXPERIMENT_VERSION {
            return Err(Error::Config(format!("unsupported experiment version {}", self.version)));
        }
        self.ppo.validate()?;
        self.symmetry.validate()?;
        self.fitting.validate()?;
        if self.iterations() == 0 {
            return Err(Error::Config(format!(
                "total_steps {} is below one batch of {}",
                self.total_steps, self.ppo.batch_steps
            )));
        }
        if self.total_steps % self.ppo.batch_steps as u64 != 0 {
            log::warn!(
                "total_steps {} is not a multiple of batch_steps {}; the last {} steps are dropped",
                self.total_steps,
                self.ppo.batch_steps,
                self.total_steps % self.ppo.batch_steps as u64
            );
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds is empty".into()));
        }
        let s = &self.schedule;
        if s.eval_every == 0 || s.log_every == 0 || s.eval_episodes == 0 || s.checkpoint_every == 0 {
            return Err(Error::Config("schedule intervals must be positive".into()));
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(&std::fs::read_to_string(path)?)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf);
    Ok(cfg)
}
