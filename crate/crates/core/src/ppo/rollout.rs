use ndarray::{Array2, Axis};
use rand::Rng;

use super::gae::{compute_gae, normalize_advantages};
use super::PpoConfig;
use crate::env::Environment;
use crate::error::{shape_err, Result};
use crate::nn::{GaussianPolicy, ValueFunction};
use crate::numerics::RunningWindow;
use crate::symmetry::TransformSpec;

/// One batch of experience plus everything the losses and the fitting stage
/// read from it. Row `t` of every matrix refers to the same time step.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub states: Array2<f64>,
    /// Sampled actions before the environment's clipping.
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    /// Last step of an episode segment: termination, truncation or batch cut.
    pub episode_end: Vec<bool>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    /// Old-policy means at `s_t`.
    pub means: Array2<f64>,
    /// `f_j(s_t)` for every declared transform `j`.
    pub sym_states: Vec<Array2<f64>>,
    /// Old-policy means at `f_j(s_t)`.
    pub sym_means: Vec<Array2<f64>>,
    /// Old value estimates at `f_j(s_t)`.
    pub sym_values: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    /// Returns of training episodes that finished inside this batch.
    pub episode_returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn act_dim(&self) -> usize {
        self.actions.ncols()
    }

    pub fn num_transforms(&self) -> usize {
        self.sym_states.len()
    }

    /// Mean `|V(s_t) - V(f_j(s_t))|` under the old critic, per transform.
    pub fn value_distance(&self) -> Vec<f64> {
        self.sym_values
            .iter()
            .map(|sv| {
                sv.iter().zip(&self.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / self.len().max(1) as f64
            })
            .collect()
    }
}

/// Raw transitions gathered by [`RolloutWorker::collect`].
#[derive(Debug, Clone)]
pub struct RawRollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub episode_end: Vec<bool>,
    /// Observation after each segment end that needs a bootstrap value.
    pub bootstrap: Vec<(usize, Vec<f64>)>,
    pub episode_returns: Vec<f64>,
}

/// Persistent sampler: keeps the environment mid-episode across batches and
/// cycles through the training goals.
#[derive(Debug, Clone)]
pub struct RolloutWorker {
    env: Environment,
    goals: Vec<usize>,
    next_goal: usize,
    obs: Option<Vec<f64>>,
    episode_return: f64,
}

impl RolloutWorker {
    pub fn new(env: Environment, goals: Vec<usize>) -> Self {
        assert!(!goals.is_empty(), "at least one training goal");
        Self {
            env,
            goals,
            next_goal: 0,
            obs: None,
            episode_return: 0.0,
        }
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    fn start_episode<R: Rng>(&mut self, rng: &mut R) -> Result<Vec<f64>> {
        let goal = self.goals[self.next_goal];
        self.next_goal = (self.next_goal + 1) % self.goals.len();
        self.episode_return = 0.0;
        self.env.reset(goal, rng)
    }

    /// Samples `steps` transitions, pushing every visited state into `window`.
    pub fn collect<R: Rng>(
        &mut self,
        policy: &GaussianPolicy,
        steps: usize,
        rng: &mut R,
        mut window: Option<&mut RunningWindow>,
    ) -> Result<RawRollout> {
        let mut raw = RawRollout {
            states: Vec::with_capacity(steps),
            actions: Vec::with_capacity(steps),
            log_probs: Vec::with_capacity(steps),
            rewards: Vec::with_capacity(steps),
            terminated: Vec::with_capacity(steps),
            episode_end: Vec::with_capacity(steps),
            bootstrap: Vec::new(),
            episode_returns: Vec::new(),
        };
        for t in 0..steps {
            let obs = match self.obs.take() {
                Some(o) => o,
                None => self.start_episode(rng)?,
            };
            if let Some(w) = window.as_deref_mut() {
                w.push(&obs)?;
            }
            let (action, logp) = policy.sample_action(&obs, rng)?;
            let step = self.env.step(&action)?;
            self.episode_return += step.reward;
            let done = step.terminated || step.truncated;
            let cut = t + 1 == steps;
            raw.states.push(obs);
            raw.actions.push(action);
            raw.log_probs.push(logp);
            raw.rewards.push(step.reward);
            raw.terminated.push(step.terminated);
            raw.episode_end.push(done || cut);
            if done {
                raw.episode_returns.push(self.episode_return);
            }
            if !step.terminated && (done || cut) {
                raw.bootstrap.push((t, step.state.clone()));
            }
            if !done {
                self.obs = Some(step.state);
            }
        }
        Ok(raw)
    }
}

fn to_matrix(rows: &[Vec<f64>], cols: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        if r.len() != cols {
            return shape_err(format!("row of length {} in a {cols}-column matrix", r.len()));
        }
        flat.extend_from_slice(r);
    }
    Ok(Array2::from_shape_vec((rows.len(), cols), flat).expect("checked lengths"))
}

/// Applies `spec` to every row.
pub fn transform_rows(spec: &TransformSpec, states: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(states.raw_dim());
    for (src, mut dst) in states.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        spec.apply_state_into(src.as_slice().expect("standard layout"), dst.as_slice_mut().expect("standard layout"))?;
    }
    Ok(out)
}

/// Turns raw transitions into a training batch under the old policy and critic.
pub fn build_batch(
    raw: RawRollout,
    policy_old: &GaussianPolicy,
    value_old: &ValueFunction,
    transforms: &[TransformSpec],
    cfg: &PpoConfig,
) -> Result<RolloutBatch> {
    let obs_dim = policy_old.obs_dim();
    let act_dim = policy_old.act_dim();
    let states = to_matrix(&raw.states, obs_dim)?;
    let actions = to_matrix(&raw.actions, act_dim)?;
    let values = value_old.value_batch(states.view())?;
    let n = values.len();

    let mut next_values = vec![0.0; n];
    for t in 0..n.saturating_sub(1) {
        next_values[t] = values[t + 1];
    }
    if !raw.bootstrap.is_empty() {
        let rows: Vec<Vec<f64>> = raw.bootstrap.iter().map(|(_, s)| s.clone()).collect();
        let boot = value_old.value_batch(to_matrix(&rows, obs_dim)?.view())?;
        for ((t, _), v) in raw.bootstrap.iter().zip(boot) {
            next_values[*t] = v;
        }
    }

    let (mut advantages, value_targets) = compute_gae(
        &raw.rewards,
        &values,
        &next_values,
        &raw.terminated,
        &raw.episode_end,
        cfg.gamma,
        cfg.lambda,
    )?;
    normalize_advantages(&mut advantages);

    let means = policy_old.forward_mean_batch(states.view())?;
    let mut sym_states = Vec::with_capacity(transforms.len());
    let mut sym_means = Vec::with_capacity(transforms.len());
    let mut sym_values = Vec::with_capacity(transforms.len());
    for spec in transforms {
        let fs = transform_rows(spec, &states)?;
        sym_means.push(policy_old.forward_mean_batch(fs.view())?);
        sym_values.push(value_old.value_batch(fs.view())?);
        sym_states.push(fs);
    }

    Ok(RolloutBatch {
        states,
        actions,
        log_probs: raw.log_probs,
        rewards: raw.rewards,
        terminated: raw.terminated,
        episode_end: raw.episode_end,
        values,
        next_values,
        means,
        sym_states,
        sym_means,
        sym_values,
        advantages,
        value_targets,
        episode_returns: raw.episode_returns,
    })
}
