//! The training loop: collect, build the batch, prepare the symmetry term,
//! update, then evaluate, log and checkpoint on schedule.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::eval::evaluate_policy;
use super::metrics::{MetricsRecord, MetricsSchema, MetricsWriter};
use crate::env::{Environment, Scenario};
use crate::error::{Error, Result};
use crate::fitting::{fit_round, ground_truth_multipliers, slot_weights, FitState};
use crate::losses::asl::{compute_gates, AslContext};
use crate::losses::msl::MslContext;
use crate::losses::psl::PslContext;
use crate::losses::{Method, SymWeights, SymmetryHook};
use crate::nn::{Checkpoint, GaussianPolicy, PolicySnapshot, SnapshotTag, ValueFunction};
use crate::numerics::{mean, window_mad, RunningWindow};
use crate::ppo::{build_batch, update_epochs, Optimizers, RolloutBatch, RolloutWorker, UpdateStats};
use crate::symmetry::{extract_relation_graph, EstimatorParams, RelationGraph, TransformSpec};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    /// `(iteration, mean evaluation return)` for every evaluation of this invocation.
    pub evaluations: Vec<(u64, f64)>,
    /// Updates rolled back after a non-finite step.
    pub aborted_updates: usize,
    pub final_nu: Option<Vec<f64>>,
}

impl TrainOutcome {
    pub fn final_eval(&self) -> Option<f64> {
        self.evaluations.last().map(|e| e.1)
    }
}

/// Seed of the evaluation episodes at `iteration`.
pub fn eval_seed(seed: u64, iteration: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ iteration.wrapping_add(0xE7A1)
}

/// Random stream of `iteration`; stream 0 initializes the networks.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// Loads the config's scenario and trains one seed into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64, out_dir: &Path, resume: bool) -> Result<TrainOutcome> {
    let scenario = cfg.load_scenario()?;
    let path = cfg.scenario_path();
    run_training(cfg, &scenario, path.parent(), seed, out_dir, resume)
}

struct AdaptiveState {
    graph: RelationGraph,
    fit: FitState,
    window: RunningWindow,
}

/// Trains one seed. `scenario_dir` resolves a relative transforms path.
///
/// With `resume`, training restarts after the iteration stored in
/// `out_dir/checkpoint.txt`; metrics rows past it are dropped.
pub fn run_training(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    scenario_dir: Option<&Path>,
    seed: u64,
    out_dir: &Path,
    resume: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    scenario.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);

    let env = scenario.build_env()?;
    let specs = scenario.transform_specs(scenario_dir)?;
    let weights = cfg.symmetry.resolve(&specs)?;
    let method = cfg.method();
    let (obs_dim, act_dim) = (env.spec().obs_dim, env.spec().act_dim);
    let b = cfg.ppo.batch_steps;

    let mut init_rng = iteration_rng(seed, 0);
    let mut policy = GaussianPolicy::new(obs_dim, act_dim, &cfg.ppo.hidden, cfg.ppo.log_std_init, &mut init_rng)?;
    let mut value = ValueFunction::new(obs_dim, &cfg.ppo.hidden, &mut init_rng)?;
    let mut opts = Optimizers::new(&policy, &value, &cfg.ppo);

    let mut adaptive = if method == Method::Asl {
        let graph = extract_relation_graph(&specs)?;
        let nu = EstimatorParams::from_declared(&graph, &specs)?;
        Some(AdaptiveState {
            fit: FitState::new(nu),
            window: RunningWindow::new(cfg.symmetry.window_batches * b, obs_dim),
            graph,
        })
    } else {
        None
    };
    let fitting = adaptive.is_some() && cfg.fitting.enabled;
    let ground_truth = match (&adaptive, scenario.ground_truth_modifiers()) {
        (Some(a), Some(m)) if fitting => Some(ground_truth_multipliers(m, &a.graph)?),
        _ => None,
    };
    let schema = MetricsSchema::new(
        &specs,
        adaptive.is_some(),
        adaptive.as_ref().filter(|_| fitting).map(|a| &a.graph),
        ground_truth,
    );

    let mut start = 0;
    let mut metrics = if resume && checkpoint_path.exists() {
        let ck = Checkpoint::load(&checkpoint_path)?;
        if ck.policy.obs_dim() != obs_dim || ck.policy.act_dim() != act_dim {
            return Err(Error::Checkpoint("checkpoint does not fit this scenario".into()));
        }
        policy = ck.policy;
        value = ck.value;
        if let (Some(p), Some(v)) = (ck.policy_opt, ck.value_opt) {
            opts = Optimizers { policy: p, value: v };
        }
        if let (Some(a), Some(nu)) = (adaptive.as_mut(), ck.nu) {
            a.fit = FitState::new(EstimatorParams::from_flat(&a.graph, &nu)?);
        }
        start = ck.iteration;
        log::info!("resuming after iteration {start}");
        MetricsWriter::resume(&metrics_path, schema, start)?
    } else {
        MetricsWriter::create(&metrics_path, schema)?
    };

    let sched = &cfg.schedule;
    let mut outcome = TrainOutcome {
        metrics: metrics_path,
        checkpoint: checkpoint_path.clone(),
        evaluations: Vec::new(),
        aborted_updates: 0,
        final_nu: None,
    };
    let evaluate = |policy: &GaussianPolicy, it: u64| -> Result<f64> {
        evaluate_policy(&env, policy, &scenario.eval_goals, sched.eval_episodes, eval_seed(seed, it))
    };
    let mut worker = RolloutWorker::new(env.clone(), scenario.train_goals.clone());
    let iterations = cfg.iterations();
    for it in start + 1..=iterations {
        let mut rng = iteration_rng(seed, it);
        let raw = worker.collect(&policy, b, &mut rng, adaptive.as_mut().map(|a| &mut a.window))?;
        let batch = build_batch(raw, &policy, &value, &specs, &cfg.ppo)?;

        let saved = (policy.clone(), value.clone(), opts.clone(), adaptive.as_ref().map(|a| a.fit.clone()));
        let (hook, nsrr) = prepare_hook(cfg, &specs, &weights, &batch, &policy, adaptive.as_mut())?;
        let mut last = PolicySnapshot::capture(&policy, SnapshotTag::Last);
        let stats = match update_epochs(&batch, &mut policy, &mut value, &mut opts, &cfg.ppo, &hook, &mut rng, &mut last) {
            Ok(s) => Some(s),
            Err(e @ (Error::AbortUpdate(_) | Error::PoisonedParameters(_))) => {
                log::warn!("iteration {it}: {e}; rolling back to the pre-batch parameters");
                (policy, value, opts) = (saved.0, saved.1, saved.2);
                if let (Some(a), Some(fit)) = (adaptive.as_mut(), saved.3) {
                    a.fit = fit;
                }
                outcome.aborted_updates += 1;
                None
            }
            Err(e) => return Err(e),
        };

        let eval_now = it % sched.eval_every == 0;
        let log_now = it % sched.log_every == 0;
        let eval_return = if eval_now {
            let r = evaluate(&policy, it)?;
            outcome.evaluations.push((it, r));
            Some(r)
        } else {
            None
        };
        if eval_now || log_now {
            let rec = record(it, it * b as u64, eval_return, &batch, stats.as_ref(), nsrr, adaptive.as_ref().filter(|_| fitting));
            metrics.write(&rec)?;
        }
        if it % sched.checkpoint_every == 0 || it == iterations {
            Checkpoint {
                iteration: it,
                timestep: it * b as u64,
                policy: policy.clone(),
                value: value.clone(),
                policy_opt: Some(opts.policy.clone()),
                value_opt: Some(opts.value.clone()),
                nu: adaptive.as_ref().map(|a| a.fit.nu.to_flat()),
            }
            .save(&checkpoint_path)?;
        }
    }
    metrics.finish()?;
    outcome.final_nu = adaptive.map(|a| a.fit.nu.to_flat());
    Ok(outcome)
}

/// Symmetry term for this batch, plus the NSRR per transform when gates were computed.
fn prepare_hook(
    cfg: &ExperimentConfig,
    specs: &[TransformSpec],
    weights: &SymWeights,
    batch: &RolloutBatch,
    policy: &GaussianPolicy,
    adaptive: Option<&mut AdaptiveState>,
) -> Result<(SymmetryHook, Option<Vec<f64>>)> {
    let sigma_old = policy.sigma();
    Ok(match cfg.method() {
        Method::None => (SymmetryHook::None, None),
        Method::Msl => (SymmetryHook::Msl(MslContext::new(weights.clone(), specs.to_vec())), None),
        Method::Psl => (
            SymmetryHook::Psl(PslContext::prepare(weights.clone(), specs, batch, &sigma_old)?),
            None,
        ),
        Method::Asl => {
            let a = adaptive.expect("adaptive state exists for the adaptive method");
            let mad = window_mad(&a.window)?;
            let gates = compute_gates(batch, &weights.k_d, &mad, cfg.symmetry.k_v)?;
            let w_g = if cfg.fitting.enabled {
                fit_round(batch, &a.graph, specs, Some(&gates.psi), &mut a.fit, &cfg.fitting)?.w_g
            } else {
                slot_weights(&a.graph, &a.fit.estimator_weights(&cfg.fitting))
            };
            let nsrr = gates.nsrr.clone();
            let ctx = AslContext::prepare(
                weights.clone(),
                a.graph.clone(),
                a.fit.nu.clone(),
                w_g,
                gates,
                sigma_old,
                cfg.ppo.clip,
            )?;
            (SymmetryHook::Asl(ctx), Some(nsrr))
        }
    })
}

fn record(
    iteration: u64,
    timestep: u64,
    eval_return: Option<f64>,
    batch: &RolloutBatch,
    stats: Option<&UpdateStats>,
    nsrr: Option<Vec<f64>>,
    fitted: Option<&AdaptiveState>,
) -> MetricsRecord {
    MetricsRecord {
        iteration,
        timestep,
        eval_return,
        train_return: (!batch.episode_returns.is_empty()).then(|| mean(&batch.episode_returns)),
        surrogate: stats.map(|s| s.mean_surrogate),
        value_loss: stats.map(|s| s.mean_value_loss),
        sym_loss: stats.map(|s| s.mean_symmetry_loss),
        value_dist: Some(batch.value_distance()),
        nsrr,
        nu: fitted.map(|a| a.fit.nu.to_flat()),
    }
}

/// Mean deterministic return of a saved policy on a scenario's evaluation goals.
pub fn evaluate_checkpoint(checkpoint: &Path, scenario: &Scenario, episodes: usize, seed: u64) -> Result<f64> {
    let ck = Checkpoint::load(checkpoint)?;
    let env: Environment = scenario.build_env()?;
    evaluate_policy(&env, &ck.policy, &scenario.eval_goals, episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvKind;
    use crate::harness::metrics::read_table;

    fn small(method: Method) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new("unused", method);
        cfg.ppo.hidden = vec![8];
        cfg.ppo.batch_steps = 128;
        cfg.ppo.epochs = 2;
        cfg.ppo.minibatch_size = 32;
        cfg.total_steps = 128 * 6;
        cfg.schedule.eval_every = 3;
        cfg.schedule.log_every = 2;
        cfg.schedule.eval_episodes = 2;
        cfg.schedule.checkpoint_every = 2;
        cfg.fitting.min_points = 16;
        cfg
    }

    fn crawler() -> Scenario {
        Scenario::unperturbed("crawler", EnvKind::Crawler)
    }

    #[test]
    fn fixed_seed_runs_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Method::None);
        cfg.total_steps = 128 * 3;
        let a = run_training(&cfg, &crawler(), None, 7, &dir.path().join("a"), false).unwrap();
        let b = run_training(&cfg, &crawler(), None, 7, &dir.path().join("b"), false).unwrap();
        let ta = std::fs::read_to_string(&a.metrics).unwrap();
        assert_eq!(ta, std::fs::read_to_string(&b.metrics).unwrap());
        assert_eq!(
            std::fs::read_to_string(&a.checkpoint).unwrap(),
            std::fs::read_to_string(&b.checkpoint).unwrap()
        );
        let c = run_training(&cfg, &crawler(), None, 8, &dir.path().join("c"), false).unwrap();
        assert_ne!(ta, std::fs::read_to_string(&c.metrics).unwrap());
    }

    #[test]
    fn schedule_of_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_training(&small(Method::Msl), &crawler(), None, 1, dir.path(), false).unwrap();
        let t = read_table(&out.metrics).unwrap();
        let its: Vec<f64> = t.rows.iter().map(|r| r[0].unwrap()).collect();
        // evaluation at 3, 6; logging at 2, 4, 6
        assert_eq!(its, vec![2.0, 3.0, 4.0, 6.0]);
        let evals: Vec<u64> = out.evaluations.iter().map(|e| e.0).collect();
        assert_eq!(evals, vec![3, 6]);
        let c = t.column("eval_return").unwrap();
        assert!(t.rows[0][c].is_none() && t.rows[1][c].is_some());
        assert!(t.header.iter().all(|h| !h.starts_with("nsrr") && !h.starts_with("m_")));
    }

    #[test]
    fn fitting_disabled_keeps_estimators_at_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Method::Asl);
        cfg.fitting.enabled = false;
        let out = run_training(&cfg, &crawler(), None, 2, dir.path(), false).unwrap();
        let specs = crawler().transform_specs(None).unwrap();
        let graph = extract_relation_graph(&specs).unwrap();
        let init = EstimatorParams::from_declared(&graph, &specs).unwrap().to_flat();
        assert_eq!(out.final_nu.unwrap(), init);
        let header = read_table(&out.metrics).unwrap().header;
        assert!(header.iter().any(|h| h.starts_with("nsrr_")));
        assert!(!header.iter().any(|h| h.starts_with("m_")));
    }

    #[test]
    fn adaptive_run_with_ground_truth_logs_estimators() {
        let dir = tempfile::tempdir().unwrap();
        let mut sc = crawler();
        sc.perturbation = Some(crate::env::PerturbationSection {
            modifiers: vec![0.65, 0.75, 0.85, 0.95, 1.05, 1.15, 1.25, 1.35],
            clip: Default::default(),
            ground_truth: true,
        });
        let out = run_training(&small(Method::Asl), &sc, None, 3, dir.path(), false).unwrap();
        let t = read_table(&out.metrics).unwrap();
        let c = t.column("m_err_mean").unwrap();
        assert!(t.rows.iter().all(|r| r[c].is_some_and(f64::is_finite)));
        assert_eq!(out.aborted_updates, 0);
    }

    #[test]
    fn resume_continues_after_the_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(Method::Psl);
        let mut short = cfg.clone();
        short.total_steps = 128 * 4;
        run_training(&short, &crawler(), None, 5, dir.path(), false).unwrap();
        let ck = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(ck.iteration, 4);
        let out = run_training(&cfg, &crawler(), None, 5, dir.path(), true).unwrap();
        let evals: Vec<u64> = out.evaluations.iter().map(|e| e.0).collect();
        assert_eq!(evals, vec![6]);
        let its: Vec<f64> = read_table(&out.metrics).unwrap().rows.iter().map(|r| r[0].unwrap()).collect();
        assert_eq!(its, vec![2.0, 3.0, 4.0, 6.0]);
        assert_eq!(Checkpoint::load(&out.checkpoint).unwrap().iteration, 6);
    }

    #[test]
    fn value_distance_column_matches_a_recomputation() {
        let specs = crawler().transform_specs(None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = GaussianPolicy::new(22, 8, &[8], -1.0, &mut rng).unwrap();
        let value = ValueFunction::new(22, &[8], &mut rng).unwrap();
        let mut worker = RolloutWorker::new(crawler().build_env().unwrap(), vec![0, 3]);
        let raw = worker.collect(&policy, 64, &mut rng, None).unwrap();
        let batch = build_batch(raw, &policy, &value, &specs, &small(Method::None).ppo).unwrap();
        let rec = record(5, 640, None, &batch, None, None, None);
        let got = rec.value_dist.unwrap();
        for (j, spec) in specs.iter().enumerate() {
            let mut acc = 0.0;
            for t in 0..batch.len() {
                let s = batch.states.row(t).to_vec();
                let fs = spec.apply_state(&s).unwrap();
                acc += (value.value(&s).unwrap() - value.value(&fs).unwrap()).abs();
            }
            assert!((got[j] - acc / batch.len() as f64).abs() < 1e-12);
        }
    }
}
