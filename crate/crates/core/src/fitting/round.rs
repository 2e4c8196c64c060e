//! One fitting round: local least-squares fits, cycle-consistency update
//! weights, the moving-average update of the global estimators and the
//! function weights derived from recent fit targets.

use std::collections::VecDeque;

use super::dataset::{build_pair_dataset, build_single_dataset};
use super::{FitConfig, FitForm};
use crate::error::{Error, Result};
use crate::numerics::{mean, ols_fit_b_single, ols_fit_m_fixed_b, ols_fit_mb, std_dev, Dataset1D};
use crate::ppo::RolloutBatch;
use crate::symmetry::estimator::MIN_SLOPE;
use crate::symmetry::{EstimatorParams, RelationGraph, Step, TransformSpec};

/// Points where a composed cycle is compared against the identity.
pub const CYCLE_PROBES: [f64; 3] = [-1.0, 0.0, 1.0];

/// Fresh least-squares fit of one estimator: `[m, b]` for pairs, `[b]` for singles.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub params: Vec<f64>,
    pub points: usize,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub nu: EstimatorParams,
    /// Accepted local fits per estimator (pairs, then singles), newest last.
    pub history: Vec<VecDeque<Vec<f64>>>,
    pub rounds: usize,
}

impl FitState {
    pub fn new(nu: EstimatorParams) -> Self {
        let n = nu.pair_m.len() + nu.single_b.len();
        Self {
            nu,
            history: vec![VecDeque::new(); n],
            rounds: 0,
        }
    }

    /// Function weight of every estimator from its history.
    pub fn estimator_weights(&self, cfg: &FitConfig) -> Vec<f64> {
        self.history.iter().map(|h| function_weight(h, cfg)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Per estimator (pairs, then singles); `None` when the round skipped it.
    pub local: Vec<Option<LocalFit>>,
    /// Update weight applied to each estimator this round (0 when skipped).
    pub w_u: Vec<f64>,
    /// Worst cycle error seen by each pair, if it lies on a cycle.
    pub cycle_errors: Vec<Option<f64>>,
    /// Function weight per estimator after the round.
    pub estimator_w_g: Vec<f64>,
    /// Function weight per `(transform, action slot)`.
    pub w_g: Vec<Vec<f64>>,
}

/// Largest deviation from the identity of `cycle` composed under `params`.
pub fn cycle_error(graph: &RelationGraph, params: &EstimatorParams, cycle: &[usize]) -> Result<f64> {
    let steps = graph.cycle_steps(cycle);
    let mut worst: f64 = 0.0;
    for k in CYCLE_PROBES {
        worst = worst.max((params.apply_steps(&steps, k)? - k).abs());
    }
    Ok(worst)
}

/// Update weight of pair `p`: the cycle penalty of its worst containing cycle.
pub fn update_weight(graph: &RelationGraph, params: &EstimatorParams, p: usize, cfg: &FitConfig) -> (f64, Option<f64>) {
    let mut worst: Option<f64> = None;
    for cycle in graph.cycles_with_pair(p) {
        let e = match cycle_error(graph, params, cycle) {
            Ok(e) if e.is_finite() => e,
            _ => f64::INFINITY,
        };
        worst = Some(worst.map_or(e, |w| w.max(e)));
    }
    match worst {
        None => (cfg.h_u(0.0), None),
        Some(e) if e.is_infinite() => (0.0, Some(e)),
        Some(e) => (cfg.h_u(e), Some(e)),
    }
}

/// `min_k H_G(sigma_k / (|mu_k| + 0.1))` over the parameters of the recorded fits.
pub fn function_weight(history: &VecDeque<Vec<f64>>, cfg: &FitConfig) -> f64 {
    let Some(first) = history.front() else {
        return 1.0;
    };
    (0..first.len())
        .map(|k| {
            let v: Vec<f64> = history.iter().map(|h| h[k]).collect();
            cfg.h_g(std_dev(&v) / (mean(&v).abs() + 0.1))
        })
        .fold(1.0, f64::min)
}

/// Per-slot weights: the smallest weight among the estimators a slot's recipe uses.
pub fn slot_weights(graph: &RelationGraph, estimator_w: &[f64]) -> Vec<Vec<f64>> {
    let np = graph.pairs.len();
    graph
        .recipes
        .iter()
        .map(|slots| {
            slots
                .iter()
                .map(|r| {
                    r.steps
                        .iter()
                        .filter_map(|s| match s {
                            Step::Forward(p) | Step::Inverse(p) => Some(estimator_w[*p]),
                            Step::Single(q) => Some(estimator_w[np + *q]),
                            Step::Negate | Step::Scale(_) => None,
                        })
                        .fold(1.0, f64::min)
                })
                .collect()
        })
        .collect()
}

/// Pair slopes that exactly undo actuator scaling `modifiers`: `m = x_lo / x_hi`.
pub fn ground_truth_multipliers(modifiers: &[f64], graph: &RelationGraph) -> Result<Vec<f64>> {
    if modifiers.len() != graph.act_dim {
        return Err(Error::Shape(format!(
            "{} modifiers for {} action slots",
            modifiers.len(),
            graph.act_dim
        )));
    }
    if let Some(m) = modifiers.iter().find(|m| !(m.abs() > 0.0) || !m.is_finite()) {
        return Err(Error::Domain(format!("action modifier {m} must be finite and nonzero")));
    }
    Ok(graph.pairs.iter().map(|&(lo, hi)| modifiers[lo] / modifiers[hi]).collect())
}

fn rms(d: &Dataset1D, f: impl Fn(f64) -> f64) -> f64 {
    let ss: f64 = d.xs().iter().zip(d.ys()).map(|(x, y)| (y - f(*x)).powi(2)).sum();
    (ss / d.len().max(1) as f64).sqrt()
}

fn fit_pair(d: &Dataset1D, form: FitForm) -> Option<LocalFit> {
    let (m, b) = match form {
        FitForm::MxB => ols_fit_mb(d).ok()?,
        FitForm::Mx => (ols_fit_m_fixed_b(d).ok()?, 0.0),
    };
    if !(m.abs() >= MIN_SLOPE) || !m.is_finite() || !b.is_finite() {
        return None;
    }
    Some(LocalFit {
        params: vec![m, b],
        points: d.len(),
        rms: rms(d, |x| m * x + b),
    })
}

/// Runs one fitting round over `batch` and folds the result into `state`.
///
/// `psi[j][t] == false` removes step `t` from transform `j`'s data.
pub fn fit_round(
    batch: &RolloutBatch,
    graph: &RelationGraph,
    specs: &[TransformSpec],
    psi: Option<&[Vec<bool>]>,
    state: &mut FitState,
    cfg: &FitConfig,
) -> Result<FitReport> {
    if !state.nu.matches(graph) {
        return Err(Error::Shape("estimators do not match the relation graph".into()));
    }
    let np = graph.pairs.len();
    let ns = graph.singles.len();
    let mut local: Vec<Option<LocalFit>> = Vec::with_capacity(np + ns);
    for p in 0..np {
        let d = build_pair_dataset(batch, graph, specs, p, psi)?;
        local.push(if d.len() < cfg.min_points { None } else { fit_pair(&d, cfg.form) });
    }
    for &q in &graph.singles {
        let d = build_single_dataset(batch, specs, q, psi)?;
        let fit = match cfg.form {
            FitForm::Mx => None,
            FitForm::MxB if d.len() < cfg.min_points => None,
            FitForm::MxB => ols_fit_b_single(&d).ok().filter(|b| b.is_finite()).map(|b| LocalFit {
                params: vec![b],
                points: d.len(),
                rms: rms(&d, |x| -x + b),
            }),
        };
        local.push(fit);
    }

    // local fits, with the global value standing in where a fit was skipped
    let mut zeta = state.nu.clone();
    for (p, fit) in local[..np].iter().enumerate() {
        if let Some(f) = fit {
            zeta.pair_m[p] = f.params[0];
            zeta.pair_b[p] = f.params[1];
        }
    }
    for (s, fit) in local[np..].iter().enumerate() {
        if let Some(f) = fit {
            zeta.single_b[s] = f.params[0];
        }
    }

    let mut w_u = vec![0.0; np + ns];
    let mut cycle_errors = vec![None; np];
    for p in 0..np {
        let (w, e) = update_weight(graph, &zeta, p, cfg);
        cycle_errors[p] = e;
        if local[p].is_some() {
            w_u[p] = w;
        }
    }
    for s in 0..ns {
        if local[np + s].is_some() {
            w_u[np + s] = cfg.h_u(0.0);
        }
    }

    let nu = &mut state.nu;
    for p in 0..np {
        nu.pair_m[p] += w_u[p] * (zeta.pair_m[p] - nu.pair_m[p]);
        nu.pair_b[p] += w_u[p] * (zeta.pair_b[p] - nu.pair_b[p]);
    }
    for s in 0..ns {
        nu.single_b[s] += w_u[np + s] * (zeta.single_b[s] - nu.single_b[s]);
    }
    for (h, fit) in state.history.iter_mut().zip(&local) {
        if let Some(f) = fit {
            let params = match (cfg.form, f.params.len()) {
                (FitForm::Mx, 2) => vec![f.params[0]],
                _ => f.params.clone(),
            };
            h.push_back(params);
            while h.len() > cfg.history {
                h.pop_front();
            }
        }
    }
    state.rounds += 1;

    let estimator_w_g = state.estimator_weights(cfg);
    let w_g = slot_weights(graph, &estimator_w_g);
    Ok(FitReport {
        local,
        w_u,
        cycle_errors,
        estimator_w_g,
        w_g,
    })
}
