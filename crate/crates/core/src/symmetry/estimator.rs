use super::graph::{RelationGraph, SlotRecipe, Step};
use super::transform::TransformSpec;
use crate::error::{shape_err, Error, Result};

/// Smallest pair slope that may be inverted.
pub const MIN_SLOPE: f64 = 1e-6;

/// Linear estimator parameters for every pair and single of a graph.
///
/// Pairs map the low slot to the high slot as `y = m x + b`; singles are
/// `y = -x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorParams {
    pub pair_m: Vec<f64>,
    pub pair_b: Vec<f64>,
    pub single_b: Vec<f64>,
}

impl EstimatorParams {
    /// Slopes implied by the declared multipliers, zero intercepts.
    pub fn from_declared(graph: &RelationGraph, specs: &[TransformSpec]) -> Result<Self> {
        let mut pair_m = vec![f64::NAN; graph.pairs.len()];
        for spec in specs {
            for (u, (&q, &d)) in spec.act_indices.iter().zip(&spec.act_multipliers).enumerate() {
                if q == u {
                    continue;
                }
                let p = graph
                    .pair_index(q, u)
                    .ok_or_else(|| Error::Shape(format!("pair ({q},{u}) missing from graph")))?;
                let m = if q < u { d.abs() } else { 1.0 / d.abs() };
                if pair_m[p].is_nan() {
                    pair_m[p] = m;
                } else if (pair_m[p] - m).abs() > 1e-9 * m.abs().max(1.0) {
                    return Err(Error::InvalidTransform {
                        transform: spec.name.clone(),
                        reason: format!(
                            "action slots {q}->{u} imply slope {m}, other transforms imply {}",
                            pair_m[p]
                        ),
                    });
                }
            }
        }
        Ok(Self {
            pair_m,
            pair_b: vec![0.0; graph.pairs.len()],
            single_b: vec![0.0; graph.singles.len()],
        })
    }

    pub fn matches(&self, graph: &RelationGraph) -> bool {
        self.pair_m.len() == graph.pairs.len()
            && self.pair_b.len() == graph.pairs.len()
            && self.single_b.len() == graph.singles.len()
    }

    /// `[pair_m..., pair_b..., single_b...]`
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.pair_m.clone();
        v.extend_from_slice(&self.pair_b);
        v.extend_from_slice(&self.single_b);
        v
    }

    pub fn from_flat(graph: &RelationGraph, v: &[f64]) -> Result<Self> {
        let (np, ns) = (graph.pairs.len(), graph.singles.len());
        if v.len() != 2 * np + ns {
            return shape_err(format!("expected {} estimator values, got {}", 2 * np + ns, v.len()));
        }
        Ok(Self {
            pair_m: v[..np].to_vec(),
            pair_b: v[np..2 * np].to_vec(),
            single_b: v[2 * np..].to_vec(),
        })
    }

    fn apply_step(&self, step: Step, x: f64) -> Result<f64> {
        Ok(match step {
            Step::Forward(p) => self.pair_m[p] * x + self.pair_b[p],
            Step::Inverse(p) => {
                let m = self.pair_m[p];
                if !(m.abs() >= MIN_SLOPE) {
                    return Err(Error::NearSingular(format!("pair {p} slope {m} cannot be inverted")));
                }
                (x - self.pair_b[p]) / m
            }
            Step::Single(s) => -x + self.single_b[s],
            Step::Negate => -x,
            Step::Scale(d) => d * x,
        })
    }

    pub fn apply_steps(&self, steps: &[Step], x: f64) -> Result<f64> {
        steps.iter().try_fold(x, |acc, s| self.apply_step(*s, acc))
    }

    pub fn apply_recipe(&self, recipe: &SlotRecipe, a: &[f64]) -> Result<f64> {
        self.apply_steps(&recipe.steps, a[recipe.source])
    }
}

/// Applies the global action-transform estimator of transform `j`.
pub fn compose_global_estimator(graph: &RelationGraph, nu: &EstimatorParams, j: usize, a: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; graph.act_dim];
    compose_into(graph, nu, j, a, &mut out)?;
    Ok(out)
}

pub fn compose_into(graph: &RelationGraph, nu: &EstimatorParams, j: usize, a: &[f64], out: &mut [f64]) -> Result<()> {
    let recipes = graph
        .recipes
        .get(j)
        .ok_or_else(|| Error::Shape(format!("transform index {j} out of range")))?;
    if a.len() != graph.act_dim || out.len() != graph.act_dim {
        return shape_err(format!("estimator acts on {}-dim actions, got {}", graph.act_dim, a.len()));
    }
    for (o, r) in out.iter_mut().zip(recipes) {
        *o = nu.apply_recipe(r, a)?;
    }
    Ok(())
}

/// True iff `y = m x + b` is its own inverse.
pub fn involution_check(m: f64, b: f64) -> bool {
    const TOL: f64 = 1e-12;
    (m + 1.0).abs() <= TOL || ((m - 1.0).abs() <= TOL && b.abs() <= TOL)
}
