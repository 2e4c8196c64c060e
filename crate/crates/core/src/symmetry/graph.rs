use std::collections::BTreeSet;

use super::transform::TransformSpec;
use crate::error::{shape_err, Error, Result};

/// One stage of a per-slot composition. Pair and single indices refer to
/// [`RelationGraph::pairs`] and [`RelationGraph::singles`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// `y = m x + b` of the pair estimator (low slot to high slot).
    Forward(usize),
    /// `x = (y - b) / m` of the pair estimator (high slot to low slot).
    Inverse(usize),
    /// `y = -x + b` of the single estimator.
    Single(usize),
    Negate,
    /// Fixed declared self-scaling, not estimated.
    Scale(f64),
}

/// Expresses one output slot of a transform as a chain applied to `a[source]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecipe {
    pub source: usize,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    pub act_dim: usize,
    /// Unordered slot pairs stored as `(low, high)`, sorted.
    pub pairs: Vec<(usize, usize)>,
    /// Slots mapped onto themselves with a negative multiplier, sorted.
    pub singles: Vec<usize>,
    /// Simple cycles over pairs, smallest slot first.
    pub cycles: Vec<Vec<usize>>,
    /// `recipes[j][i]` reconstructs output slot `i` of transform `j`.
    pub recipes: Vec<Vec<SlotRecipe>>,
}

impl RelationGraph {
    pub fn pair_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.pairs.binary_search(&key).ok()
    }

    pub fn single_index(&self, q: usize) -> Option<usize> {
        self.singles.binary_search(&q).ok()
    }

    pub fn num_estimators(&self) -> usize {
        self.pairs.len() + self.singles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.singles.is_empty()
    }

    /// Pair steps that traverse `cycle` in order, closing back at its start.
    pub fn cycle_steps(&self, cycle: &[usize]) -> Vec<Step> {
        (0..cycle.len())
            .map(|k| {
                let (x, y) = (cycle[k], cycle[(k + 1) % cycle.len()]);
                let p = self.pair_index(x, y).expect("cycle edges are pairs");
                if x < y {
                    Step::Forward(p)
                } else {
                    Step::Inverse(p)
                }
            })
            .collect()
    }

    /// Cycles containing the pair with index `p`.
    pub fn cycles_with_pair(&self, p: usize) -> impl Iterator<Item = &Vec<usize>> + '_ {
        let (lo, hi) = self.pairs[p];
        self.cycles.iter().filter(move |c| {
            (0..c.len()).any(|k| {
                let (x, y) = (c[k], c[(k + 1) % c.len()]);
                (x.min(y), x.max(y)) == (lo, hi)
            })
        })
    }
}

pub fn extract_relation_graph(specs: &[TransformSpec]) -> Result<RelationGraph> {
    let first = specs
        .first()
        .ok_or_else(|| Error::EmptyInput("no transforms to build a relation graph from".into()))?;
    let act_dim = first.act_dim();
    if let Some(bad) = specs.iter().find(|s| s.act_dim() != act_dim) {
        return shape_err(format!(
            "transform `{}` has {} action slots, expected {act_dim}",
            bad.name,
            bad.act_dim()
        ));
    }

    let mut pairs = BTreeSet::new();
    let mut singles = BTreeSet::new();
    for spec in specs {
        for (u, (&q, &d)) in spec.act_indices.iter().zip(&spec.act_multipliers).enumerate() {
            if q != u {
                pairs.insert((q.min(u), q.max(u)));
            } else if d < 0.0 {
                if (d + 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidTransform {
                        transform: spec.name.clone(),
                        reason: format!("action slot {u} maps to itself with multiplier {d}; only -1 is an involution"),
                    });
                }
                singles.insert(u);
            }
        }
    }
    let pairs: Vec<_> = pairs.into_iter().collect();
    let singles: Vec<_> = singles.into_iter().collect();
    let cycles = find_cycles(act_dim, &pairs);

    let mut graph = RelationGraph {
        act_dim,
        pairs,
        singles,
        cycles,
        recipes: Vec::with_capacity(specs.len()),
    };
    for spec in specs {
        let recipes = (0..act_dim)
            .map(|u| recipe_for(&graph, spec.act_indices[u], u, spec.act_multipliers[u]))
            .collect();
        graph.recipes.push(recipes);
    }
    Ok(graph)
}

fn recipe_for(graph: &RelationGraph, q: usize, u: usize, d: f64) -> SlotRecipe {
    let mut steps = Vec::new();
    if q == u {
        if d < 0.0 {
            steps.push(Step::Single(graph.single_index(u).expect("negative self-map is a single")));
        } else if d != 1.0 {
            steps.push(Step::Scale(d));
        }
    } else {
        let p = graph.pair_index(q, u).expect("cross-slot map is a pair");
        steps.push(if q < u { Step::Forward(p) } else { Step::Inverse(p) });
        if d < 0.0 {
            steps.push(match graph.single_index(u) {
                Some(s) => Step::Single(s),
                None => Step::Negate,
            });
        }
    }
    SlotRecipe { source: q, steps }
}

fn find_cycles(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in pairs {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }

    fn dfs(
        adj: &[Vec<usize>],
        start: usize,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        found: &mut BTreeSet<Vec<usize>>,
    ) {
        let here = *path.last().unwrap();
        for &next in &adj[here] {
            if next == start && path.len() >= 3 {
                // keep only one of the two traversal directions
                if path[1] < path[path.len() - 1] {
                    found.insert(path.clone());
                }
            } else if next > start && !on_path[next] {
                on_path[next] = true;
                path.push(next);
                dfs(adj, start, path, on_path, found);
                path.pop();
                on_path[next] = false;
            }
        }
    }

    let mut found = BTreeSet::new();
    let mut on_path = vec![false; n];
    for start in 0..n {
        on_path[start] = true;
        let mut path = vec![start];
        dfs(&adj, start, &mut path, &mut on_path, &mut found);
        on_path[start] = false;
    }
    let mut cycles: Vec<_> = found.into_iter().collect();
    cycles.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    cycles
}
