//! Fitting datasets read off the old policy means over the last batch.
//!
//! Every declared transform that relates slots `q` and `u` contributes one
//! section, normalized so the fitted map is always the canonical low-to-high
//! pair estimator:
//!
//! | relation in `g_j`         | x                  | y            |
//! |---------------------------|--------------------|--------------|
//! | `a'[hi] <- +a[lo]`        | `a[lo]`            | `a'_j[hi]`   |
//! | `a'[hi] <- -a[lo]`        | `-a[lo]`           | `a'_j[hi]`   |
//! | `a'[lo] <- +a[hi]`        | `a'_j[lo]`         | `a[hi]`      |
//! | `a'[lo] <- -a[hi]`        | `-a'_j[lo]`        | `a[hi]`      |

use crate::error::{Error, Result};
use crate::numerics::Dataset1D;
use crate::ppo::RolloutBatch;
use crate::symmetry::{RelationGraph, TransformSpec};

/// Which section of a pair dataset a transform contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Direct,
    DirectReflected,
    Inverse,
    InverseReflected,
}

/// Sections contributed to pair `p`, as `(transform, section)`.
pub fn pair_sections(graph: &RelationGraph, specs: &[TransformSpec], p: usize) -> Vec<(usize, Section)> {
    let (lo, hi) = graph.pairs[p];
    let mut out = Vec::new();
    for (j, spec) in specs.iter().enumerate() {
        for (u, (&q, &d)) in spec.act_indices.iter().zip(&spec.act_multipliers).enumerate() {
            let section = match (q == lo && u == hi, q == hi && u == lo, d < 0.0) {
                (true, _, false) => Section::Direct,
                (true, _, true) => Section::DirectReflected,
                (_, true, false) => Section::Inverse,
                (_, true, true) => Section::InverseReflected,
                _ => continue,
            };
            out.push((j, section));
        }
    }
    out
}

fn keep(psi: Option<&[Vec<bool>]>, j: usize, t: usize) -> bool {
    psi.map_or(true, |p| p[j][t])
}

/// Dataset for pair `p`; steps with `psi[j][t] == false` are left out of transform `j`'s section.
pub fn build_pair_dataset(
    batch: &RolloutBatch,
    graph: &RelationGraph,
    specs: &[TransformSpec],
    p: usize,
    psi: Option<&[Vec<bool>]>,
) -> Result<Dataset1D> {
    let sections = pair_sections(graph, specs, p);
    let (lo, hi) = graph.pairs[p];
    if sections.is_empty() {
        return Err(Error::EmptyInput(format!("no transform relates action slots {lo} and {hi}")));
    }
    let mut d = Dataset1D::with_capacity(sections.len() * batch.len());
    for (j, section) in sections {
        let sym = &batch.sym_means[j];
        for t in 0..batch.len() {
            if !keep(psi, j, t) {
                continue;
            }
            let (x, y) = match section {
                Section::Direct => (batch.means[[t, lo]], sym[[t, hi]]),
                Section::DirectReflected => (-batch.means[[t, lo]], sym[[t, hi]]),
                Section::Inverse => (sym[[t, lo]], batch.means[[t, hi]]),
                Section::InverseReflected => (-sym[[t, lo]], batch.means[[t, hi]]),
            };
            d.push(x, y);
        }
    }
    Ok(d)
}

/// Dataset for single slot `q`: `x = a[q]`, `y = a'_j[q]` for every transform reflecting `q` onto itself.
pub fn build_single_dataset(
    batch: &RolloutBatch,
    specs: &[TransformSpec],
    q: usize,
    psi: Option<&[Vec<bool>]>,
) -> Result<Dataset1D> {
    let mut d = Dataset1D::with_capacity(batch.len());
    let mut any = false;
    for (j, spec) in specs.iter().enumerate() {
        if spec.act_indices[q] != q || spec.act_multipliers[q] >= 0.0 {
            continue;
        }
        any = true;
        for t in 0..batch.len() {
            if keep(psi, j, t) {
                d.push(batch.means[[t, q]], batch.sym_means[j][[t, q]]);
            }
        }
    }
    if !any {
        return Err(Error::EmptyInput(format!("no transform reflects action slot {q} onto itself")));
    }
    Ok(d)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::env::triangle_transforms;
    use crate::numerics::ols_fit_mb;
    use crate::symmetry::extract_relation_graph;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Batch whose symmetric means come from `g(j, a)` applied to random means.
    pub(crate) fn synthetic_batch(n: usize, act: usize, k: usize, g: impl Fn(usize, &[f64]) -> Vec<f64>, seed: u64) -> RolloutBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = Array2::from_shape_fn((n, act), |_| rng.gen_range(-1.0..1.0));
        let sym_means = (0..k)
            .map(|j| {
                let mut m = Array2::zeros((n, act));
                for t in 0..n {
                    let row = g(j, means.row(t).as_slice().unwrap());
                    m.row_mut(t).assign(&ndarray::ArrayView1::from(&row));
                }
                m
            })
            .collect();
        RolloutBatch {
            states: Array2::zeros((n, 1)),
            actions: means.clone(),
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            terminated: vec![false; n],
            episode_end: vec![false; n],
            values: vec![0.0; n],
            next_values: vec![0.0; n],
            means,
            sym_states: vec![Array2::zeros((n, 1)); k],
            sym_means,
            sym_values: vec![vec![0.0; n]; k],
            advantages: vec![0.0; n],
            value_targets: vec![0.0; n],
            episode_returns: vec![],
        }
    }

    #[test]
    fn triangle_pair_sections_follow_the_table() {
        let specs = triangle_transforms([1.0; 3]);
        let graph = extract_relation_graph(&specs).unwrap();
        let p = graph.pair_index(0, 1).unwrap();
        let mut s = pair_sections(&graph, &specs, p);
        s.sort_by_key(|(j, sec)| (*sec as u8, *j));
        // transforms are a, b, c, d, e in order
        assert_eq!(
            s,
            vec![
                (3, Section::Direct),
                (2, Section::DirectReflected),
                (4, Section::Inverse),
                (2, Section::InverseReflected),
            ]
        );
    }

    #[test]
    fn each_section_recovers_the_pair_map() {
        // true relation a'[1] = 2 a[0] in every direction the triangle declares
        let specs = triangle_transforms([1.0; 3]);
        let graph = extract_relation_graph(&specs).unwrap();
        let p = graph.pair_index(0, 1).unwrap();
        let m = 2.0;
        let truth = |j: usize, a: &[f64]| -> Vec<f64> {
            let spec = &specs[j];
            (0..3)
                .map(|u| {
                    let q = spec.act_indices[u];
                    let d = spec.act_multipliers[u];
                    let x = d.signum() * a[q];
                    match (q, u) {
                        (0, 1) => m * x,
                        (1, 0) => x / m,
                        _ => d * a[q],
                    }
                })
                .collect()
        };
        let batch = synthetic_batch(50, 3, 5, truth, 1);
        for (j, section) in pair_sections(&graph, &specs, p) {
            let mut only = vec![vec![false; 50]; 5];
            only[j] = vec![true; 50];
            // a transform can hold two sections for one pair (c holds II and IV); fit the union
            let d = build_pair_dataset(&batch, &graph, &specs, p, Some(&only)).unwrap();
            let (fm, fb) = ols_fit_mb(&d).unwrap();
            assert!((fm - m).abs() < 1e-9 && fb.abs() < 1e-9, "{section:?} of transform {j}: {fm} {fb}");
        }
    }

    #[test]
    fn symmetric_policy_fits_identity() {
        let specs = triangle_transforms([1.0; 3]);
        let graph = extract_relation_graph(&specs).unwrap();
        let batch = synthetic_batch(40, 3, 5, |j, a| specs[j].apply_action(a).unwrap(), 2);
        for p in 0..graph.pairs.len() {
            let (m, b) = ols_fit_mb(&build_pair_dataset(&batch, &graph, &specs, p, None).unwrap()).unwrap();
            assert!((m - 1.0).abs() < 1e-9 && b.abs() < 1e-9);
        }
    }

    #[test]
    fn single_dataset_bias() {
        let specs = triangle_transforms([1.0; 3]);
        let batch = synthetic_batch(30, 3, 5, |_, a| a.iter().map(|x| -x - 6.0).collect(), 3);
        let d = build_single_dataset(&batch, &specs, 0, None).unwrap();
        // slot 0 is reflected onto itself only by transform a
        assert_eq!(d.len(), 30);
        assert!((crate::numerics::ols_fit_b_single(&d).unwrap() + 6.0).abs() < 1e-12);
    }

    #[test]
    fn dead_zone_removes_rows() {
        let specs = triangle_transforms([1.0; 3]);
        let graph = extract_relation_graph(&specs).unwrap();
        let batch = synthetic_batch(10, 3, 5, |j, a| specs[j].apply_action(a).unwrap(), 4);
        let mut psi = vec![vec![true; 10]; 5];
        psi[3][0] = false;
        psi[3][1] = false;
        let p = graph.pair_index(0, 1).unwrap();
        let full = build_pair_dataset(&batch, &graph, &specs, p, None).unwrap().len();
        let cut = build_pair_dataset(&batch, &graph, &specs, p, Some(&psi)).unwrap().len();
        assert_eq!(full - cut, 2);
    }
}
