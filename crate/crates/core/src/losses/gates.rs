//! Per-step masks that decide which `(transform, step)` pairs the adaptive
//! loss may touch.

use ndarray::Array2;

use crate::error::{shape_err, Error, Result};

/// MAD values below this are treated as a constant observation element.
pub const MAD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateOutputs {
    /// `psi[j][t]`: false when `s_t` is near a neutral state of transform `j`.
    pub psi: Vec<Vec<bool>>,
    /// `phi[j][t]`: false when the symmetric state already looks more valuable.
    pub phi: Vec<Vec<bool>>,
    /// Fraction of steps rejected by the dead zone, per transform.
    pub nsrr: Vec<f64>,
}

impl GateOutputs {
    pub fn open(&self, j: usize, t: usize) -> bool {
        self.psi[j][t] && self.phi[j][t]
    }
}

/// Mean normalized deviation between `s` and `f(s)`.
pub fn neutral_distance(s: &[f64], fs: &[f64], mad: &[f64]) -> f64 {
    let n = s.len().max(1) as f64;
    s.iter()
        .zip(fs)
        .zip(mad)
        .map(|((a, b), m)| if *m < MAD_FLOOR { 0.0 } else { (a - b).abs() / m })
        .sum::<f64>()
        / n
}

/// Dead-zone gate over a batch; returns `(psi, nsrr)`.
pub fn dead_zone_gate(states: &Array2<f64>, sym_states: &Array2<f64>, mad: &[f64], k_d: f64) -> Result<(Vec<bool>, f64)> {
    if states.dim() != sym_states.dim() || mad.len() != states.ncols() {
        return shape_err("dead-zone gate inputs disagree in shape");
    }
    if !(k_d >= 0.0) {
        return Err(Error::Domain(format!("dead zone {k_d} is negative")));
    }
    let psi: Vec<bool> = states
        .outer_iter()
        .zip(sym_states.outer_iter())
        .map(|(s, fs)| {
            neutral_distance(
                s.as_slice().expect("standard layout"),
                fs.as_slice().expect("standard layout"),
                mad,
            ) > k_d
        })
        .collect();
    let rejected = psi.iter().filter(|p| !**p).count();
    let nsrr = if psi.is_empty() { 0.0 } else { rejected as f64 / psi.len() as f64 };
    Ok((psi, nsrr))
}

/// `v_t` in closed form: `k_v V` for `V >= 0` and `V / k_v` otherwise.
pub fn value_gate_threshold(v: f64, k_v: f64) -> f64 {
    let alpha = (k_v * k_v + 1.0) / (2.0 * k_v);
    alpha * v + (k_v - alpha) * v.abs()
}

/// Branch form of [`value_gate_threshold`].
pub fn value_gate_threshold_branch(v: f64, k_v: f64) -> f64 {
    if v >= 0.0 {
        k_v * v
    } else {
        v / k_v
    }
}

pub fn value_gate(v: f64, v_sym: f64, k_v: f64) -> bool {
    value_gate_threshold(v, k_v) > v_sym
}

pub fn value_gates(values: &[f64], sym_values: &[f64], k_v: f64) -> Result<Vec<bool>> {
    if values.len() != sym_values.len() {
        return shape_err("value gate inputs disagree in length");
    }
    if !(k_v > 1.0) {
        return Err(Error::Domain(format!("value gate constant {k_v} must exceed 1")));
    }
    Ok(values.iter().zip(sym_values).map(|(v, vs)| value_gate(*v, *vs, k_v)).collect())
}
