//! Planar four-legged crawler with the eight-element dihedral symmetry group.
//!
//! Legs sit at 45, 135, 225 and 315 degrees in the body frame. Leg `l` owns a
//! hip (action slot `2l`) that pushes tangentially and yaws the body, and a
//! knee (slot `2l+1`) that pushes radially. Everything is expressed in the
//! body frame, so the observation is the complete dynamic state.
//!
//! Observation layout (22 slots):
//!
//! | slot  | meaning                                   |
//! |-------|-------------------------------------------|
//! | 0     | height: mean knee position                |
//! | 1, 2  | unit goal vector `(y, x)`                 |
//! | 3, 4  | body velocity `(x, y)`                    |
//! | 5     | yaw deviation (radians)                   |
//! | 6..22 | joint `i`: position `6+2i`, speed `7+2i`  |
//!
//! Per step, with `d_i` the push direction of joint `i`:
//!
//! ```text
//! p_i <- clamp(p_i + 0.1 a_i, -1, 1)      s_i <- a_i
//! v   <- 0.5 v + 0.5 DRIVE * sum_i tanh(2 a_i) d_i
//! w    = YAW_GAIN * sum_hips tanh(2 a_hip)
//! yaw <- yaw + w                          goal <- rot(-w) goal
//! r    = v.goal - 0.1 |v x goal| - 0.01 |a|^2 + ALIVE_BONUS
//! ```
//!
//! The episode fails when `|yaw|` exceeds 25 degrees.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, RngCore};

use super::{Dynamics, EnvSpec, Transition};
use crate::error::{shape_err, Error, Result};
use crate::symmetry::{TransformKind, TransformSpec};

pub const OBS_DIM: usize = 22;
pub const ACT_DIM: usize = 8;
pub const NUM_GOALS: usize = 8;
pub const STEP_LIMIT: usize = 200;
pub const NO_PROGRESS_WINDOW: usize = 30;
pub const DRIVE: f64 = 0.25;
pub const YAW_GAIN: f64 = 0.05;
pub const ALIVE_BONUS: f64 = 0.05;
pub const MAX_YAW: f64 = 25.0 * PI / 180.0;
const JOINT_RATE: f64 = 0.1;
const SIDEWAYS_COST: f64 = 0.1;
const ENERGY_COST: f64 = 0.01;

const SLOT_HEIGHT: usize = 0;
const SLOT_GOAL_Y: usize = 1;
const SLOT_GOAL_X: usize = 2;
const SLOT_VEL_X: usize = 3;
const SLOT_VEL_Y: usize = 4;
const SLOT_YAW: usize = 5;
const SLOT_JOINTS: usize = 6;

/// Sign pattern of each leg's outward direction.
const LEG_SIGNS: [(i8, i8); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

fn leg_dir(l: usize) -> (f64, f64) {
    let (x, y) = LEG_SIGNS[l];
    (x as f64 * FRAC_1_SQRT_2, y as f64 * FRAC_1_SQRT_2)
}

/// Push direction of joint `i`: tangential for hips, radial for knees.
fn joint_dir(i: usize) -> (f64, f64) {
    let (ux, uy) = leg_dir(i / 2);
    if i % 2 == 0 {
        (-uy, ux)
    } else {
        (ux, uy)
    }
}

/// Goal `g` lies at `45 g` degrees.
pub fn goal_direction(g: usize) -> (f64, f64) {
    let angle = g as f64 * PI / 4.0;
    (angle.cos(), angle.sin())
}

/// A signed 2x2 permutation matrix, row-major.
type Mat2 = [[i8; 2]; 2];

fn det(r: &Mat2) -> i8 {
    r[0][0] * r[1][1] - r[0][1] * r[1][0]
}

/// Source component and sign for each output component of `r v`.
fn vec_map(r: &Mat2) -> [(usize, f64); 2] {
    let mut out = [(0, 0.0); 2];
    for (row, o) in out.iter_mut().enumerate() {
        let col = if r[row][0] != 0 { 0 } else { 1 };
        *o = (col, r[row][col] as f64);
    }
    out
}

fn crawler_transform(name: &str, kind: TransformKind, r: Mat2) -> TransformSpec {
    let d = det(&r) as f64;
    // leg permutation: r u_l = u_{perm[l]}
    let mut perm = [0usize; 4];
    for (l, &(x, y)) in LEG_SIGNS.iter().enumerate() {
        let img = (r[0][0] * x + r[0][1] * y, r[1][0] * x + r[1][1] * y);
        perm[l] = LEG_SIGNS.iter().position(|s| *s == img).expect("legs closed under the group");
    }

    let mut act_idx = vec![0; ACT_DIM];
    let mut act_mult = vec![0.0; ACT_DIM];
    for l in 0..4 {
        let t = perm[l];
        act_idx[2 * t] = 2 * l;
        act_mult[2 * t] = d;
        act_idx[2 * t + 1] = 2 * l + 1;
        act_mult[2 * t + 1] = 1.0;
    }

    let mut obs_idx: Vec<usize> = (0..OBS_DIM).collect();
    let mut obs_mult = vec![1.0; OBS_DIM];
    let map = vec_map(&r);
    // component c (0 = x, 1 = y) of the goal and velocity blocks
    let goal_slot = [SLOT_GOAL_X, SLOT_GOAL_Y];
    let vel_slot = [SLOT_VEL_X, SLOT_VEL_Y];
    for c in 0..2 {
        let (src, sign) = map[c];
        obs_idx[goal_slot[c]] = goal_slot[src];
        obs_mult[goal_slot[c]] = sign;
        obs_idx[vel_slot[c]] = vel_slot[src];
        obs_mult[vel_slot[c]] = sign;
    }
    obs_mult[SLOT_YAW] = d;
    for j in 0..ACT_DIM {
        for k in 0..2 {
            obs_idx[SLOT_JOINTS + 2 * j + k] = SLOT_JOINTS + 2 * act_idx[j] + k;
            obs_mult[SLOT_JOINTS + 2 * j + k] = act_mult[j];
        }
    }
    TransformSpec::new(name, kind, obs_idx, obs_mult, act_idx, act_mult).expect("static crawler transform")
}

/// The four reflections and three non-trivial rotations.
pub fn crawler_transforms() -> Vec<TransformSpec> {
    use TransformKind::*;
    vec![
        crawler_transform("xz", Reflection, [[1, 0], [0, -1]]),
        crawler_transform("yz", Reflection, [[-1, 0], [0, 1]]),
        crawler_transform("diag", Reflection, [[0, 1], [1, 0]]),
        crawler_transform("antidiag", Reflection, [[0, -1], [-1, 0]]),
        crawler_transform("rot90", Rotation, [[0, -1], [1, 0]]),
        crawler_transform("rot180", Rotation, [[-1, 0], [0, -1]]),
        crawler_transform("rot270", Rotation, [[0, 1], [-1, 0]]),
    ]
}

#[derive(Debug, Clone)]
pub struct Crawler {
    spec: EnvSpec,
}

impl Crawler {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "crawler".into(),
                obs_dim: OBS_DIM,
                act_dim: ACT_DIM,
                transforms: crawler_transforms(),
                step_limit: STEP_LIMIT,
                no_progress_window: Some(NO_PROGRESS_WINDOW),
                num_goals: NUM_GOALS,
            },
        }
    }

    /// Observation for a given goal with all joints at rest.
    pub fn rest_state(goal: usize) -> Result<Vec<f64>> {
        if goal >= NUM_GOALS {
            return Err(Error::Domain(format!("goal {goal} outside 0..{NUM_GOALS}")));
        }
        let (gx, gy) = goal_direction(goal);
        let mut s = vec![0.0; OBS_DIM];
        s[SLOT_GOAL_X] = gx;
        s[SLOT_GOAL_Y] = gy;
        Ok(s)
    }
}

impl Default for Crawler {
    fn default() -> Self {
        Self::new()
    }
}

fn height(s: &[f64]) -> f64 {
    (0..4).map(|l| s[SLOT_JOINTS + 2 * (2 * l + 1)]).sum::<f64>() / 4.0
}

impl Dynamics for Crawler {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, goal: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut s = Self::rest_state(goal)?;
        for j in 0..ACT_DIM {
            s[SLOT_JOINTS + 2 * j] = rng.gen_range(-0.05..0.05);
        }
        s[SLOT_HEIGHT] = height(&s);
        Ok(s)
    }

    fn transition(&self, s: &[f64], a: &[f64]) -> Result<Transition> {
        if s.len() != OBS_DIM || a.len() != ACT_DIM {
            return shape_err(format!(
                "crawler needs a {OBS_DIM}-state and {ACT_DIM}-action, got {} and {}",
                s.len(),
                a.len()
            ));
        }
        let mut next = s.to_vec();
        let (mut fx, mut fy, mut yaw_push) = (0.0, 0.0, 0.0);
        for (i, &ai) in a.iter().enumerate() {
            let pos = SLOT_JOINTS + 2 * i;
            next[pos] = (s[pos] + JOINT_RATE * ai).clamp(-1.0, 1.0);
            next[pos + 1] = ai;
            let push = (2.0 * ai).tanh();
            let (dx, dy) = joint_dir(i);
            fx += push * dx;
            fy += push * dy;
            if i % 2 == 0 {
                yaw_push += push;
            }
        }
        let vx = 0.5 * s[SLOT_VEL_X] + 0.5 * DRIVE * fx;
        let vy = 0.5 * s[SLOT_VEL_Y] + 0.5 * DRIVE * fy;
        let omega = YAW_GAIN * yaw_push;
        let (sin_w, cos_w) = omega.sin_cos();
        let (gx, gy) = (s[SLOT_GOAL_X], s[SLOT_GOAL_Y]);
        let gx2 = cos_w * gx + sin_w * gy;
        let gy2 = -sin_w * gx + cos_w * gy;

        next[SLOT_VEL_X] = vx;
        next[SLOT_VEL_Y] = vy;
        next[SLOT_GOAL_X] = gx2;
        next[SLOT_GOAL_Y] = gy2;
        next[SLOT_YAW] = s[SLOT_YAW] + omega;
        next[SLOT_HEIGHT] = height(&next);

        let progress = vx * gx2 + vy * gy2;
        let sideways = (vx * gy2 - vy * gx2).abs();
        let energy: f64 = a.iter().map(|x| x * x).sum();
        Ok(Transition {
            reward: progress - SIDEWAYS_COST * sideways - ENERGY_COST * energy + ALIVE_BONUS,
            failed: next[SLOT_YAW].abs() > MAX_YAW,
            progress,
            state: next,
        })
    }
}
