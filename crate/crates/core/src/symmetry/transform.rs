use std::path::Path;

use serde::Deserialize;

use crate::error::{shape_err, Error, Result};

pub const TRANSFORMS_FORMAT: &str = "asl-transforms";
pub const TRANSFORMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Reflection,
    Rotation,
}

/// One symmetry operation: `out[i] = multipliers[i] * x[indices[i]]` on
/// observations and (declared) actions.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TransformSpec {
    pub name: String,
    pub kind: TransformKind,
    pub obs_indices: Vec<usize>,
    pub obs_multipliers: Vec<f64>,
    pub act_indices: Vec<usize>,
    pub act_multipliers: Vec<f64>,
}

fn invalid(name: &str, reason: String) -> Error {
    Error::InvalidTransform {
        transform: name.to_string(),
        reason,
    }
}

fn check_map(name: &str, what: &str, idx: &[usize], mult: &[f64]) -> Result<()> {
    if idx.len() != mult.len() {
        return Err(invalid(
            name,
            format!("{what} has {} indices but {} multipliers", idx.len(), mult.len()),
        ));
    }
    let mut seen = vec![false; idx.len()];
    for (slot, &i) in idx.iter().enumerate() {
        if i >= idx.len() {
            return Err(invalid(name, format!("{what} slot {slot} reads index {i}, out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(invalid(name, format!("{what} slot {slot} repeats index {i}; not a permutation")));
        }
    }
    for (slot, m) in mult.iter().enumerate() {
        if !m.is_finite() || *m == 0.0 {
            return Err(invalid(name, format!("{what} slot {slot} has multiplier {m}")));
        }
    }
    Ok(())
}

fn check_involution(name: &str, what: &str, idx: &[usize], mult: &[f64]) -> Result<()> {
    for (slot, (&i, &m)) in idx.iter().zip(mult).enumerate() {
        if idx[i] != slot || (m * mult[i] - 1.0).abs() > 1e-12 {
            return Err(invalid(
                name,
                format!("reflection is not an involution on {what} slot {slot}"),
            ));
        }
    }
    Ok(())
}

fn apply(idx: &[usize], mult: &[f64], x: &[f64], out: &mut [f64]) {
    for ((o, &i), m) in out.iter_mut().zip(idx).zip(mult) {
        *o = m * x[i];
    }
}

impl TransformSpec {
    pub fn new(
        name: impl Into<String>,
        kind: TransformKind,
        obs_indices: Vec<usize>,
        obs_multipliers: Vec<f64>,
        act_indices: Vec<usize>,
        act_multipliers: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            kind,
            obs_indices,
            obs_multipliers,
            act_indices,
            act_multipliers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_map(&self.name, "observation", &self.obs_indices, &self.obs_multipliers)?;
        check_map(&self.name, "action", &self.act_indices, &self.act_multipliers)?;
        if self.kind == TransformKind::Reflection {
            check_involution(&self.name, "observation", &self.obs_indices, &self.obs_multipliers)?;
            check_involution(&self.name, "action", &self.act_indices, &self.act_multipliers)?;
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_indices.len()
    }

    pub fn act_dim(&self) -> usize {
        self.act_indices.len()
    }

    pub fn apply_state(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.obs_dim()];
        self.apply_state_into(s, &mut out)?;
        Ok(out)
    }

    pub fn apply_state_into(&self, s: &[f64], out: &mut [f64]) -> Result<()> {
        if s.len() != self.obs_dim() || out.len() != self.obs_dim() {
            return shape_err(format!(
                "transform `{}` acts on {}-dim states, got {}",
                self.name,
                self.obs_dim(),
                s.len()
            ));
        }
        apply(&self.obs_indices, &self.obs_multipliers, s, out);
        Ok(())
    }

    pub fn apply_action(&self, a: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.act_dim()];
        self.apply_action_into(a, &mut out)?;
        Ok(out)
    }

    pub fn apply_action_into(&self, a: &[f64], out: &mut [f64]) -> Result<()> {
        if a.len() != self.act_dim() || out.len() != self.act_dim() {
            return shape_err(format!(
                "transform `{}` acts on {}-dim actions, got {}",
                self.name,
                self.act_dim(),
                a.len()
            ));
        }
        apply(&self.act_indices, &self.act_multipliers, a, out);
        Ok(())
    }
}

pub fn apply_state_transform(spec: &TransformSpec, s: &[f64]) -> Result<Vec<f64>> {
    spec.apply_state(s)
}

pub fn apply_declared_action_transform(spec: &TransformSpec, a: &[f64]) -> Result<Vec<f64>> {
    spec.apply_action(a)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformFile {
    format: String,
    version: u32,
    #[serde(rename = "transform")]
    transforms: Vec<TransformSpec>,
}

/// Parses a transform declaration document and validates every entry.
pub fn parse_transforms(text: &str) -> Result<Vec<TransformSpec>> {
    let file: TransformFile = toml::from_str(text)?;
    if file.format != TRANSFORMS_FORMAT {
        return Err(Error::Config(format!(
            "expected format `{TRANSFORMS_FORMAT}`, found `{}`",
            file.format
        )));
    }
    if file.version != TRANSFORMS_VERSION {
        return Err(Error::Config(format!("unsupported transforms version {}", file.version)));
    }
    if file.transforms.is_empty() {
        return Err(Error::Config("no transforms declared".into()));
    }
    for t in &file.transforms {
        t.validate()?;
    }
    Ok(file.transforms)
}

pub fn load_transforms(path: &Path) -> Result<Vec<TransformSpec>> {
    parse_transforms(&std::fs::read_to_string(path)?)
}

/// Renders specs in the declaration format accepted by [`parse_transforms`].
pub fn render_transforms(specs: &[TransformSpec]) -> String {
    fn list<T: std::fmt::Debug>(v: &[T]) -> String {
        format!("{v:?}")
    }
    let mut out = format!("format = \"{TRANSFORMS_FORMAT}\"\nversion = {TRANSFORMS_VERSION}\n");
    for t in specs {
        let kind = match t.kind {
            TransformKind::Reflection => "reflection",
            TransformKind::Rotation => "rotation",
        };
        out.push_str(&format!(
            "\n[[transform]]\nname = \"{}\"\nkind = \"{kind}\"\nobs_indices = {}\nobs_multipliers = {}\nact_indices = {}\nact_multipliers = {}\n",
            t.name,
            list(&t.obs_indices),
            list(&t.obs_multipliers),
            list(&t.act_indices),
            list(&t.act_multipliers),
        ));
    }
    out
}
