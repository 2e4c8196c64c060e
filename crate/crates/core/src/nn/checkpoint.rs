//! Line-oriented text checkpoint.
//!
//! ```text
//! asl-checkpoint 1
//! iteration <u64>
//! timestep <u64>
//! net policy_mean <width_0> <width_1> ... <width_L>
//! <parameters, space separated, layer by layer: W row-major then b>
//! vector log_sigma <len>
//! <values>
//! net value <widths...>
//! <parameters>
//! adam policy <t> <lr> <beta1> <beta2> <eps> <clip|none> <len>   (optional)
//! <first moments>
//! <second moments>
//! adam value ...                                                  (optional)
//! vector nu <len>                                                 (optional)
//! <values>
//! end
//! ```
//!
//! Floats are written with Rust's shortest round-trip `{:e}` formatting, so a
//! save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::adam::{Adam, AdamConfig};
use super::mlp::MlpParams;
use super::policy::{GaussianPolicy, ValueFunction};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "asl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub timestep: u64,
    pub policy: GaussianPolicy,
    pub value: ValueFunction,
    pub policy_opt: Option<Adam>,
    pub value_opt: Option<Adam>,
    pub nu: Option<Vec<f64>>,
}

fn write_values(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

fn write_net(out: &mut String, name: &str, net: &MlpParams) {
    let widths: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "net {name} {}", widths.join(" "));
    write_values(out, net.as_slice());
}

fn write_adam(out: &mut String, name: &str, opt: &Adam) {
    let c = opt.config;
    let clip = c.max_grad_norm.map_or("none".to_string(), |v| format!("{v:e}"));
    let (m, v) = opt.moments();
    let _ = writeln!(
        out,
        "adam {name} {} {:e} {:e} {:e} {:e} {clip} {}",
        opt.steps_taken(),
        c.lr,
        c.beta1,
        c.beta2,
        c.eps,
        m.len()
    );
    write_values(out, m);
    write_values(out, v);
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_FORMAT} {CHECKPOINT_VERSION}");
        let _ = writeln!(out, "iteration {}", self.iteration);
        let _ = writeln!(out, "timestep {}", self.timestep);
        write_net(&mut out, "policy_mean", &self.policy.mean_net);
        let _ = writeln!(out, "vector log_sigma {}", self.policy.log_sigma.len());
        write_values(&mut out, &self.policy.log_sigma);
        write_net(&mut out, "value", &self.value.value_net);
        if let Some(opt) = &self.policy_opt {
            write_adam(&mut out, "policy", opt);
        }
        if let Some(opt) = &self.value_opt {
            write_adam(&mut out, "value", opt);
        }
        if let Some(nu) = &self.nu {
            let _ = writeln!(out, "vector nu {}", nu.len());
            write_values(&mut out, nu);
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(n, l)| (n + 1, l))
                .ok_or_else(|| Error::Checkpoint(format!("unexpected end of file, expected {what}")))
        };

        let (_, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint("not an asl checkpoint".into()));
        }
        let version: u32 = parse_tok(parts.next().as_ref(), 1)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }

        let mut iteration = None;
        let mut timestep = None;
        let mut mean_net = None;
        let mut log_sigma = None;
        let mut value_net = None;
        let mut policy_opt = None;
        let mut value_opt = None;
        let mut nu = None;

        loop {
            let (n, line) = next("a section or `end`")?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["end"] => break,
                ["iteration", v] => iteration = Some(parse_tok(Some(v), n)?),
                ["timestep", v] => timestep = Some(parse_tok(Some(v), n)?),
                ["net", name, widths @ ..] => {
                    let sizes = widths
                        .iter()
                        .map(|w| parse_tok::<usize>(Some(w), n))
                        .collect::<Result<Vec<_>>>()?;
                    let (vn, vals) = next("network parameters")?;
                    let net = MlpParams::from_parts(sizes, parse_values(vals, vn)?)
                        .map_err(|e| Error::Checkpoint(format!("line {vn}: {e}")))?;
                    match *name {
                        "policy_mean" => mean_net = Some(net),
                        "value" => value_net = Some(net),
                        other => return Err(Error::Checkpoint(format!("line {n}: unknown network `{other}`"))),
                    }
                }
                ["vector", name, len] => {
                    let len: usize = parse_tok(Some(len), n)?;
                    let (vn, vals) = next("vector values")?;
                    let vals = parse_values(vals, vn)?;
                    if vals.len() != len {
                        return Err(Error::Checkpoint(format!(
                            "line {vn}: expected {len} values, found {}",
                            vals.len()
                        )));
                    }
                    match *name {
                        "log_sigma" => log_sigma = Some(vals),
                        "nu" => nu = Some(vals),
                        other => return Err(Error::Checkpoint(format!("line {n}: unknown vector `{other}`"))),
                    }
                }
                ["adam", name, t, lr, b1, b2, eps, clip, len] => {
                    let config = AdamConfig {
                        lr: parse_tok(Some(lr), n)?,
                        beta1: parse_tok(Some(b1), n)?,
                        beta2: parse_tok(Some(b2), n)?,
                        eps: parse_tok(Some(eps), n)?,
                        max_grad_norm: if *clip == "none" { None } else { Some(parse_tok(Some(clip), n)?) },
                    };
                    let len: usize = parse_tok(Some(len), n)?;
                    let (mn, m) = next("first moments")?;
                    let (vn, v) = next("second moments")?;
                    let m = parse_values(m, mn)?;
                    let v = parse_values(v, vn)?;
                    if m.len() != len || v.len() != len {
                        return Err(Error::Checkpoint(format!("line {n}: optimizer state length mismatch")));
                    }
                    let opt = Adam::from_state(config, m, v, parse_tok(Some(t), n)?)?;
                    match *name {
                        "policy" => policy_opt = Some(opt),
                        "value" => value_opt = Some(opt),
                        other => return Err(Error::Checkpoint(format!("line {n}: unknown optimizer `{other}`"))),
                    }
                }
                _ => return Err(Error::Checkpoint(format!("line {n}: unrecognized line `{line}`"))),
            }
        }

        let missing = |what: &str| Error::Checkpoint(format!("missing {what}"));
        let policy = GaussianPolicy::from_parts(
            mean_net.ok_or_else(|| missing("policy_mean network"))?,
            log_sigma.ok_or_else(|| missing("log_sigma vector"))?,
        )?;
        let value = ValueFunction::from_net(value_net.ok_or_else(|| missing("value network"))?)?;
        Ok(Self {
            iteration: iteration.ok_or_else(|| missing("iteration"))?,
            timestep: timestep.ok_or_else(|| missing("timestep"))?,
            policy,
            value,
            policy_opt,
            value_opt,
            nu,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_text())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&&str>, line: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Checkpoint(format!("line {line}: missing field")))?;
    tok.parse()
        .map_err(|_| Error::Checkpoint(format!("line {line}: cannot parse `{tok}`")))
}

fn parse_values(line: &str, n: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("line {n}: cannot parse `{t}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = GaussianPolicy::new(4, 3, &[5], -1.0, &mut rng).unwrap();
        let value = ValueFunction::new(4, &[5], &mut rng).unwrap();
        let mut popt = Adam::new(policy.num_params(), AdamConfig::default());
        let mut p2 = policy.clone();
        let mut g = crate::nn::PolicyGrad::zeros_like(&p2);
        g.mean[0] = 1.0 / 3.0;
        p2.apply_gradients(&g, &mut popt).unwrap();
        Checkpoint {
            iteration: 7,
            timestep: 7 * 4096,
            policy: p2,
            value,
            policy_opt: Some(popt),
            value_opt: None,
            nu: Some(vec![2.0, -0.1, 1.5]),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn rejects_wrong_version_and_truncation() {
        let text = sample().to_text();
        assert!(Checkpoint::from_text(&text.replacen("asl-checkpoint 1", "asl-checkpoint 9", 1)).is_err());
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(Checkpoint::from_text(&cut).is_err());
    }
}
