//! C ABI over `asl-core`.
//!
//! Conventions:
//! - Every fallible call returns an [`AslStatus`]; results go through out-pointers.
//! - Handles are opaque and owned by the caller once created; free them with the
//!   matching `_free` function. Passing NULL to `_free` is a no-op.
//! - On failure the message of the last error on the calling thread is
//!   available from [`asl_last_error_message`].
//! - Panics never cross the boundary; they surface as `ASL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use asl_core::env::{load_scenario, EnvKind, Environment, Scenario};
use asl_core::harness::evaluate_policy;
use asl_core::losses::gates::value_gate;
use asl_core::nn::{Checkpoint, GaussianPolicy};
use asl_core::numerics::{gaussian_log_density, ols_fit_mb, Dataset1D};
use asl_core::symmetry::TransformSpec;
use asl_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AslStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Domain = 4,
    Degenerate = 5,
    Io = 6,
    Config = 7,
    Checkpoint = 8,
    EpisodeOver = 9,
    Panic = 10,
    Other = 11,
}

/// An environment with its declared transforms.
pub struct AslEnv {
    env: Environment,
    specs: Vec<TransformSpec>,
    eval_goals: Vec<usize>,
    running: bool,
}

/// The deterministic part of a trained policy plus its noise scale.
pub struct AslPolicy {
    policy: GaussianPolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> AslStatus {
    match e {
        Error::Shape(_) => AslStatus::Shape,
        Error::Domain(_) | Error::NearSingular(_) | Error::PoisonedParameters(_) => AslStatus::Domain,
        Error::EmptyInput(_) | Error::DegenerateDesign(_) => AslStatus::Degenerate,
        Error::Io(_) => AslStatus::Io,
        Error::Config(_) | Error::Toml(_) | Error::InvalidTransform { .. } => AslStatus::Config,
        Error::Checkpoint(_) => AslStatus::Checkpoint,
        _ => AslStatus::Other,
    }
}

/// Runs `f`, recording any error or panic for [`asl_last_error_message`].
fn guard(f: impl FnOnce() -> Result<(), (AslStatus, String)>) -> AslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AslStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AslStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (AslStatus, String)>;
}

impl<T> IntoFfi<T> for asl_core::Result<T> {
    fn ffi(self) -> Result<T, (AslStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (AslStatus, String) {
    (AslStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> (AslStatus, String) {
    (AslStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AslStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (AslStatus, String)> {
    if p.is_null() {
        return if len == 0 { Ok(&[]) } else { Err(null(what)) };
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], (AslStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err((AslStatus::Shape, format!("{what} has room for {len} values, need {want}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (AslStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn make_env(scenario: &Scenario, base: Option<&Path>) -> asl_core::Result<AslEnv> {
    Ok(AslEnv {
        env: scenario.build_env()?,
        specs: scenario.transform_specs(base)?,
        eval_goals: scenario.eval_goals.clone(),
        running: false,
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL,
/// or 0 when there is no error.
#[no_mangle]
pub unsafe extern "C" fn asl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn asl_status_name(status: AslStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AslStatus::Ok => c"ok",
        AslStatus::NullPointer => c"null pointer",
        AslStatus::InvalidArgument => c"invalid argument",
        AslStatus::Shape => c"shape mismatch",
        AslStatus::Domain => c"domain error",
        AslStatus::Degenerate => c"degenerate input",
        AslStatus::Io => c"i/o error",
        AslStatus::Config => c"invalid configuration",
        AslStatus::Checkpoint => c"bad checkpoint",
        AslStatus::EpisodeOver => c"episode over",
        AslStatus::Panic => c"panic",
        AslStatus::Other => c"error",
    };
    s.as_ptr()
}

/// Unperturbed environment by name: `"crawler"` or `"triangle"`.
#[no_mangle]
pub unsafe extern "C" fn asl_env_new(kind: *const c_char, out: *mut *mut AslEnv) -> AslStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let kind = match str_arg(kind, "kind")? {
            "crawler" => EnvKind::Crawler,
            "triangle" => EnvKind::Triangle,
            other => return Err(invalid(format!("unknown environment `{other}`"))),
        };
        let env = make_env(&Scenario::unperturbed("ffi", kind), None).ffi()?;
        *out = Box::into_raw(Box::new(env));
        Ok(())
    })
}

/// Environment described by a scenario file, perturbation included.
#[no_mangle]
pub unsafe extern "C" fn asl_env_from_scenario(path: *const c_char, out: *mut *mut AslEnv) -> AslStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let path = Path::new(str_arg(path, "path")?);
        let scenario = load_scenario(path).ffi()?;
        let env = make_env(&scenario, path.parent()).ffi()?;
        *out = Box::into_raw(Box::new(env));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn asl_env_free(env: *mut AslEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Observation length, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn asl_env_obs_dim(env: *const AslEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.spec().obs_dim)
}

/// Action length, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn asl_env_act_dim(env: *const AslEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.spec().act_dim)
}

/// Number of declared symmetry transforms, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn asl_env_num_transforms(env: *const AslEnv) -> usize {
    env.as_ref().map_or(0, |e| e.specs.len())
}

/// Starts an episode toward `goal`; initial-state noise comes from `seed`.
#[no_mangle]
pub unsafe extern "C" fn asl_env_reset(
    env: *mut AslEnv,
    goal: usize,
    seed: u64,
    obs_out: *mut f64,
    obs_len: usize,
) -> AslStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let spec = e.env.spec();
        if goal >= spec.num_goals {
            return Err(invalid(format!("goal {goal} out of range 0..{}", spec.num_goals)));
        }
        let out = out_slice(obs_out, obs_len, spec.obs_dim, "obs_out")?;
        let s = e.env.reset(goal, &mut ChaCha8Rng::seed_from_u64(seed)).ffi()?;
        out.copy_from_slice(&s);
        e.running = true;
        Ok(())
    })
}

/// Advances one step. `done` receives bit 0 for termination and bit 1 for
/// truncation; after either, the episode must be reset.
#[no_mangle]
pub unsafe extern "C" fn asl_env_step(
    env: *mut AslEnv,
    action: *const f64,
    act_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    reward: *mut f64,
    done: *mut u32,
) -> AslStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        if !e.running {
            return Err((AslStatus::EpisodeOver, "episode is over; call asl_env_reset".into()));
        }
        let a = slice_arg(action, act_len, "action")?;
        let obs_dim = e.env.spec().obs_dim;
        let out = out_slice(obs_out, obs_len, obs_dim, "obs_out")?;
        let reward = out_ref(reward, "reward")?;
        let done = out_ref(done, "done")?;
        let r = e.env.step(a).ffi()?;
        out.copy_from_slice(&r.state);
        *reward = r.reward;
        *done = u32::from(r.terminated) | (u32::from(r.truncated) << 1);
        e.running = !(r.terminated || r.truncated);
        Ok(())
    })
}

/// Applies transform `j` to a state.
#[no_mangle]
pub unsafe extern "C" fn asl_env_transform_state(
    env: *const AslEnv,
    j: usize,
    state: *const f64,
    out: *mut f64,
    len: usize,
) -> AslStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let spec = e.specs.get(j).ok_or_else(|| invalid(format!("transform {j} out of range")))?;
        let s = slice_arg(state, len, "state")?;
        let o = out_slice(out, len, spec.obs_dim(), "out")?;
        spec.apply_state_into(s, o).ffi()
    })
}

/// Applies the declared action map of transform `j`.
#[no_mangle]
pub unsafe extern "C" fn asl_env_transform_action(
    env: *const AslEnv,
    j: usize,
    action: *const f64,
    out: *mut f64,
    len: usize,
) -> AslStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let spec = e.specs.get(j).ok_or_else(|| invalid(format!("transform {j} out of range")))?;
        let a = slice_arg(action, len, "action")?;
        let o = out_slice(out, len, spec.act_dim(), "out")?;
        o.copy_from_slice(&spec.apply_action(a).ffi()?);
        Ok(())
    })
}

/// Policy stored in a training checkpoint.
#[no_mangle]
pub unsafe extern "C" fn asl_policy_load(path: *const c_char, out: *mut *mut AslPolicy) -> AslStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ck = Checkpoint::load(Path::new(str_arg(path, "path")?)).ffi()?;
        *out = Box::into_raw(Box::new(AslPolicy { policy: ck.policy }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn asl_policy_free(policy: *mut AslPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Deterministic action (the Gaussian mean) for one observation.
#[no_mangle]
pub unsafe extern "C" fn asl_policy_mean(
    policy: *const AslPolicy,
    obs: *const f64,
    obs_len: usize,
    out: *mut f64,
    act_len: usize,
) -> AslStatus {
    guard(|| {
        let p = &policy.as_ref().ok_or_else(|| null("policy"))?.policy;
        if obs_len != p.obs_dim() {
            return Err((AslStatus::Shape, format!("policy expects {} observations, got {obs_len}", p.obs_dim())));
        }
        let s = slice_arg(obs, obs_len, "obs")?;
        let o = out_slice(out, act_len, p.act_dim(), "out")?;
        o.copy_from_slice(&p.forward_mean(s).ffi()?);
        Ok(())
    })
}

/// Mean return of `episodes` deterministic episodes over the environment's
/// evaluation goals, round robin.
#[no_mangle]
pub unsafe extern "C" fn asl_evaluate(
    env: *const AslEnv,
    policy: *const AslPolicy,
    episodes: usize,
    seed: u64,
    mean_return: *mut f64,
) -> AslStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let p = &policy.as_ref().ok_or_else(|| null("policy"))?.policy;
        let out = out_ref(mean_return, "mean_return")?;
        if p.obs_dim() != e.env.spec().obs_dim || p.act_dim() != e.env.spec().act_dim {
            return Err((AslStatus::Shape, "policy does not fit this environment".into()));
        }
        *out = evaluate_policy(&e.env, p, &e.eval_goals, episodes, seed).ffi()?;
        Ok(())
    })
}

/// Log density of `x` under a diagonal Gaussian.
#[no_mangle]
pub unsafe extern "C" fn asl_gaussian_log_density(
    x: *const f64,
    mu: *const f64,
    sigma: *const f64,
    n: usize,
    out: *mut f64,
) -> AslStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = gaussian_log_density(slice_arg(x, n, "x")?, slice_arg(mu, n, "mu")?, slice_arg(sigma, n, "sigma")?)
            .ffi()?;
        Ok(())
    })
}

/// Least-squares line `y = m x + b`.
#[no_mangle]
pub unsafe extern "C" fn asl_ols_fit_mb(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    m: *mut f64,
    b: *mut f64,
) -> AslStatus {
    guard(|| {
        let m = out_ref(m, "m")?;
        let b = out_ref(b, "b")?;
        let d = Dataset1D::new(slice_arg(xs, n, "xs")?.to_vec(), slice_arg(ys, n, "ys")?.to_vec()).ffi()?;
        (*m, *b) = ols_fit_mb(&d).ffi()?;
        Ok(())
    })
}

/// Whether the value gate lets a transformed sample through (`*open` = 1).
#[no_mangle]
pub unsafe extern "C" fn asl_value_gate(v: f64, v_sym: f64, k_v: f64, open: *mut u8) -> AslStatus {
    guard(|| {
        let open = out_ref(open, "open")?;
        if !(k_v > 1.0) || !v.is_finite() || !v_sym.is_finite() {
            return Err((AslStatus::Domain, "value gate needs finite values and k_v > 1".into()));
        }
        *open = u8::from(value_gate(v, v_sym, k_v));
        Ok(())
    })
}
