//! C interface to the stairclimb task environment and trained policies.
//!
//! Every function returns an [`ScStatus`]. On failure the message is kept per
//! thread and can be read with [`sc_last_error`]. Handles are opaque and must be
//! released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use stairclimb::config::Config;
use stairclimb::harness::eval::{eval_task_config, load_policy};
use stairclimb::net::GaussianPolicy;
use stairclimb::task::{Env, Termination, ACTION_DIM, OBS_DIM};
use stairclimb::terrain::{HeightField, TerrainSpec};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// How a step ended.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScDone {
    Running = 0,
    Timeout = 1,
    Fall = 2,
    Diverged = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScStep {
    pub reward: f64,
    pub distance: f64,
    pub done: ScDone,
}

/// A task environment on a fixed terrain.
pub struct ScEnv {
    env: Env,
    field: HeightField,
}

/// A policy loaded from a checkpoint.
pub struct ScPolicy {
    policy: GaussianPolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Fail(ScStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ScStatus::Panic
        }
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(ScStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(ScStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(ScStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice_in<'a, T>(
    p: *const T,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(Fail(ScStatus::NullPointer, format!("{what} is null")));
    }
    if len != need {
        return Err(invalid(format!("{what} has length {len}, expected {need}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(
    p: *mut T,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(Fail(ScStatus::NullPointer, format!("{what} is null")));
    }
    if len < need {
        return Err(Fail(
            ScStatus::BufferTooSmall,
            format!("{what} holds {len}, needs {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Observation length.
#[no_mangle]
pub extern "C" fn sc_obs_dim() -> usize {
    OBS_DIM
}

/// Action length.
#[no_mangle]
pub extern "C" fn sc_action_dim() -> usize {
    ACTION_DIM
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates an environment with default settings on `terrain` (`flat`,
/// `step:<height>` or `<kind>:<level>`) and resets it.
///
/// # Safety
/// `terrain` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_env_new(
    terrain: *const c_char,
    seed: u64,
    out: *mut *mut ScEnv,
) -> ScStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(ScStatus::NullPointer, "out is null".into()));
        }
        let spec: TerrainSpec = str_arg(terrain, "terrain")?
            .parse()
            .map_err(|e| invalid(format!("{e}")))?;
        let field = spec.build(seed).map_err(|e| invalid(e.to_string()))?;
        let cfg = Config::default();
        let mut env = Env::new(
            Arc::new(cfg.robot.clone()),
            Arc::new(eval_task_config(&cfg)),
            seed,
        );
        env.reset(&field, (0, 0));
        *out = Box::into_raw(Box::new(ScEnv { env, field }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from [`sc_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_env_free(env: *mut ScEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts a new episode.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_env_reset(env: *mut ScEnv) -> ScStatus {
    guard(|| {
        let h = handle(env, "env")?;
        h.env.reset(&h.field, (0, 0));
        Ok(())
    })
}

/// Sets the terrain-boolean observation (0 or 1).
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_env_set_terrain_bool(env: *mut ScEnv, value: u8) -> ScStatus {
    guard(|| {
        let h = handle(env, "env")?;
        if value > 1 {
            return Err(invalid(format!("terrain bool must be 0 or 1, got {value}")));
        }
        h.env.set_terrain_bool(value == 1);
        Ok(())
    })
}

/// Writes the current (noisy, delayed) observation into `obs[0..sc_obs_dim()]`.
///
/// # Safety
/// `env` must be a live handle and `obs` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_env_observe(env: *mut ScEnv, obs: *mut f64, len: usize) -> ScStatus {
    guard(|| {
        let h = handle(env, "env")?;
        let dst = slice_out(obs, len, OBS_DIM, "obs")?;
        dst.copy_from_slice(&h.env.observe());
        Ok(())
    })
}

/// Advances one control tick with normalised actions in [-1, 1].
///
/// # Safety
/// `env` must be a live handle, `action` must point to `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_env_step(
    env: *mut ScEnv,
    action: *const f64,
    len: usize,
    out: *mut ScStep,
) -> ScStatus {
    guard(|| {
        let h = handle(env, "env")?;
        let a = slice_in(action, len, ACTION_DIM, "action")?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(invalid("action contains a non-finite value"));
        }
        let out = out
            .as_mut()
            .ok_or_else(|| Fail(ScStatus::NullPointer, "out is null".into()))?;
        let a: [f64; ACTION_DIM] = a.try_into().expect("length checked");
        let o = h.env.step(&a);
        *out = ScStep {
            reward: o.reward,
            distance: o.distance,
            done: match o.done {
                None => ScDone::Running,
                Some(Termination::Timeout) => ScDone::Timeout,
                Some(Termination::Fall) => ScDone::Fall,
                Some(Termination::Diverged) => ScDone::Diverged,
            },
        };
        Ok(())
    })
}

/// Loads the actor of a checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_policy_load(path: *const c_char, out: *mut *mut ScPolicy) -> ScStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(ScStatus::NullPointer, "out is null".into()));
        }
        let path = str_arg(path, "path")?;
        let loaded = load_policy(Path::new(path)).map_err(|e| Fail(ScStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(ScPolicy {
            policy: loaded.policy,
        }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle from [`sc_policy_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sc_policy_free(policy: *mut ScPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Mean action for one observation.
///
/// # Safety
/// `policy` must be a live handle; `obs` must point to `obs_len` doubles and
/// `action` to `action_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_policy_act(
    policy: *mut ScPolicy,
    obs: *const f64,
    obs_len: usize,
    action: *mut f64,
    action_len: usize,
) -> ScStatus {
    guard(|| {
        let p = handle(policy, "policy")?;
        let o = slice_in(obs, obs_len, OBS_DIM, "obs")?;
        let dst = slice_out(action, action_len, ACTION_DIM, "action")?;
        let o32: Vec<f32> = o.iter().map(|&v| v as f32).collect();
        let mean = p.policy.mean(&o32).map_err(|e| invalid(e.to_string()))?;
        for (d, m) in dst.iter_mut().zip(mean.iter()) {
            *d = *m as f64;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, ScStatus::Panic);
        let mut buf = [0 as c_char; 64];
        let n = unsafe { sc_last_error(buf.as_mut_ptr(), buf.len()) };
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
        assert_eq!(n, msg.len());
    }

    #[test]
    fn error_message_is_truncated_to_fit() {
        set_error("abcdefgh");
        let mut buf = [1 as c_char; 4];
        let n = unsafe { sc_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 8);
        assert_eq!(
            unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(),
            "abc"
        );
    }
}
