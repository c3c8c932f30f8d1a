//! C ABI over the mechanism solvers and the batched environment.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Every fallible call returns an [`LfStatus`]; on failure the
//! message is kept per thread and read with [`lf_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use linkforge::env::config::EnvConfig;
use linkforge::env::BatchEnv;
use linkforge::error::{DynamicsError, EnvError};
use linkforge::model::{load_model, Mechanism, MechanismModel, VariantSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    NonFinite = 5,
    Io = 6,
    Panic = 7,
}

pub struct LfModel {
    inner: MechanismModel,
}

pub struct LfEnv {
    batch: BatchEnv,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|b| *b != 0));
    });
}

fn fail(status: LfStatus, msg: impl AsRef<str>) -> LfStatus {
    set_error(msg.as_ref());
    status
}

fn env_status(e: &EnvError) -> LfStatus {
    match e {
        EnvError::Kinematics(_) => LfStatus::Solver,
        EnvError::Dynamics { source: DynamicsError::NonFinite { .. }, .. } => LfStatus::NonFinite,
        EnvError::Io(_) => LfStatus::Io,
        EnvError::ActionWidth { .. } => LfStatus::InvalidArgument,
        _ => LfStatus::Config,
    }
}

fn guarded(f: impl FnOnce() -> LfStatus) -> LfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LfStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, LfStatus> {
    if p.is_null() {
        return Err(fail(LfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(LfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load and validate a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lf_model_load(path: *const c_char, out: *mut *mut LfModel) -> LfStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LfStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_model(Path::new(path)) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(LfModel { inner: m }));
                LfStatus::Ok
            }
            Err(linkforge::error::ModelError::Io(e)) => fail(LfStatus::Io, e.to_string()),
            Err(e) => fail(LfStatus::Config, e.to_string()),
        }
    })
}

/// Parse and validate a model from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lf_model_from_json(json: *const c_char, out: *mut *mut LfModel) -> LfStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LfStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match MechanismModel::from_json_str(text) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(LfModel { inner: m }));
                LfStatus::Ok
            }
            Err(e) => fail(LfStatus::Config, e.to_string()),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from `lf_model_load`/`lf_model_from_json`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn lf_model_free(model: *mut LfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_model_num_joints(model: *const LfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_joints())
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_model_num_actuators(model: *const LfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_actuators())
}

/// Nominal kinematic configuration; writes `min(len, num_joints)` values.
///
/// # Safety
/// `model` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lf_model_nominal(model: *const LfModel, out: *mut f64, len: usize) -> LfStatus {
    let Some(m) = model.as_ref() else {
        return fail(LfStatus::NullPointer, "model is null");
    };
    if out.is_null() {
        return fail(LfStatus::NullPointer, "out is null");
    }
    let q = &m.inner.q_nom;
    ptr::copy_nonoverlapping(q.as_ptr(), out, len.min(q.len()));
    LfStatus::Ok
}

/// Solve the passive angles of a named five-bar for inputs `theta1`, `theta4`,
/// warm-started from the nominal pose. `out` receives theta2, theta3 and the
/// closure residual norm.
///
/// # Safety
/// `model` must be a live handle, `mechanism` a NUL-terminated string and
/// `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lf_five_bar_solve(
    model: *const LfModel,
    mechanism: *const c_char,
    theta1: f64,
    theta4: f64,
    out: *mut f64,
) -> LfStatus {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(LfStatus::NullPointer, "model is null");
        };
        if out.is_null() {
            return fail(LfStatus::NullPointer, "out is null");
        }
        let name = match str_arg(mechanism, "mechanism") {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(Mechanism::FiveBar { params, joints, .. }) = m.inner.mechanism(name) else {
            return fail(LfStatus::InvalidArgument, format!("no five-bar named `{name}`"));
        };
        let q = &m.inner.q_nom;
        match params.solve_passive(theta1, theta4, (q[joints[1]], q[joints[2]])) {
            Ok(c) => {
                *out = c.theta2;
                *out.add(1) = c.theta3;
                *out.add(2) = params.closure_residual(&c).norm();
                LfStatus::Ok
            }
            Err(e) => fail(LfStatus::Solver, e.to_string()),
        }
    })
}

/// Create a batch of `n_envs` environments for `variant` ("simplified",
/// "4-bar", "5-bar", "differential", "all"). `config_json` may be null for
/// the default configuration; `seed` replaces its seed.
///
/// # Safety
/// `model` must be a live handle; string arguments NUL-terminated or null
/// where allowed; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lf_env_create(
    model: *const LfModel,
    variant: *const c_char,
    config_json: *const c_char,
    n_envs: usize,
    seed: u64,
    out: *mut *mut LfEnv,
) -> LfStatus {
    guarded(|| {
        if out.is_null() {
            return fail(LfStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(m) = model.as_ref() else {
            return fail(LfStatus::NullPointer, "model is null");
        };
        let vname = match str_arg(variant, "variant") {
            Ok(v) => v,
            Err(s) => return s,
        };
        let Some(v) = VariantSpec::parse(vname) else {
            return fail(LfStatus::InvalidArgument, format!("unknown variant `{vname}`"));
        };
        let mut cfg = if config_json.is_null() {
            EnvConfig::default()
        } else {
            let text = match str_arg(config_json, "config_json") {
                Ok(t) => t,
                Err(s) => return s,
            };
            match EnvConfig::from_json_str(text) {
                Ok(c) => c,
                Err(e) => return fail(env_status(&e), e.to_string()),
            }
        };
        cfg.seed = seed;
        match BatchEnv::new(&m.inner, v, &cfg, n_envs) {
            Ok(batch) => {
                *out = Box::into_raw(Box::new(LfEnv { batch }));
                LfStatus::Ok
            }
            Err(e) => fail(env_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `env` must be null or a live handle from `lf_env_create`.
#[no_mangle]
pub unsafe extern "C" fn lf_env_free(env: *mut LfEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_env_num_envs(env: *const LfEnv) -> usize {
    env.as_ref().map_or(0, |e| e.batch.len())
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_env_obs_len(env: *const LfEnv) -> usize {
    env.as_ref().map_or(0, |e| e.batch.obs_len())
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_env_num_actions(env: *const LfEnv) -> usize {
    env.as_ref().map_or(0, |e| e.batch.num_actions())
}

unsafe fn copy_obs(env: &LfEnv, obs: *mut f64, obs_len: usize) -> LfStatus {
    let src = env.batch.observations();
    if obs.is_null() {
        return LfStatus::Ok;
    }
    if obs_len != src.len() {
        return fail(LfStatus::InvalidArgument, format!("observation buffer holds {obs_len}, need {}", src.len()));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), obs, src.len());
    LfStatus::Ok
}

/// Start a new episode in every environment. `obs` may be null; otherwise it
/// receives `num_envs * obs_len` values and `obs_len` must equal that count.
///
/// # Safety
/// `env` must be a live handle; `obs` null or `obs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lf_env_reset(env: *mut LfEnv, obs: *mut f64, obs_len: usize) -> LfStatus {
    guarded(|| {
        let Some(e) = env.as_mut() else {
            return fail(LfStatus::NullPointer, "env is null");
        };
        e.batch.reset();
        copy_obs(e, obs, obs_len)
    })
}

/// Step every environment. `actions` holds `num_envs * num_actions` values.
/// `obs`, `rewards` (`num_envs` doubles) and `dones` (`num_envs` bytes) may
/// each be null.
///
/// # Safety
/// `env` must be a live handle and every non-null buffer sized as described.
#[no_mangle]
pub unsafe extern "C" fn lf_env_step(
    env: *mut LfEnv,
    actions: *const f64,
    actions_len: usize,
    obs: *mut f64,
    obs_len: usize,
    rewards: *mut f64,
    dones: *mut u8,
) -> LfStatus {
    guarded(|| {
        let Some(e) = env.as_mut() else {
            return fail(LfStatus::NullPointer, "env is null");
        };
        if actions.is_null() {
            return fail(LfStatus::NullPointer, "actions is null");
        }
        let a = std::slice::from_raw_parts(actions, actions_len);
        if let Err(err) = e.batch.step(a) {
            return fail(env_status(&err), err.to_string());
        }
        for (k, info) in e.batch.infos().iter().enumerate() {
            if !rewards.is_null() {
                *rewards.add(k) = info.reward;
            }
            if !dones.is_null() {
                *dones.add(k) = info.done as u8;
            }
        }
        copy_obs(e, obs, obs_len)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_is_truncated_and_terminated() {
        set_error("abcdef");
        let mut buf = [1 as c_char; 4];
        let n = unsafe { lf_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }
}
