//! C ABI over the single-agent layout environment.
//!
//! Handles are opaque (`LpEnv *`) and owned by the caller until passed to
//! `lp_env_free`. Every fallible call returns an `LpStatus`; on failure the
//! message is kept per thread and can be read with `lp_last_error`.
//! Panics never cross the boundary; they surface as `LP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use laserplan::env::{EnvConfig, EnvError, LayoutEnv, ObsMode, Observation};
use laserplan::scenario::{builtin_scenario, builtin_names, Scenario};

/// Bumped whenever a signature or struct layout in this file changes.
pub const LP_ABI_VERSION: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidScenario = 3,
    OutOfRange = 4,
    EpisodeOver = 5,
    NotReset = 6,
    BufferTooSmall = 7,
    Panic = 99,
}

/// Outcome of one `lp_env_step`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LpStepResult {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub accepted: bool,
}

/// Vector lengths of an observation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LpObsDims {
    pub features: usize,
    pub context: usize,
}

/// Opaque environment handle.
pub struct LpEnv {
    env: LayoutEnv,
    obs: Option<Observation>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn guard(f: impl FnOnce() -> Result<(), (LpStatus, String)>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LpStatus::Panic
        }
    }
}

fn env_status(e: EnvError) -> (LpStatus, String) {
    let status = match e {
        EnvError::Scenario(_) => LpStatus::InvalidScenario,
        EnvError::OutOfRange { .. } => LpStatus::OutOfRange,
        EnvError::EpisodeOver => LpStatus::EpisodeOver,
        EnvError::NotReset => LpStatus::NotReset,
    };
    (status, e.to_string())
}

fn null() -> (LpStatus, String) {
    (LpStatus::NullPointer, "null pointer argument".into())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (LpStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (LpStatus::InvalidArgument, "string is not UTF-8".into()))
}

unsafe fn env_mut<'a>(env: *mut LpEnv) -> Result<&'a mut LpEnv, (LpStatus, String)> {
    env.as_mut().ok_or_else(null)
}

unsafe fn create(scenario: Scenario, context: bool, out: *mut *mut LpEnv) -> Result<(), (LpStatus, String)> {
    let config = EnvConfig {
        obs: ObsMode::Features,
        context,
        ..EnvConfig::default()
    };
    let env = LayoutEnv::new(scenario, config).map_err(env_status)?;
    *out = Box::into_raw(Box::new(LpEnv { env, obs: None }));
    Ok(())
}

#[no_mangle]
pub extern "C" fn lp_abi_version() -> u32 {
    LP_ABI_VERSION
}

/// Creates an environment for a builtin scenario name. Observations use the
/// feature encoding; `context` toggles the design-context vector.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_env_new_builtin(name: *const c_char, context: bool, out: *mut *mut LpEnv) -> LpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let name = read_str(name)?;
        let scenario = builtin_scenario(name).ok_or_else(|| {
            (
                LpStatus::InvalidScenario,
                format!("unknown scenario `{name}` (builtins: {})", builtin_names().join(", ")),
            )
        })?;
        create(scenario, context, out)
    })
}

/// Creates an environment from a scenario JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_env_new_json(json: *const c_char, context: bool, out: *mut *mut LpEnv) -> LpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let scenario = Scenario::from_json(read_str(json)?).map_err(|e| (LpStatus::InvalidScenario, e.to_string()))?;
        create(scenario, context, out)
    })
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `env` must come from an `lp_env_new_*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lp_env_free(env: *mut LpEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lp_env_action_count(env: *const LpEnv, out: *mut usize) -> LpStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(null)?;
        *out.as_mut().ok_or_else(null)? = env.env.action_count();
        Ok(())
    })
}

/// # Safety
/// `env` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lp_env_obs_dims(env: *const LpEnv, out: *mut LpObsDims) -> LpStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(null)?;
        let dims = env.env.dims();
        *out.as_mut().ok_or_else(null)? = LpObsDims {
            features: dims.features,
            context: dims.context,
        };
        Ok(())
    })
}

/// Starts a new episode.
///
/// # Safety
/// `env` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn lp_env_reset(env: *mut LpEnv, seed: u64) -> LpStatus {
    guard(|| {
        let h = env_mut(env)?;
        let (obs, _) = h.env.reset(seed);
        h.obs = Some(obs);
        Ok(())
    })
}

/// Applies one action id; `out` may be null when the result is not needed.
///
/// # Safety
/// `env` must be a valid handle; `out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn lp_env_step(env: *mut LpEnv, action: i64, out: *mut LpStepResult) -> LpStatus {
    guard(|| {
        let h = env_mut(env)?;
        let r = h.env.step(action).map_err(env_status)?;
        if let Some(out) = out.as_mut() {
            *out = LpStepResult {
                reward: r.reward,
                terminated: r.terminated,
                truncated: r.truncated,
                accepted: r.info.accepted,
            };
        }
        h.obs = Some(r.obs);
        Ok(())
    })
}

/// Copies the latest observation into caller buffers sized by `lp_env_obs_dims`.
/// Either buffer may be null to skip it.
///
/// # Safety
/// Non-null buffers must hold at least the given number of floats.
#[no_mangle]
pub unsafe extern "C" fn lp_env_copy_obs(
    env: *const LpEnv,
    features: *mut f32,
    features_len: usize,
    context: *mut f32,
    context_len: usize,
) -> LpStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(null)?;
        let obs = h
            .obs
            .as_ref()
            .ok_or_else(|| (LpStatus::NotReset, "no observation yet; call lp_env_reset".to_string()))?;
        for (src, dst, len) in [(obs.features(), features, features_len), (&obs.context[..], context, context_len)] {
            if dst.is_null() {
                continue;
            }
            if len < src.len() {
                return Err((
                    LpStatus::BufferTooSmall,
                    format!("buffer holds {len} floats, need {}", src.len()),
                ));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
        }
        Ok(())
    })
}

/// FNV-1a hash of the current cell states.
///
/// # Safety
/// `env` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lp_env_layout_hash(env: *const LpEnv, out: *mut u64) -> LpStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(null)?;
        *out.as_mut().ok_or_else(null)? = h.env.layout_hash();
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len - 1` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn lp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
