//! C ABI over [`trackgym_core::Environment`] for in-process adapters.
//!
//! Observations are copied into caller-owned `f32` buffers: the track list
//! row-major `(n_track, 7)`, then the scan map row-major `(1, 48, 48)`.
//! Every entry point returns a status code; the message for the last
//! failure on a handle is available through [`trackgym_last_error`].

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trackgym_core::environment::{SCAN_GRID, TRACK_FEATURES};
use trackgym_core::{Environment, Error, Observation, RunConfig};

pub const TRACKGYM_OK: i32 = 0;
pub const TRACKGYM_ERR_CONFIG: i32 = 1;
pub const TRACKGYM_ERR_ARGUMENT: i32 = 2;
pub const TRACKGYM_ERR_LIFECYCLE: i32 = 3;
pub const TRACKGYM_ERR_RUNTIME: i32 = 4;
pub const TRACKGYM_ERR_NULL: i32 = 5;
pub const TRACKGYM_ERR_PANIC: i32 = 6;

/// Opaque environment handle.
pub struct TrackgymEnv {
    env: Environment,
    last_error: String,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrackgymSpaces {
    pub n_a: u64,
    pub n_actions: u64,
    pub n_track: u64,
    pub track_features: u64,
    pub scan_grid: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrackgymStepInfo {
    pub reward: f64,
    pub reward_cov: f64,
    pub reward_ssv: f64,
    pub terminated: u8,
    pub truncated: u8,
    pub clamped: u8,
    pub n_detections: u64,
    pub n_tracks: u64,
    pub n_est: u64,
    pub n_truncated: u64,
    pub action_azimuth: u64,
    pub action_elevation: u64,
    pub pointing_azimuth: f64,
    pub pointing_elevation: f64,
    pub time: f64,
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::Config(_) => TRACKGYM_ERR_CONFIG,
        Error::Argument(_) => TRACKGYM_ERR_ARGUMENT,
        Error::Lifecycle(_) => TRACKGYM_ERR_LIFECYCLE,
        _ => TRACKGYM_ERR_RUNTIME,
    }
}

fn write_message(msg: &str, buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > 0 {
        let n = msg.len().min(len - 1);
        // SAFETY: caller guarantees `buf` holds `len` bytes.
        unsafe {
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
    }
    msg.len()
}

fn guarded(f: impl FnOnce() -> i32) -> i32 {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(TRACKGYM_ERR_PANIC)
}

/// Creates an environment from a TOML config (null for defaults).
///
/// On failure returns null and writes the diagnostics into `err_buf`.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `err_buf` must be
/// null or point to `err_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn trackgym_env_new(
    config_toml: *const c_char,
    err_buf: *mut c_char,
    err_len: usize,
) -> *mut TrackgymEnv {
    let built = catch_unwind(|| -> Result<Environment, String> {
        let config = if config_toml.is_null() {
            RunConfig::default()
        } else {
            // SAFETY: checked non-null; NUL termination is the caller's contract.
            let text = unsafe { CStr::from_ptr(config_toml) }
                .to_str()
                .map_err(|e| format!("config is not UTF-8: {e}"))?;
            RunConfig::from_toml_str(text)
                .map_err(|diags| diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))?
        };
        Environment::new(config).map_err(|e| e.to_string())
    });
    match built {
        Ok(Ok(env)) => Box::into_raw(Box::new(TrackgymEnv {
            env,
            last_error: String::new(),
        })),
        Ok(Err(msg)) => {
            write_message(&msg, err_buf, err_len);
            ptr::null_mut()
        }
        Err(_) => {
            write_message("panic while constructing environment", err_buf, err_len);
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `handle` must be null or a pointer from [`trackgym_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trackgym_env_free(handle: *mut TrackgymEnv) {
    if !handle.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// # Safety
/// `handle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trackgym_env_spaces(handle: *const TrackgymEnv, out: *mut TrackgymSpaces) -> i32 {
    // SAFETY: caller contract.
    let (Some(h), Some(out)) = (unsafe { handle.as_ref() }, unsafe { out.as_mut() }) else {
        return TRACKGYM_ERR_NULL;
    };
    *out = TrackgymSpaces {
        n_a: h.env.n_a() as u64,
        n_actions: h.env.n_actions() as u64,
        n_track: h.env.config().environment.n_track as u64,
        track_features: TRACK_FEATURES as u64,
        scan_grid: SCAN_GRID as u64,
    };
    TRACKGYM_OK
}

/// Copies the message of the last failure on `handle` into `buf` and
/// returns its full length in bytes.
///
/// # Safety
/// `handle` must be a live handle; `buf` null or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn trackgym_last_error(handle: *const TrackgymEnv, buf: *mut c_char, len: usize) -> usize {
    // SAFETY: caller contract.
    match unsafe { handle.as_ref() } {
        Some(h) => write_message(&h.last_error, buf, len),
        None => 0,
    }
}

struct Buffers {
    track_list: *mut f32,
    track_len: usize,
    scan: *mut f32,
    scan_len: usize,
}

impl Buffers {
    fn fill(&self, obs: &Observation) -> Result<(), Error> {
        if self.track_list.is_null() || self.scan.is_null() {
            return Err(Error::Argument("observation buffer is null".into()));
        }
        if self.track_len != obs.track_list.len() || self.scan_len != obs.scan_history.len() {
            return Err(Error::Argument(format!(
                "observation buffers hold {} + {} floats, need {} + {}",
                self.track_len,
                self.scan_len,
                obs.track_list.len(),
                obs.scan_history.len()
            )));
        }
        // SAFETY: lengths checked against the caller-declared capacities.
        unsafe {
            ptr::copy_nonoverlapping(obs.track_list.as_ptr(), self.track_list, self.track_len);
            ptr::copy_nonoverlapping(obs.scan_history.as_ptr(), self.scan, self.scan_len);
        }
        Ok(())
    }
}

fn record(h: &mut TrackgymEnv, result: Result<(), Error>) -> i32 {
    match result {
        Ok(()) => {
            h.last_error.clear();
            TRACKGYM_OK
        }
        Err(e) => {
            h.last_error = e.to_string();
            status_of(&e)
        }
    }
}

/// Resets with `seed` and writes the initial observation.
///
/// # Safety
/// `handle` must be a live handle; the buffers must hold the declared
/// number of `f32`s.
#[no_mangle]
pub unsafe extern "C" fn trackgym_env_reset(
    handle: *mut TrackgymEnv,
    seed: u64,
    track_list: *mut f32,
    track_len: usize,
    scan: *mut f32,
    scan_len: usize,
) -> i32 {
    // SAFETY: caller contract.
    let Some(h) = (unsafe { handle.as_mut() }) else {
        return TRACKGYM_ERR_NULL;
    };
    let buffers = Buffers {
        track_list,
        track_len,
        scan,
        scan_len,
    };
    guarded(|| {
        let result = h.env.reset(seed).and_then(|obs| buffers.fill(&obs));
        record(h, result)
    })
}

/// Advances one step with a flat action `azimuth + elevation * N_a`.
///
/// # Safety
/// As for [`trackgym_env_reset`]; `info` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trackgym_env_step(
    handle: *mut TrackgymEnv,
    action: u64,
    track_list: *mut f32,
    track_len: usize,
    scan: *mut f32,
    scan_len: usize,
    info: *mut TrackgymStepInfo,
) -> i32 {
    // SAFETY: caller contract.
    let (Some(h), Some(info)) = (unsafe { handle.as_mut() }, unsafe { info.as_mut() }) else {
        return TRACKGYM_ERR_NULL;
    };
    let buffers = Buffers {
        track_list,
        track_len,
        scan,
        scan_len,
    };
    guarded(|| {
        let result = usize::try_from(action)
            .map_err(|_| Error::Argument(format!("action {action} out of range")))
            .and_then(|a| h.env.step_flat(a))
            .and_then(|out| {
                buffers.fill(&out.observation)?;
                *info = TrackgymStepInfo {
                    reward: out.reward,
                    reward_cov: out.info.reward_cov,
                    reward_ssv: out.info.reward_ssv,
                    terminated: out.terminated.into(),
                    truncated: out.truncated.into(),
                    clamped: out.info.clamped.into(),
                    n_detections: out.info.n_detections as u64,
                    n_tracks: out.info.n_tracks as u64,
                    n_est: out.observation.n_est as u64,
                    n_truncated: out.info.n_truncated as u64,
                    action_azimuth: out.info.action.azimuth as u64,
                    action_elevation: out.info.action.elevation as u64,
                    pointing_azimuth: out.info.pointing.0,
                    pointing_elevation: out.info.pointing.1,
                    time: out.info.time,
                };
                Ok(())
            });
        record(h, result)
    })
}
