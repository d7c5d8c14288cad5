//! C ABI over `finform`.
//!
//! Every fallible call returns a [`FinformStatus`]; on failure the message is
//! available from [`finform_last_error_message`] on the same thread until the
//! next failing call. Handles are opaque and must be released with their
//! matching `*_free` function.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use finform::cli::{self, config, config::Settings};
use finform::integrate::Trace;
use finform::scenarios::lugre::{self, LugreParams};
use finform::scenarios::wheel;
use finform::Error;

/// Result of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinformStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Preflight = 5,
    Diverged = 6,
    Simulation = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Scenario configuration being assembled.
pub struct FinformConfig {
    scenario: String,
    settings: Settings,
}

/// Result of a completed run.
pub struct FinformTrace {
    trace: Trace,
    summary: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FinformStatus {
    match e {
        Error::Config { .. } => FinformStatus::Config,
        Error::PreflightFailed(_) => FinformStatus::Preflight,
        Error::Diverged { .. } | Error::NonFiniteDerivative { .. } => FinformStatus::Diverged,
        Error::Io(_) => FinformStatus::Io,
        Error::InvalidArgument(_) | Error::InvalidGain(_) | Error::SlipOutOfRange(_) => FinformStatus::InvalidArgument,
        _ => FinformStatus::Simulation,
    }
}

fn fail(status: FinformStatus, message: &str) -> FinformStatus {
    set_last_error(message);
    status
}

/// Runs `body`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), FinformStatus>>(body: F) -> FinformStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FinformStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(FinformStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> FinformStatus {
    fail(status_of(&e), &e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, FinformStatus> {
    if p.is_null() {
        return Err(fail(FinformStatus::NullPointer, &format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(FinformStatus::InvalidUtf8, &format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, FinformStatus> {
    p.as_ref().ok_or_else(|| fail(FinformStatus::NullPointer, &format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, FinformStatus> {
    p.as_mut().ok_or_else(|| fail(FinformStatus::NullPointer, &format!("{name} is null")))
}

/// Message of the last failed call on this thread, or null if none. Owned by the library.
#[no_mangle]
pub extern "C" fn finform_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn finform_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a configuration for the named scenario (`spring`, `sine`, `abs`, `linear`).
///
/// # Safety
/// `scenario` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn finform_config_new(scenario: *const c_char, out: *mut *mut FinformConfig) -> FinformStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let name = str_arg(scenario, "scenario")?;
        let settings = Settings::default();
        config::build(&settings, Some(name)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FinformConfig { scenario: name.to_string(), settings }));
        Ok(())
    })
}

/// Loads an INI configuration file; `scenario` may be null to use the file's `[scenario] name`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `scenario` null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn finform_config_load(path: *const c_char, scenario: *const c_char, out: *mut *mut FinformConfig) -> FinformStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let flag = if scenario.is_null() { None } else { Some(str_arg(scenario, "scenario")?) };
        let settings = Settings::load(Path::new(path)).map_err(lib_err)?;
        let name = settings.scenario_name(flag).map_err(lib_err)?;
        config::build(&settings, Some(&name)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FinformConfig { scenario: name, settings }));
        Ok(())
    })
}

/// Applies `key=value` or `section.key=value`; the configuration is unchanged on failure.
///
/// # Safety
/// `config` must come from `finform_config_new`/`finform_config_load`; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn finform_config_set(config: *mut FinformConfig, assignment: *const c_char) -> FinformStatus {
    guard(|| {
        let cfg = out_arg(config, "config")?;
        let assignment = str_arg(assignment, "assignment")?;
        let mut next = cfg.settings.clone();
        next.apply_override(assignment, &cfg.scenario).map_err(lib_err)?;
        config::build(&next, Some(&cfg.scenario)).map_err(lib_err)?;
        cfg.settings = next;
        Ok(())
    })
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `config` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn finform_config_free(config: *mut FinformConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs preflight, simulation and excitation analysis.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn finform_run(config: *const FinformConfig, out: *mut *mut FinformTrace) -> FinformStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ref_arg(config, "config")?;
        let spec = config::build(&cfg.settings, Some(&cfg.scenario)).map_err(lib_err)?;
        let (outcome, trace) = cli::execute(&spec).map_err(lib_err)?;
        let summary = CString::new(cli::summary(&outcome)).unwrap_or_default();
        *out = Box::into_raw(Box::new(FinformTrace { trace, summary }));
        Ok(())
    })
}

/// Number of recorded samples.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_len(trace: *const FinformTrace, out: *mut usize) -> FinformStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(trace, "trace")?.trace.len();
        Ok(())
    })
}

/// Values per sample of a named channel (`x`, `psi`, `u`, `theta_hat`, `V`, …).
///
/// # Safety
/// `trace` must be a live handle, `name` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_channel_width(trace: *const FinformTrace, name: *const c_char, out: *mut usize) -> FinformStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let ch = t.trace.channel(str_arg(name, "name")?).map_err(lib_err)?;
        *out_arg(out, "out")? = ch.width();
        Ok(())
    })
}

/// Copies a channel row-major into `buf` (`len × width` values).
///
/// # Safety
/// `buf` must point to `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_channel_copy(
    trace: *const FinformTrace,
    name: *const c_char,
    buf: *mut f64,
    buf_len: usize,
) -> FinformStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let ch = t.trace.channel(str_arg(name, "name")?).map_err(lib_err)?;
        let needed = ch.width() * ch.len();
        if buf.is_null() {
            return Err(fail(FinformStatus::NullPointer, "buf is null"));
        }
        if buf_len < needed {
            return Err(fail(FinformStatus::BufferTooSmall, &format!("buffer holds {buf_len} values, need {needed}")));
        }
        let dst = std::slice::from_raw_parts_mut(buf, needed);
        for (row, chunk) in ch.rows().zip(dst.chunks_mut(ch.width().max(1))) {
            chunk.copy_from_slice(row);
        }
        Ok(())
    })
}

/// Copies the sample times into `buf`.
///
/// # Safety
/// `buf` must point to `buf_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_times_copy(trace: *const FinformTrace, buf: *mut f64, buf_len: usize) -> FinformStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let times = t.trace.times();
        if buf.is_null() {
            return Err(fail(FinformStatus::NullPointer, "buf is null"));
        }
        if buf_len < times.len() {
            return Err(fail(FinformStatus::BufferTooSmall, &format!("buffer holds {buf_len} values, need {}", times.len())));
        }
        std::slice::from_raw_parts_mut(buf, times.len()).copy_from_slice(times);
        Ok(())
    })
}

/// Plain-text run summary, owned by the trace handle.
///
/// # Safety
/// `trace` must be a live handle; the string dies with it.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_summary(trace: *const FinformTrace) -> *const c_char {
    trace.as_ref().map_or(ptr::null(), |t| t.summary.as_ptr())
}

/// Writes the CSV trace (excitation column over a `2π` window when `with_pe` is nonzero).
///
/// # Safety
/// `trace` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_export_csv(trace: *const FinformTrace, path: *const c_char, with_pe: i32) -> FinformStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let path = str_arg(path, "path")?;
        let window = (with_pe != 0).then_some(2.0 * std::f64::consts::PI);
        cli::export_csv(&t.trace, window, Path::new(path)).map_err(lib_err)
    })
}

/// Braking distance of a wheel run (m).
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_braking_distance(trace: *const FinformTrace, out: *mut f64) -> FinformStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        *out_arg(out, "out")? = wheel::braking_distance(&t.trace).map_err(lib_err)?;
        Ok(())
    })
}

/// Releases a trace; null is ignored.
///
/// # Safety
/// `trace` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn finform_trace_free(trace: *mut FinformTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Steady-state tyre force with default wheel parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn finform_lugre_friction(x2: f64, x3: f64, theta: f64, out: *mut f64) -> FinformStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = lugre::lugre_friction(&LugreParams::default(), x2, x3, theta).map_err(lib_err)?;
        Ok(())
    })
}

/// Force-maximising slip for road condition `theta` at wheel speed `x2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn finform_optimal_slip(theta: f64, x2: f64, out: *mut f64) -> FinformStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(theta > 0.0) {
            return Err(fail(FinformStatus::InvalidArgument, &format!("theta must be positive, got {theta}")));
        }
        *out = lugre::optimal_slip(&LugreParams::default(), theta, x2);
        Ok(())
    })
}
