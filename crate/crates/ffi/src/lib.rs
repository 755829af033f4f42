// SPDX-License-Identifier: Apache-2.0
//! C ABI for cloaksim.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a status code; on
//! failure the message is available from [`cloaksim_last_error`] on the same
//! thread until the next failing call. Strings returned by the library are
//! NUL-terminated UTF-8.

use cloaksim::cli::runner::{self, RunError};
use cloaksim::cli::scenario::Scenario;
use cloaksim::cloaking::{closed_form_tone, ClosedFormParams, Miscalibration};
use cloaksim::units::{ghz, mhz};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

pub const CLOAKSIM_OK: i32 = 0;
/// Physics or integration failure.
pub const CLOAKSIM_ERR_PHYSICS: i32 = 1;
/// Parse error, unknown key, bad override or unsupported combination.
pub const CLOAKSIM_ERR_CONFIG: i32 = 2;
/// Null pointer, bad UTF-8 or out-of-range argument.
pub const CLOAKSIM_ERR_ARGUMENT: i32 = 3;
/// A panic was caught at the boundary.
pub const CLOAKSIM_ERR_INTERNAL: i32 = 4;

/// Parsed scenario.
pub struct CloaksimScenario {
    inner: Scenario,
}

/// Result of a scenario run.
pub struct CloaksimResult {
    summary: CString,
    names: Vec<CString>,
    csv: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(code: i32, msg: impl Into<String>) -> i32 {
    set_error(msg);
    code
}

fn guard<F: FnOnce() -> i32>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(c) => c,
        Err(p) => {
            let m = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "panic".into());
            fail(CLOAKSIM_ERR_INTERNAL, format!("internal error: {m}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(fail(CLOAKSIM_ERR_ARGUMENT, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(CLOAKSIM_ERR_ARGUMENT, format!("{what} is not UTF-8")))
}

fn c_string(s: String) -> CString {
    CString::new(s.replace('\0', " ")).unwrap_or_default()
}

fn run_error(e: RunError) -> i32 {
    let code = match e {
        RunError::Config(_) => CLOAKSIM_ERR_CONFIG,
        RunError::Physics { .. } => CLOAKSIM_ERR_PHYSICS,
    };
    fail(code, e.to_string())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cloaksim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cloaksim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses scenario JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_scenario_parse(json: *const c_char, out: *mut *mut CloaksimScenario) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail(CLOAKSIM_ERR_ARGUMENT, "out is null");
        }
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(c) => return c,
        };
        match Scenario::parse(text) {
            Ok(sc) => {
                *out = Box::into_raw(Box::new(CloaksimScenario { inner: sc }));
                CLOAKSIM_OK
            }
            Err(e) => fail(CLOAKSIM_ERR_CONFIG, e.to_string()),
        }
    })
}

/// Loads a scenario bundled with the library by name.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_scenario_bundled(name: *const c_char, out: *mut *mut CloaksimScenario) -> i32 {
    guard(|| {
        let n = match str_arg(name, "name") {
            Ok(t) => t,
            Err(c) => return c,
        };
        match cloaksim::cli::bundled(n) {
            Some(text) => {
                let c = c_string(text.to_string());
                cloaksim_scenario_parse(c.as_ptr(), out)
            }
            None => fail(CLOAKSIM_ERR_CONFIG, format!("{n}: no such bundled scenario")),
        }
    })
}

/// Applies one `key=value` override (dotted path or unique key).
///
/// # Safety
/// `sc` must come from this library; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_scenario_set(sc: *mut CloaksimScenario, assignment: *const c_char) -> i32 {
    guard(|| {
        let Some(h) = sc.as_mut() else {
            return fail(CLOAKSIM_ERR_ARGUMENT, "scenario is null");
        };
        let kv = match str_arg(assignment, "assignment") {
            Ok(t) => t,
            Err(c) => return c,
        };
        match Scenario::parse_with_overrides(&h.inner.to_json(), &[kv.to_string()]) {
            Ok(s) => {
                h.inner = s;
                CLOAKSIM_OK
            }
            Err(e) => fail(CLOAKSIM_ERR_CONFIG, e.to_string()),
        }
    })
}

/// Canonical JSON of the scenario; release with [`cloaksim_string_free`].
///
/// # Safety
/// `sc` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_scenario_json(sc: *const CloaksimScenario) -> *mut c_char {
    match sc.as_ref() {
        Some(h) => c_string(h.inner.to_json()).into_raw(),
        None => {
            set_error("scenario is null");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `sc` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_scenario_free(sc: *mut CloaksimScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Runs the scenario in memory; no files are written.
///
/// # Safety
/// `sc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_run(sc: *const CloaksimScenario, out: *mut *mut CloaksimResult) -> i32 {
    guard(|| {
        let Some(h) = sc.as_ref() else {
            return fail(CLOAKSIM_ERR_ARGUMENT, "scenario is null");
        };
        if out.is_null() {
            return fail(CLOAKSIM_ERR_ARGUMENT, "out is null");
        }
        match runner::run(&h.inner) {
            Ok(r) => {
                let hash = h.inner.hash();
                let res = CloaksimResult {
                    summary: c_string(r.summary.to_string()),
                    names: r.tables.iter().map(|t| c_string(t.name.clone())).collect(),
                    csv: r.tables.iter().map(|t| c_string(t.to_csv(&h.inner.name, &hash))).collect(),
                };
                *out = Box::into_raw(Box::new(res));
                CLOAKSIM_OK
            }
            Err(e) => run_error(e),
        }
    })
}

/// Summary JSON; owned by the result.
///
/// # Safety
/// `res` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_result_summary(res: *const CloaksimResult) -> *const c_char {
    res.as_ref().map_or(ptr::null(), |r| r.summary.as_ptr())
}

/// # Safety
/// `res` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_result_table_count(res: *const CloaksimResult) -> usize {
    res.as_ref().map_or(0, |r| r.csv.len())
}

/// Name of table `index`; owned by the result. Null when out of range.
///
/// # Safety
/// `res` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_result_table_name(res: *const CloaksimResult, index: usize) -> *const c_char {
    res.as_ref().and_then(|r| r.names.get(index)).map_or(ptr::null(), |s| s.as_ptr())
}

/// CSV text of table `index`; owned by the result. Null when out of range.
///
/// # Safety
/// `res` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_result_table_csv(res: *const CloaksimResult, index: usize) -> *const c_char {
    res.as_ref().and_then(|r| r.csv.get(index)).map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `res` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_result_free(res: *mut CloaksimResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Samples the scenario's cancellation tone at `rate_gsps` and returns CSV
/// text in `out`; release it with [`cloaksim_string_free`].
///
/// # Safety
/// `sc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_export_tone(sc: *const CloaksimScenario, rate_gsps: f64, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let Some(h) = sc.as_ref() else {
            return fail(CLOAKSIM_ERR_ARGUMENT, "scenario is null");
        };
        if out.is_null() {
            return fail(CLOAKSIM_ERR_ARGUMENT, "out is null");
        }
        match runner::export_tone(&h.inner, rate_gsps) {
            Ok(t) => {
                *out = c_string(t.to_csv(&h.inner.name, &h.inner.hash())).into_raw();
                CLOAKSIM_OK
            }
            Err(e) => run_error(e),
        }
    })
}

/// Closed-form cancellation tone for a constant sine cavity drive, in MHz
/// (value/2pi), at `n` times `t_ns` written to `out_mhz`.
///
/// # Safety
/// `t_ns` and `out_mhz` must each point to `n` valid doubles.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_closed_form_tone(
    eps1_mhz: f64,
    omega1_ghz: f64,
    phi1_rad: f64,
    omega_r_ghz: f64,
    kappa_mhz: f64,
    g_mhz: f64,
    t_ns: *const f64,
    n: usize,
    out_mhz: *mut f64,
) -> i32 {
    guard(|| {
        if n > 0 && (t_ns.is_null() || out_mhz.is_null()) {
            return fail(CLOAKSIM_ERR_ARGUMENT, "buffer is null");
        }
        let vals = [eps1_mhz, omega1_ghz, phi1_rad, omega_r_ghz, kappa_mhz, g_mhz];
        if vals.iter().any(|v| !v.is_finite()) || kappa_mhz <= 0.0 {
            return fail(CLOAKSIM_ERR_ARGUMENT, "parameters must be finite with kappa > 0");
        }
        let p = ClosedFormParams {
            eps1: mhz(eps1_mhz),
            omega1: ghz(omega1_ghz),
            phi1: phi1_rad,
            omega_r: ghz(omega_r_ghz),
            kappa: mhz(kappa_mhz),
            g: mhz(g_mhz),
            miscalibration: Miscalibration::default(),
        };
        let tone = closed_form_tone(&p, false);
        if n == 0 {
            return CLOAKSIM_OK;
        }
        let t = std::slice::from_raw_parts(t_ns, n);
        let o = std::slice::from_raw_parts_mut(out_mhz, n);
        for (y, &x) in o.iter_mut().zip(t) {
            *y = cloaksim::units::to_mhz(tone.eval(x));
        }
        CLOAKSIM_OK
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cloaksim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
