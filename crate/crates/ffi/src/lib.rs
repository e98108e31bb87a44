//! C ABI over `plap-core`: opaque handles, integer status codes and a
//! thread-local last-error message. The matching header is
//! `include/plap.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use plap_core::cli::{self, Experiment, RunConfig};
use plap_core::domain::{default_eps, Grid, MediumParams, ScalarField};
use plap_core::elliptic::{self, EllipticConfig};
use plap_core::exact::{BarenblattParams, Quadrature};
use plap_core::experiments::Artifacts;
use plap_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotConverged = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// Barenblatt source solution.
pub struct PlapBarenblatt(BarenblattParams);

/// Nodal field on a box grid.
pub struct PlapField(ScalarField);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PlapStatus {
    match e {
        Error::InvalidGrid(_) | Error::InvalidParameter(_) | Error::Partition(_) | Error::Config(_) => {
            PlapStatus::InvalidArgument
        }
        Error::NotConverged { .. } | Error::TrivialSolution { .. } => PlapStatus::NotConverged,
        Error::NonFinite { .. } | Error::LinearBreakdown(_) => PlapStatus::Numerical,
        Error::Io(_) | Error::Json(_) => PlapStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (PlapStatus, String)>) -> PlapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PlapStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside plap");
            PlapStatus::Panic
        }
    }
}

fn core<T>(r: plap_core::Result<T>) -> Result<T, (PlapStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (PlapStatus, String) {
    (PlapStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (PlapStatus, String) {
    (PlapStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (PlapStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PlapStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// Message for the last failing call on this thread; empty after success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn plap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plap_barenblatt_new(n: usize, p: f64, c: f64, out: *mut *mut PlapBarenblatt) -> PlapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let b = core(BarenblattParams::new(n, p, c))?;
        *out = Box::into_raw(Box::new(PlapBarenblatt(b)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from `plap_barenblatt_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn plap_barenblatt_free(h: *mut PlapBarenblatt) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `x` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plap_barenblatt_eval(
    h: *const PlapBarenblatt,
    x: *const f64,
    len: usize,
    t: f64,
    out: *mut f64,
) -> PlapStatus {
    guard(|| {
        let b = h.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = slice(x, len, "x")?;
        *out = core(b.0.eval(x, t))?;
        Ok(())
    })
}

/// Total mass, computed by adaptive quadrature with default settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plap_barenblatt_mass(h: *const PlapBarenblatt, t: f64, out: *mut f64) -> PlapStatus {
    guard(|| {
        let b = h.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = core(b.0.mass(t, &Quadrature::default()))?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plap_barenblatt_front_radius(h: *const PlapBarenblatt, t: f64, out: *mut f64) -> PlapStatus {
    guard(|| {
        let b = h.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if t.is_nan() || t <= 0.0 {
            return Err(invalid("t must be > 0"));
        }
        *out = b.0.front_radius(t);
        Ok(())
    })
}

/// Giant profile on the box `[lo, hi]` with `cells` nodes per axis.
/// `eps <= 0` selects the default regularisation.
///
/// # Safety
/// `lo`, `hi` and `cells` must hold `dim` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn plap_giant_solve(
    dim: usize,
    lo: *const f64,
    hi: *const f64,
    cells: *const usize,
    p: f64,
    eps: f64,
    out: *mut *mut PlapField,
) -> PlapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (lo, hi, cells) = (slice(lo, dim, "lo")?, slice(hi, dim, "hi")?, slice(cells, dim, "cells")?);
        let grid = Arc::new(core(Grid::build(dim, lo, hi, cells))?);
        let eps = if eps > 0.0 { eps } else { default_eps(1.0, grid.min_h()) };
        let params = core(MediumParams::new(p, eps, dim))?;
        let u = core(elliptic::solve_giant(&grid, &params, &EllipticConfig::default()))?;
        *out = Box::into_raw(Box::new(PlapField(u)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn plap_field_free(h: *mut PlapField) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live field handle.
#[no_mangle]
pub unsafe extern "C" fn plap_field_len(h: *const PlapField) -> usize {
    h.as_ref().map_or(0, |f| f.0.values().len())
}

/// Copies the nodal values (lexicographic, first axis fastest) into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn plap_field_values(h: *const PlapField, buf: *mut f64, len: usize) -> PlapStatus {
    guard(|| {
        let f = h.as_ref().ok_or_else(|| null("handle"))?;
        if len < f.0.values().len() {
            return Err(invalid(format!("buffer holds {len} values, field has {}", f.0.values().len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(f.0.values().as_ptr(), buf, f.0.values().len());
        Ok(())
    })
}

/// Runs an experiment by name with TOML config text (may be null or empty)
/// and returns the report as JSON through `out_json`, to be released with
/// `plap_string_free`. `passed` (nullable) receives 1 when every verdict
/// passes. No artifacts are written.
///
/// # Safety
/// String arguments must be NUL-terminated; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn plap_run_experiment(
    name: *const c_char,
    config_toml: *const c_char,
    out_json: *mut *mut c_char,
    passed: *mut i32,
) -> PlapStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let name = text(name, "name")?;
        let experiment = Experiment::from_name(name).ok_or_else(|| invalid(format!("unknown experiment '{name}'")))?;
        let toml = if config_toml.is_null() { "" } else { text(config_toml, "config")? };
        let cfg = core(RunConfig::parse(toml, &[], experiment))?;
        let report = core(cli::run(&cfg, experiment, &Artifacts::none()))?;
        let json = serde_json::to_string(&report).map_err(|e| (PlapStatus::Io, e.to_string()))?;
        if !passed.is_null() {
            *passed = i32::from(report.passed());
        }
        *out_json = CString::new(json).map_err(|e| invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn plap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
