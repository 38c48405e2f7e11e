//! C ABI over the verification harness.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every fallible call returns an [`MdlabStatus`] and
//! leaves a message for [`mdlab_last_error_message`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use maxwell_dirac_lab::error::LabError;
use maxwell_dirac_lab::field::{ScalarField, VectorField};
use maxwell_dirac_lab::model::GridSpec;
use maxwell_dirac_lab::ops::{curl_h, div_h, StencilOrder};
use maxwell_dirac_lab::verify::{
    convergence_order, emit_report, run_experiment, ExperimentConfig, ExperimentKind, VerificationReport,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Runtime = 5,
    InvalidArgument = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Experiment configuration.
pub struct MdlabConfig {
    inner: ExperimentConfig,
}

/// Result of a run.
pub struct MdlabReport {
    inner: VerificationReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &LabError) -> MdlabStatus {
    match err {
        LabError::Config(_) | LabError::UnknownLaw(_) | LabError::UnknownExperiment(_) => MdlabStatus::Config,
        LabError::Io { .. } | LabError::Snapshot { .. } => MdlabStatus::Io,
        LabError::InvalidGrid(_) | LabError::InvalidParameter(_) | LabError::ShapeMismatch { .. } => {
            MdlabStatus::InvalidArgument
        }
        _ => MdlabStatus::Runtime,
    }
}

struct Failure(MdlabStatus, String);

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MdlabStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MdlabStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MdlabStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MdlabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MdlabStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn config_ref<'a>(p: *const MdlabConfig) -> Result<&'a MdlabConfig, Failure> {
    p.as_ref().ok_or_else(|| null("config"))
}

unsafe fn report_ref<'a>(p: *const MdlabReport) -> Result<&'a MdlabReport, Failure> {
    p.as_ref().ok_or_else(|| null("report"))
}

fn order_of(order: u32) -> Result<StencilOrder, Failure> {
    u8::try_from(order)
        .ok()
        .and_then(|o| StencilOrder::try_from(o).ok())
        .ok_or_else(|| Failure(MdlabStatus::InvalidArgument, format!("stencil order {order} is not 2 or 4")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mdlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Preset configuration for a named experiment.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mdlab_config_preset(name: *const c_char, out: *mut *mut MdlabConfig) -> MdlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind: ExperimentKind = str_arg(name, "name")?.parse()?;
        *out = Box::into_raw(Box::new(MdlabConfig {
            inner: ExperimentConfig::preset(kind),
        }));
        Ok(())
    })
}

/// Configuration parsed from TOML text; absent keys come from the preset.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mdlab_config_from_toml(text: *const c_char, out: *mut *mut MdlabConfig) -> MdlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = ExperimentConfig::from_toml_str(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(MdlabConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn mdlab_config_set_seed(config: *mut MdlabConfig, seed: u64) -> MdlabStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null("config"))?.inner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be freed.
#[no_mangle]
pub unsafe extern "C" fn mdlab_config_set_order(config: *mut MdlabConfig, order: u32) -> MdlabStatus {
    guard(|| {
        let order = order_of(order)?;
        config.as_mut().ok_or_else(|| null("config"))?.inner.order = order;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mdlab_config_free(config: *mut MdlabConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the configured experiment. A report is produced even when checks
/// fail; inspect it with [`mdlab_report_exit_code`].
///
/// # Safety
/// `config` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn mdlab_run(config: *const MdlabConfig, out: *mut *mut MdlabReport) -> MdlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = run_experiment(&config_ref(config)?.inner)?;
        *out = Box::into_raw(Box::new(MdlabReport { inner }));
        Ok(())
    })
}

/// 1 when every check passed, 0 otherwise or for a null report.
///
/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mdlab_report_passed(report: *const MdlabReport) -> i32 {
    report.as_ref().map_or(0, |r| i32::from(r.inner.passed()))
}

/// Process exit code the CLI would return for this report; -1 for null.
///
/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mdlab_report_exit_code(report: *const MdlabReport) -> i32 {
    report.as_ref().map_or(-1, |r| r.inner.exit_code())
}

/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mdlab_report_num_checks(report: *const MdlabReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.checks.len())
}

/// Value, tolerance and verdict of check `index`. Any out pointer may be null.
///
/// # Safety
/// `report` must come from this library; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdlab_report_check(
    report: *const MdlabReport,
    index: usize,
    value: *mut f64,
    tolerance: *mut f64,
    passed: *mut i32,
) -> MdlabStatus {
    guard(|| {
        let r = report_ref(report)?;
        let c = r.inner.checks.get(index).ok_or_else(|| {
            Failure(
                MdlabStatus::InvalidArgument,
                format!("check {index} out of range ({} checks)", r.inner.checks.len()),
            )
        })?;
        if let Some(v) = value.as_mut() {
            *v = c.value;
        }
        if let Some(t) = tolerance.as_mut() {
            *t = c.tolerance;
        }
        if let Some(p) = passed.as_mut() {
            *p = i32::from(c.pass);
        }
        Ok(())
    })
}

/// Copies the record stream (no header line) into `buf` with a trailing
/// NUL. `needed` receives the byte count including the NUL; on
/// `BufferTooSmall` nothing is copied.
///
/// # Safety
/// `buf` must hold `capacity` bytes or be null with `capacity == 0`.
#[no_mangle]
pub unsafe extern "C" fn mdlab_report_records(
    report: *const MdlabReport,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> MdlabStatus {
    guard(|| {
        let stream = report_ref(report)?.inner.record_stream()?;
        let len = stream.len() + 1;
        if let Some(n) = needed.as_mut() {
            *n = len;
        }
        if capacity < len || buf.is_null() {
            return Err(Failure(
                MdlabStatus::BufferTooSmall,
                format!("record stream needs {len} bytes, got {capacity}"),
            ));
        }
        ptr::copy_nonoverlapping(stream.as_ptr(), buf.cast::<u8>(), stream.len());
        *buf.add(stream.len()) = 0;
        Ok(())
    })
}

/// Writes records, invariants, summary and snapshots into `dir`.
///
/// # Safety
/// `report` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mdlab_report_emit(report: *const MdlabReport, dir: *const c_char) -> MdlabStatus {
    guard(|| {
        let r = report_ref(report)?;
        emit_report(&r.inner, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mdlab_report_free(report: *mut MdlabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Least-squares order of `errors` against `spacings`. `pairwise` (may be
/// null) receives `count − 1` entries, NaN where undefined.
///
/// # Safety
/// `spacings` and `errors` must hold `count` values; `pairwise`, if set,
/// `count − 1`.
#[no_mangle]
pub unsafe extern "C" fn mdlab_convergence_order(
    spacings: *const f64,
    errors: *const f64,
    count: usize,
    aggregate: *mut f64,
    pairwise: *mut f64,
) -> MdlabStatus {
    guard(|| {
        if spacings.is_null() || errors.is_null() || aggregate.is_null() {
            return Err(null("spacings, errors or aggregate"));
        }
        let h = std::slice::from_raw_parts(spacings, count);
        let e = std::slice::from_raw_parts(errors, count);
        let norms: Vec<(f64, f64)> = h.iter().copied().zip(e.iter().copied()).collect();
        let order = convergence_order(&norms)?;
        *aggregate = order.aggregate.unwrap_or(f64::NAN);
        if !pairwise.is_null() {
            for (k, p) in order.pairwise.iter().enumerate() {
                *pairwise.add(k) = p.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Periodic lattice of `n[0]×n[1]×n[2]` nodes, C order, z fastest.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MdlabGrid {
    pub n: [usize; 3],
    pub spacing: [f64; 3],
}

fn grid_of(g: &MdlabGrid) -> Result<GridSpec, Failure> {
    Ok(GridSpec::new(g.n, g.spacing)?)
}

unsafe fn vector_in(g: &GridSpec, comps: [*const f64; 3]) -> Result<VectorField, Failure> {
    let len = g.num_points();
    let mut out = Vec::with_capacity(3);
    for p in comps {
        if p.is_null() {
            return Err(null("field component"));
        }
        out.push(ScalarField::from_vec(g.dims(), std::slice::from_raw_parts(p, len).to_vec())?);
    }
    let [x, y, z]: [ScalarField; 3] = out.try_into().expect("three components");
    Ok(VectorField::new(x, y, z)?)
}

/// Discrete divergence of `(fx, fy, fz)` into `out`.
///
/// # Safety
/// All buffers must hold `n[0]·n[1]·n[2]` values.
#[no_mangle]
pub unsafe extern "C" fn mdlab_div(
    grid: MdlabGrid,
    order: u32,
    fx: *const f64,
    fy: *const f64,
    fz: *const f64,
    out: *mut f64,
) -> MdlabStatus {
    guard(|| {
        let g = grid_of(&grid)?;
        let f = vector_in(&g, [fx, fy, fz])?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = div_h(&f, &g, order_of(order)?)?;
        ptr::copy_nonoverlapping(d.as_slice().as_ptr(), out, d.len());
        Ok(())
    })
}

/// Discrete curl of `(fx, fy, fz)` into `(ox, oy, oz)`.
///
/// # Safety
/// All buffers must hold `n[0]·n[1]·n[2]` values.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mdlab_curl(
    grid: MdlabGrid,
    order: u32,
    fx: *const f64,
    fy: *const f64,
    fz: *const f64,
    ox: *mut f64,
    oy: *mut f64,
    oz: *mut f64,
) -> MdlabStatus {
    guard(|| {
        let g = grid_of(&grid)?;
        let f = vector_in(&g, [fx, fy, fz])?;
        if ox.is_null() || oy.is_null() || oz.is_null() {
            return Err(null("out"));
        }
        let c = curl_h(&f, &g, order_of(order)?)?;
        for (comp, dst) in c.comps.iter().zip([ox, oy, oz]) {
            ptr::copy_nonoverlapping(comp.as_slice().as_ptr(), dst, comp.len());
        }
        Ok(())
    })
}
