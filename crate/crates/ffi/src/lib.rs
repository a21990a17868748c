//! C ABI over the `wavegate` core.
//!
//! Objects are opaque handles created by `*_new` and released by the
//! matching `*_free`. Every fallible call returns a [`WgStatus`]; on failure
//! the message is available from [`wg_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use wavegate::spectral::default_grid;
use wavegate::{
    assemble_stiffness, build_pencil, cfl_margin, eig_branches, observability_constant, DispersionTable, Error, LocalMatrices,
    ObservationRegion, PeriodicMesh, QuadraticPencil, Scheme, SchemeParams, StatePair,
};

/// Result codes. Values 2 to 4 coincide with the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WgStatus {
    Ok = 0,
    /// Null pointer or wrong buffer length.
    InvalidArgument = 1,
    ParameterDomain = 2,
    CflViolation = 3,
    Numerical = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

pub struct WgScheme(Scheme);

pub struct WgTable(DispersionTable);

pub struct WgPencil(QuadraticPencil);

/// One dispersion sample of one branch.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WgDispersionSample {
    pub xi: f64,
    pub sigma: f64,
    pub omega: f64,
    pub vg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WgRunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub e_total_initial: f64,
    pub e_total_final: f64,
    pub observed_integral: f64,
    pub max_relative_drift: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WgObservability {
    pub c_t: f64,
    pub mu_min: f64,
    pub deflated_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> WgStatus {
    match e.exit_code() {
        2 => WgStatus::ParameterDomain,
        3 => WgStatus::CflViolation,
        _ => WgStatus::Numerical,
    }
}

struct Fail(WgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(WgStatus::InvalidArgument, msg.to_string())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> WgStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WgStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            WgStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(invalid("null input buffer"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid("null output pointer"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid("null handle"))
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn wg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wg_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => c"",
    };
    V.as_ptr()
}

/// Writes the local blocks `M, K0, K-1, K+1` row-major; each buffer holds `(k+1)^2` entries.
///
/// # Safety
/// Each output pointer must address `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wg_assemble(
    k: usize,
    h: f64,
    m: *mut f64,
    k0: *mut f64,
    km1: *mut f64,
    kp1: *mut f64,
    len: usize,
) -> WgStatus {
    guard(|| {
        let l = assemble_stiffness(k, h)?;
        let n = l.dim();
        if len != n * n {
            return Err(invalid(&format!("buffer length {len}, need {}", n * n)));
        }
        for (dst, src) in [(m, &l.m), (k0, &l.k0), (km1, &l.km1), (kp1, &l.kp1)] {
            if dst.is_null() {
                return Err(invalid("null output buffer"));
            }
            let d = std::slice::from_raw_parts_mut(dst, len);
            for i in 0..n {
                for j in 0..n {
                    d[i * n + j] = src[(i, j)];
                }
            }
        }
        Ok(())
    })
}

/// Largest stable Courant number for degree `k`.
///
/// # Safety
/// `lambda_max` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wg_cfl_lambda_max(k: usize, lambda_max: *mut f64) -> WgStatus {
    guard(|| {
        *out(lambda_max)? = cfl_margin(&assemble_stiffness(k, 1.0)?, 1.0, 256)?.lambda_max;
        Ok(())
    })
}

/// Leapfrog scheme on the periodic mesh `[x_lo, x_hi)` with cell size `h`.
///
/// # Safety
/// `scheme` must be a valid pointer; on success it receives a handle owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn wg_scheme_new(
    k: usize,
    h: f64,
    lambda: f64,
    x_lo: f64,
    x_hi: f64,
    scheme: *mut *mut WgScheme,
) -> WgStatus {
    guard(|| {
        let slot = out(scheme)?;
        *slot = ptr::null_mut();
        let mesh = PeriodicMesh::new(x_lo, x_hi, h)?;
        let s = Scheme::new(SchemeParams::new(k, h, lambda)?, mesh)?;
        *slot = Box::into_raw(Box::new(WgScheme(s)));
        Ok(())
    })
}

/// # Safety
/// `scheme` must come from [`wg_scheme_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wg_scheme_free(scheme: *mut WgScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// Number of doubles in one time level, `J (k+1)`. Zero for a null handle.
///
/// # Safety
/// `scheme` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wg_scheme_state_len(scheme: *const WgScheme) -> usize {
    scheme.as_ref().map_or(0, |s| s.0.state_len())
}

/// Number of cells. Zero for a null handle.
///
/// # Safety
/// `scheme` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wg_scheme_cells(scheme: *const WgScheme) -> usize {
    scheme.as_ref().map_or(0, |s| s.0.mesh.cells)
}

/// Time step. NaN for a null handle.
///
/// # Safety
/// `scheme` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wg_scheme_dt(scheme: *const WgScheme) -> f64 {
    scheme.as_ref().map_or(f64::NAN, |s| s.0.dt())
}

unsafe fn state(s: &Scheme, un: *const f64, unp1: *const f64, len: usize) -> Result<StatePair, Fail> {
    if len != s.state_len() {
        return Err(invalid(&format!("state length {len}, need {}", s.state_len())));
    }
    let a = DVector::from_column_slice(slice(un, len)?);
    let b = DVector::from_column_slice(slice(unp1, len)?);
    Ok(StatePair::new(a, b, s.params)?)
}

/// Total energy and energy observed outside `(a, b)` of the level pair.
///
/// # Safety
/// `un` and `unp1` must address `len` doubles; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wg_scheme_energy(
    scheme: *const WgScheme,
    un: *const f64,
    unp1: *const f64,
    len: usize,
    a: f64,
    b: f64,
    e_total: *mut f64,
    e_obs: *mut f64,
) -> WgStatus {
    guard(|| {
        let s = &handle(scheme)?.0;
        let st = state(s, un, unp1, len)?;
        let region = ObservationRegion::new(a, b)?;
        region.validate_in(&s.mesh)?;
        *out(e_total)? = s.energy(&st, None);
        *out(e_obs)? = s.energy(&st, Some(&region));
        Ok(())
    })
}

/// Advances the level pair to time `t_final` and overwrites `un`, `unp1` with the final pair.
///
/// # Safety
/// `un` and `unp1` must address `len` writable doubles; `summary` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wg_scheme_run(
    scheme: *const WgScheme,
    un: *mut f64,
    unp1: *mut f64,
    len: usize,
    t_final: f64,
    a: f64,
    b: f64,
    summary: *mut WgRunSummary,
) -> WgStatus {
    guard(|| {
        let s = &handle(scheme)?.0;
        let summary = out(summary)?;
        let st = state(s, un, unp1, len)?;
        let region = ObservationRegion::new(a, b)?;
        region.validate_in(&s.mesh)?;
        let run = s.run(&st, t_final, &region)?;
        std::slice::from_raw_parts_mut(un, len).copy_from_slice(run.final_state.un.as_slice());
        std::slice::from_raw_parts_mut(unp1, len).copy_from_slice(run.final_state.unp1.as_slice());
        *summary = WgRunSummary {
            steps: run.steps,
            final_time: run.final_time,
            e_total_initial: run.records[0].e_total,
            e_total_final: s.energy(&run.final_state, None),
            observed_integral: run.observed_integral,
            max_relative_drift: run.energy_drift(),
        };
        Ok(())
    })
}

/// Dispersion branches on the default wavenumber grid of `[-pi/h, pi/h]`.
///
/// # Safety
/// `table` must be a valid pointer; on success it receives a handle owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn wg_dispersion_new(k: usize, h: f64, lambda: f64, table: *mut *mut WgTable) -> WgStatus {
    guard(|| {
        let slot = out(table)?;
        *slot = ptr::null_mut();
        let l = LocalMatrices::for_params(&SchemeParams::new(k, h, lambda)?)?;
        let margin = cfl_margin(&l, lambda, 256)?;
        if !margin.is_stable() {
            return Err(Error::CflViolation { ratio: margin.max_ratio, lambda_max: margin.lambda_max }.into());
        }
        let t = eig_branches(&l, lambda, &default_grid(h))?;
        *slot = Box::into_raw(Box::new(WgTable(t)));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`wg_dispersion_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wg_table_free(table: *mut WgTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of wavenumber samples. Zero for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wg_table_len(table: *const WgTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.xis.len())
}

/// Number of branches, `k + 1`. Zero for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wg_table_branches(table: *const WgTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.branch_count())
}

/// Index of the physical branch.
///
/// # Safety
/// `table` must be a live handle and `index` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wg_table_physical_branch(table: *const WgTable, index: *mut usize) -> WgStatus {
    guard(|| {
        *out(index)? = handle(table)?.0.physical_index;
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle and `sample` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wg_table_sample(
    table: *const WgTable,
    branch: usize,
    i: usize,
    sample: *mut WgDispersionSample,
) -> WgStatus {
    guard(|| {
        let t = &handle(table)?.0;
        let sample = out(sample)?;
        if branch >= t.branch_count() || i >= t.xis.len() {
            return Err(invalid("sample index out of range"));
        }
        *sample = WgDispersionSample {
            xi: t.xis[i],
            sigma: t.sigma[branch][i],
            omega: t.omega[branch][i],
            vg: t.vg[branch][i],
        };
        Ok(())
    })
}

/// Gramian pencil of the observation outside `(a, b)` over `[0, t_final]`.
///
/// # Safety
/// `scheme` must be a live handle and `pencil` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wg_pencil_new(
    scheme: *const WgScheme,
    a: f64,
    b: f64,
    t_final: f64,
    pencil: *mut *mut WgPencil,
) -> WgStatus {
    guard(|| {
        let s = &handle(scheme)?.0;
        let slot = out(pencil)?;
        *slot = ptr::null_mut();
        let p = build_pencil(s, &ObservationRegion::new(a, b)?, t_final)?;
        *slot = Box::into_raw(Box::new(WgPencil(p)));
        Ok(())
    })
}

/// # Safety
/// `pencil` must come from [`wg_pencil_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wg_pencil_free(pencil: *mut WgPencil) {
    if !pencil.is_null() {
        drop(Box::from_raw(pencil));
    }
}

/// Pencil dimension `2 J (k+1)`. Zero for a null handle.
///
/// # Safety
/// `pencil` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wg_pencil_dim(pencil: *const WgPencil) -> usize {
    pencil.as_ref().map_or(0, |p| p.0.dim)
}

/// Copies the energy form `A` or the observation form `G` (column-major, `dim^2` entries).
///
/// # Safety
/// `a` and `g` must each be null or address `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wg_pencil_forms(
    pencil: *const WgPencil,
    a: *mut f64,
    g: *mut f64,
    len: usize,
) -> WgStatus {
    guard(|| {
        let p = &handle(pencil)?.0;
        if len != p.dim * p.dim {
            return Err(invalid(&format!("buffer length {len}, need {}", p.dim * p.dim)));
        }
        for (dst, src) in [(a, &p.a), (g, &p.g)] {
            if !dst.is_null() {
                std::slice::from_raw_parts_mut(dst, len).copy_from_slice(DMatrix::as_slice(src));
            }
        }
        Ok(())
    })
}

/// Observability constant with deflation tolerance `tol` relative to the largest energy eigenvalue.
///
/// # Safety
/// `pencil` must be a live handle and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wg_pencil_observability(
    pencil: *const WgPencil,
    tol: f64,
    result: *mut WgObservability,
) -> WgStatus {
    guard(|| {
        let p = &handle(pencil)?.0;
        let result = out(result)?;
        let o = observability_constant(p, tol)?;
        *result = WgObservability { c_t: o.c_t, mu_min: o.mu_min, deflated_dim: o.deflated_dim };
        Ok(())
    })
}
