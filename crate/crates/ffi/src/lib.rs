//! C interface to the closed-form solvers and the parameterised q-function.
//!
//! All functions return a [`TrackqStatus`]; results are written through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`trackq_last_error_message`]. Handles are opaque and must be released
//! with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use trackq::model::{ClassicalSolution, ExploratoryConstants, ModelParams};
use trackq::qlearn::PolicyParams;
use trackq::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoBracket = 3,
    Domain = 4,
    Singular = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Market parameters with their classical solution.
pub struct TrackqModel {
    params: ModelParams,
    classical: ClassicalSolution,
}

/// Exploratory constants at a fixed temperature.
pub struct TrackqExploratory {
    constants: ExploratoryConstants,
    policy: PolicyParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TrackqStatus {
    match e {
        Error::NoBracket { .. } | Error::NoConvergence { .. } => TrackqStatus::NoBracket,
        Error::Domain { .. } => TrackqStatus::Domain,
        Error::Singular { .. } | Error::SingularPsi2 => TrackqStatus::Singular,
        _ => TrackqStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), TrackqStatus>) -> TrackqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrackqStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            TrackqStatus::Internal
        }
    }
}

fn check<T>(r: trackq::Result<T>) -> Result<T, TrackqStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), TrackqStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(TrackqStatus::NullPointer)
    } else {
        Ok(())
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], TrackqStatus> {
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_vector(v: &DVector<f64>, out: *mut f64, len: usize) -> Result<(), TrackqStatus> {
    non_null(out, "out")?;
    if len < v.len() {
        set_error(format!("output buffer holds {len} values, {} needed", v.len()));
        return Err(TrackqStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn trackq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a model with `dim` assets. `sigma` is row-major `dim × dim`.
///
/// # Safety
/// `mu` and `eta` must point to `dim` values, `sigma` to `dim²` values, and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_model_new(
    dim: usize,
    mu: *const f64,
    sigma: *const f64,
    sigma_z: f64,
    kappa: f64,
    eta: *const f64,
    rho: f64,
    out: *mut *mut TrackqModel,
) -> TrackqStatus {
    guard(|| {
        non_null(out, "out")?;
        let mu = DVector::from_row_slice(slice(mu, dim, "mu")?);
        let sigma = DMatrix::from_row_slice(dim, dim, slice(sigma, dim * dim, "sigma")?);
        let eta = DVector::from_row_slice(slice(eta, dim, "eta")?);
        let params = check(ModelParams::new(mu, sigma, sigma_z, kappa, eta, rho))?;
        let classical = check(ClassicalSolution::new(&params))?;
        *out = Box::into_raw(Box::new(TrackqModel { params, classical }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`trackq_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trackq_model_free(model: *mut TrackqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_model_dim(model: *const TrackqModel, out: *mut usize) -> TrackqStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).params.dim();
        Ok(())
    })
}

/// Root `λ ∈ (0, 1)` of the classical characteristic equation.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_lambda(model: *const TrackqModel, out: *mut f64) -> TrackqStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).classical.lambda;
        Ok(())
    })
}

/// Classical value `u(y)`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_classical_value(model: *const TrackqModel, y: f64, out: *mut f64) -> TrackqStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = check((*model).classical.value(y))?;
        Ok(())
    })
}

/// Classical feedback action at `y`, written to `out[0..dim]`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn trackq_classical_policy(model: *const TrackqModel, y: f64, out: *mut f64, len: usize) -> TrackqStatus {
    guard(|| {
        non_null(model, "model")?;
        let a = check((*model).classical.policy(y))?;
        write_vector(&a, out, len)
    })
}

/// Exploratory constants at temperature `gamma`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_exploratory_new(
    model: *const TrackqModel,
    gamma: f64,
    out: *mut *mut TrackqExploratory,
) -> TrackqStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let constants = check(ExploratoryConstants::new(&(*model).params, gamma))?;
        let policy = check(PolicyParams::from_constants(&constants))?;
        *out = Box::into_raw(Box::new(TrackqExploratory { constants, policy }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a handle from [`trackq_exploratory_new`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn trackq_exploratory_free(handle: *mut TrackqExploratory) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Scalar constants `ξ*` and `ψ3*`.
///
/// # Safety
/// `handle` must be live; `xi` and `psi3` writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_exploratory_scalars(
    handle: *const TrackqExploratory,
    xi: *mut f64,
    psi3: *mut f64,
) -> TrackqStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(xi, "xi")?;
        non_null(psi3, "psi3")?;
        *xi = (*handle).constants.xi_star;
        *psi3 = (*handle).constants.psi3_star;
        Ok(())
    })
}

/// `ψ1*` into `out[0..dim]`.
///
/// # Safety
/// `handle` must be live and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn trackq_exploratory_psi1(handle: *const TrackqExploratory, out: *mut f64, len: usize) -> TrackqStatus {
    guard(|| {
        non_null(handle, "handle")?;
        write_vector(&(*handle).constants.psi1_star, out, len)
    })
}

/// `ψ2*` row-major into `out[0..dim²]`.
///
/// # Safety
/// `handle` must be live and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn trackq_exploratory_psi2(handle: *const TrackqExploratory, out: *mut f64, len: usize) -> TrackqStatus {
    guard(|| {
        non_null(handle, "handle")?;
        let m = &(*handle).constants.psi2_star;
        let rows = DVector::from_iterator(m.len(), m.transpose().iter().copied());
        write_vector(&rows, out, len)
    })
}

/// Exploratory value `v(y) = ln(1+y) + ξ*`.
///
/// # Safety
/// `handle` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_exploratory_value(handle: *const TrackqExploratory, y: f64, out: *mut f64) -> TrackqStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        *out = check((*handle).constants.value(y))?;
        Ok(())
    })
}

/// Exact q-function at `(y, a)` with discount `rho`.
///
/// # Safety
/// `handle` must be live, `a` valid for `len` values and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trackq_exact_q(
    handle: *const TrackqExploratory,
    rho: f64,
    y: f64,
    a: *const f64,
    len: usize,
    out: *mut f64,
) -> TrackqStatus {
    guard(|| {
        non_null(handle, "handle")?;
        non_null(out, "out")?;
        let h = &*handle;
        if len != h.policy.dim() {
            set_error(format!("action has {len} entries, expected {}", h.policy.dim()));
            return Err(TrackqStatus::InvalidArgument);
        }
        let a = DVector::from_row_slice(slice(a, len, "a")?);
        *out = check(h.constants.exact_q(rho, y, &a))?;
        Ok(())
    })
}

/// Mean and covariance of the optimal Gaussian policy at `y`; `mean` gets
/// `dim` values and `cov` gets `dim²` row-major values.
///
/// # Safety
/// `handle` must be live; `mean` valid for `mean_len` and `cov` for `cov_len`
/// values.
#[no_mangle]
pub unsafe extern "C" fn trackq_exploratory_policy(
    handle: *const TrackqExploratory,
    y: f64,
    mean: *mut f64,
    mean_len: usize,
    cov: *mut f64,
    cov_len: usize,
) -> TrackqStatus {
    guard(|| {
        non_null(handle, "handle")?;
        let g = check((*handle).policy.policy_from_q(y))?;
        write_vector(&g.mean, mean, mean_len)?;
        let rows = DVector::from_iterator(g.cov.len(), g.cov.transpose().iter().copied());
        write_vector(&rows, cov, cov_len)
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn trackq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
