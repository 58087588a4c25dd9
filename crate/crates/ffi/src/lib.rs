//! C ABI over the ratkryl solvers.
//!
//! Every fallible function returns an [`RkStatus`]; on failure a message is
//! available from [`rk_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ratkryl::linops::{DenseMatrix, RealVector};
use ratkryl::problems::{add_noise, make_problem, smooth_variant, LinearProblem, ProblemName};
use ratkryl::solvers::{cgne, lanczos_kr, rational_cg, tikhonov, AlphaSchedule, SolverTrace, StopReason};
use ratkryl::stopping::StoppingRule;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownProblem = 3,
    BufferTooSmall = 4,
    SolverFailed = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkMethod {
    Cgne = 0,
    LanczosKr = 1,
    RationalCg = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkAlphaKind {
    /// `α_k = 10^{-(k+1)}`.
    PaperDefault = 0,
    /// `α_k = a·q^{s−k}`.
    Geometric = 1,
    /// `values[0..n_values]`.
    Explicit = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkStopReason {
    Discrepancy = 0,
    Budget = 1,
    Breakdown = 2,
    Stagnation = 3,
    OracleBest = 4,
}

/// Shift schedule for the rational steps.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RkAlphas {
    pub kind: RkAlphaKind,
    pub a: f64,
    pub q: f64,
    pub s: i32,
    pub values: *const f64,
    pub n_values: usize,
}

/// Stops at `n_max`, or earlier once `‖Ax − y‖ ≤ tau·delta_abs` when
/// `use_discrepancy` is set.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RkStopping {
    pub n_max: usize,
    pub use_discrepancy: bool,
    pub tau: f64,
    pub delta_abs: f64,
}

/// A test problem: operator, exact solution and exact data.
pub struct RkProblem {
    inner: LinearProblem,
}

/// Iteration history of one solver run.
pub struct RkTrace {
    inner: SolverTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RkStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RkStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            RkStatus::Panic
        }
    }
}

fn invalid(msg: impl ToString) -> Failure {
    Failure(RkStatus::InvalidArgument, msg.to_string())
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a pointer obtained from this library
    unsafe { p.as_ref() }.ok_or_else(|| Failure(RkStatus::NullPointer, format!("{what} is null")))
}

/// Reads `len` doubles, rejecting null unless `len` is zero.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(RkStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, what: &str) -> Result<(), Failure> {
    if dst.is_null() {
        return Err(Failure(RkStatus::NullPointer, format!("{what} is null")));
    }
    if len < src.len() {
        return Err(Failure(RkStatus::BufferTooSmall, format!("{what} holds {len}, need {}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(RkStatus::NullPointer, "output handle is null".to_string()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn schedule(alphas: &RkAlphas) -> Result<AlphaSchedule, Failure> {
    match alphas.kind {
        RkAlphaKind::PaperDefault => Ok(AlphaSchedule::PaperDefault),
        RkAlphaKind::Geometric => AlphaSchedule::geometric(alphas.a, alphas.q, alphas.s).map_err(invalid),
        RkAlphaKind::Explicit => {
            let v = slice(alphas.values, alphas.n_values, "alpha values")?;
            AlphaSchedule::explicit(v.to_vec()).map_err(invalid)
        }
    }
}

fn stopping(stop: &RkStopping) -> Result<StoppingRule, Failure> {
    let budget = StoppingRule::budget(stop.n_max).map_err(invalid)?;
    if !stop.use_discrepancy {
        return Ok(budget);
    }
    let disc = StoppingRule::discrepancy(stop.tau, stop.delta_abs).map_err(invalid)?;
    Ok(StoppingRule::Composite(vec![disc, budget]))
}

/// Data vector: `y` when given, otherwise the problem's exact data.
unsafe fn data(problem: &RkProblem, y: *const f64, y_len: usize) -> Result<RealVector, Failure> {
    if y.is_null() {
        return Ok(problem.inner.y_exact.clone());
    }
    let rows = problem.inner.a.rows();
    if y_len != rows {
        return Err(invalid(format!("data has length {y_len}, operator has {rows} rows")));
    }
    Ok(RealVector::from_column_slice(slice(y, y_len, "y")?))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn rk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds one of the named test problems (`deriv2`, `shaw`, `phillips`,
/// `gravity`) of size `n`.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_make(name: *const c_char, n: usize, out: *mut *mut RkProblem) -> RkStatus {
    guard(|| {
        if name.is_null() {
            return Err(Failure(RkStatus::NullPointer, "name is null".to_string()));
        }
        let name = CStr::from_ptr(name).to_str().map_err(invalid)?;
        let parsed: ProblemName = name.parse().map_err(|e: ratkryl::problems::ProblemError| Failure(RkStatus::UnknownProblem, e.to_string()))?;
        let inner = make_problem(parsed, n).map_err(invalid)?;
        write_handle(out, RkProblem { inner })
    })
}

/// Builds a problem from a row-major `rows × cols` matrix and an exact
/// solution of length `cols`; the data is `A·x_exact`.
///
/// # Safety
/// `a` must hold `rows·cols` doubles and `x_exact` `cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_from_dense(
    rows: usize,
    cols: usize,
    a: *const f64,
    x_exact: *const f64,
    out: *mut *mut RkProblem,
) -> RkStatus {
    guard(|| {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("matrix dimensions overflow"))?;
        let a = DenseMatrix::from_row_slice(rows, cols, slice(a, len, "matrix")?).map_err(invalid)?;
        let x = RealVector::from_column_slice(slice(x_exact, cols, "x_exact")?);
        let inner = LinearProblem::from_parts("dense", a, x).map_err(invalid)?;
        write_handle(out, RkProblem { inner })
    })
}

/// Replaces the exact solution by `AᵀA·x_exact` in a new handle.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_smooth(problem: *const RkProblem, out: *mut *mut RkProblem) -> RkStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        write_handle(out, RkProblem { inner: smooth_variant(&p.inner) })
    })
}

/// Number of rows of the operator, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_rows(problem: *const RkProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.a.rows())
}

/// Number of columns of the operator, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_cols(problem: *const RkProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.a.cols())
}

/// Copies the exact data (`rows` values).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_copy_y(problem: *const RkProblem, buf: *mut f64, len: usize) -> RkStatus {
    guard(|| copy_out(non_null(problem, "problem")?.inner.y_exact.as_slice(), buf, len, "buffer"))
}

/// Copies the exact solution (`cols` values).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_copy_x_exact(problem: *const RkProblem, buf: *mut f64, len: usize) -> RkStatus {
    guard(|| copy_out(non_null(problem, "problem")?.inner.x_exact.as_slice(), buf, len, "buffer"))
}

/// Writes noisy data with `‖y_δ − y‖ = delta_rel·‖y‖` to `y_out` and the
/// absolute noise level to `delta_abs` (may be null). Deterministic in `seed`.
///
/// # Safety
/// `y_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_add_noise(
    problem: *const RkProblem,
    delta_rel: f64,
    seed: u64,
    y_out: *mut f64,
    len: usize,
    delta_abs: *mut f64,
) -> RkStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let sample = add_noise(&p.inner, delta_rel, seed).map_err(invalid)?;
        copy_out(sample.y_delta.as_slice(), y_out, len, "y_out")?;
        if !delta_abs.is_null() {
            *delta_abs = sample.delta_abs;
        }
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rk_problem_free(problem: *mut RkProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs an iterative solver on `y` (the exact data when `y` is null).
/// `alphas` may be null for the default schedule; it is ignored by CGNE.
///
/// # Safety
/// Pointers must be null or valid as described; `y` must hold `y_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_solve(
    problem: *const RkProblem,
    method: RkMethod,
    y: *const f64,
    y_len: usize,
    alphas: *const RkAlphas,
    stop: *const RkStopping,
    out: *mut *mut RkTrace,
) -> RkStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let rule = stopping(non_null(stop, "stop")?)?;
        let sched = match alphas.as_ref() {
            Some(a) => schedule(a)?,
            None => AlphaSchedule::PaperDefault,
        };
        let y = data(p, y, y_len)?;
        let a = &p.inner.a;
        let trace = match method {
            RkMethod::Cgne => cgne(a, &y, &rule),
            RkMethod::LanczosKr => lanczos_kr(a, &y, &sched, &rule),
            RkMethod::RationalCg => rational_cg(a, &y, &sched, &rule),
        }
        .map_err(|e| Failure(RkStatus::SolverFailed, e.to_string()))?;
        write_handle(out, RkTrace { inner: trace })
    })
}

/// Tikhonov solution `(AᵀA + αI)⁻¹Aᵀy` written to `x_out` (`cols` values).
///
/// # Safety
/// `y` must hold `y_len` doubles (or be null); `x_out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_tikhonov(
    problem: *const RkProblem,
    y: *const f64,
    y_len: usize,
    alpha: f64,
    x_out: *mut f64,
    len: usize,
) -> RkStatus {
    guard(|| {
        let p = non_null(problem, "problem")?;
        let y = data(p, y, y_len)?;
        let x = tikhonov(&p.inner.a, &y, alpha).map_err(|e| Failure(RkStatus::SolverFailed, e.to_string()))?;
        copy_out(x.as_slice(), x_out, len, "x_out")
    })
}

/// Number of recorded iterations, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_trace_len(trace: *const RkTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.entries.len())
}

/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_trace_stop_reason(trace: *const RkTrace, out: *mut RkStopReason) -> RkStatus {
    guard(|| {
        let t = non_null(trace, "trace")?;
        if out.is_null() {
            return Err(Failure(RkStatus::NullPointer, "out is null".to_string()));
        }
        *out = match t.inner.stop_reason {
            StopReason::Discrepancy => RkStopReason::Discrepancy,
            StopReason::Budget => RkStopReason::Budget,
            StopReason::Breakdown => RkStopReason::Breakdown,
            StopReason::Stagnation => RkStopReason::Stagnation,
            StopReason::OracleBest => RkStopReason::OracleBest,
        };
        Ok(())
    })
}

/// Iteration index `n` (1-based) of the reported solution, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_trace_selected_n(trace: *const RkTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.selected_index())
}

/// Copies `‖Ax_n − y‖` for every recorded iteration.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_trace_copy_residuals(trace: *const RkTrace, buf: *mut f64, len: usize) -> RkStatus {
    guard(|| copy_out(&non_null(trace, "trace")?.inner.residuals(), buf, len, "buffer"))
}

/// Copies the reported solution (`cols` values).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_trace_copy_x(trace: *const RkTrace, buf: *mut f64, len: usize) -> RkStatus {
    guard(|| copy_out(non_null(trace, "trace")?.inner.selected_x().as_slice(), buf, len, "buffer"))
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rk_trace_free(trace: *mut RkTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
