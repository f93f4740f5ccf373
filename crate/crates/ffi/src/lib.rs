//! C ABI over `refcond`.
//!
//! Objects are opaque handles created by `rc_*_new` / `rc_problem_from_toml`
//! and released with the matching `rc_*_free`. Every function returns an
//! [`RcStatus`]; on failure a message is available from
//! [`rc_last_error_message`] on the same thread. Matrices cross the boundary
//! as row-major `double` buffers. Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use refcond::condensation::{unweighted_map, weighted_map, CondensationMap};
use refcond::config::ProblemConfig;
use refcond::controllers::{Condensation, ControllerKind, MpcController};
use refcond::experiments::simulate_closed_loop;
use refcond::lq_batch::{build_batch_operators, tracking_gains, LtiSystem, TrackingGains, TrackingWeights};
use refcond::nalgebra::{DMatrix, DVector};
use refcond::qp::InputBounds;
use refcond::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Config = 4,
    Numerical = 5,
    Infeasible = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcControllerKind {
    NoPreview = 0,
    AverageRef = 1,
    RefCond = 2,
    Preview = 3,
}

/// A tracking problem: model, weights, horizon and input bounds.
pub struct RcProblem {
    config: ProblemConfig,
    gains: TrackingGains,
}

/// A condensation map `S` (or `S_W`) for one problem.
pub struct RcCondenser {
    map: CondensationMap,
}

/// A receding-horizon controller that keeps its warm start between steps.
pub struct RcController {
    inner: MpcController,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> RcStatus {
    match err {
        Error::Dimension { .. } => RcStatus::Dimension,
        Error::InvalidArgument(_) | Error::NotPositiveSemidefinite { .. } => RcStatus::InvalidArgument,
        Error::Config { .. } => RcStatus::Config,
        Error::Io { .. } => RcStatus::Io,
        Error::Infeasible { .. } => RcStatus::Infeasible,
        _ => RcStatus::Numerical,
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), RcStatus>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RcStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RcStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, RcStatus>;
}

impl<T> OrStatus<T> for refcond::Result<T> {
    fn or_status(self) -> Result<T, RcStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn fail<T>(status: RcStatus, msg: impl Into<String>) -> Result<T, RcStatus> {
    set_error(msg);
    Err(status)
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, RcStatus> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(RcStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, RcStatus> {
    match p.as_mut() {
        Some(r) => Ok(r),
        None => fail(RcStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], RcStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(RcStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn input(p: *const f64, len: usize, expected: usize, what: &str) -> Result<DVector<f64>, RcStatus> {
    if len != expected {
        return fail(RcStatus::Dimension, format!("{what}: expected {expected} values, got {len}"));
    }
    Ok(DVector::from_column_slice(slice(p, len, what)?))
}

unsafe fn write_out(dst: *mut f64, capacity: usize, src: impl ExactSizeIterator<Item = f64>, what: &str) -> Result<(), RcStatus> {
    if dst.is_null() {
        return fail(RcStatus::NullPointer, format!("{what} is null"));
    }
    if capacity < src.len() {
        return fail(
            RcStatus::BufferTooSmall,
            format!("{what}: need {} values, buffer holds {capacity}", src.len()),
        );
    }
    for (i, v) in src.enumerate() {
        *dst.add(i) = v;
    }
    Ok(())
}

unsafe fn write_matrix(dst: *mut f64, capacity: usize, m: &DMatrix<f64>, what: &str) -> Result<(), RcStatus> {
    let row_major = m.transpose();
    write_out(dst, capacity, row_major.iter().copied(), what)
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, RcStatus> {
    Ok(DMatrix::from_row_slice(rows, cols, slice(p, rows * cols, what)?))
}

fn boxed<T>(out: *mut *mut T, value: T) -> Result<(), RcStatus> {
    if out.is_null() {
        return fail(RcStatus::NullPointer, "output handle pointer is null");
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn problem_from_config(config: ProblemConfig) -> Result<RcProblem, RcStatus> {
    let ops = build_batch_operators(&config.sys, &config.weights, config.horizon).or_status()?;
    let gains = tracking_gains(&ops).or_status()?;
    Ok(RcProblem { config, gains })
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rc_last_error_message(buf: *mut c_char, len: usize) -> usize {
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

/// Parses a TOML problem description.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_from_toml(toml: *const c_char, out: *mut *mut RcProblem) -> RcStatus {
    guard(|| {
        if toml.is_null() {
            return fail(RcStatus::NullPointer, "toml is null");
        }
        let text = match CStr::from_ptr(toml).to_str() {
            Ok(t) => t,
            Err(_) => return fail(RcStatus::InvalidArgument, "toml is not valid UTF-8"),
        };
        let config = ProblemConfig::from_toml_str(text).or_status()?;
        boxed(out, problem_from_config(config)?)
    })
}

/// Builds a problem from row-major matrices `A (nx x nx)`, `B (nx x nu)`,
/// `C (nr x nx)`, `Q (nr x nr)`, `R (nu x nu)` and per-input bounds (which may
/// be infinite; pass null for unbounded).
///
/// # Safety
/// Every non-null pointer must reference the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_new(
    nx: usize,
    nu: usize,
    nr: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    ts: f64,
    q: *const f64,
    r: *const f64,
    horizon: usize,
    u_min: *const f64,
    u_max: *const f64,
    out: *mut *mut RcProblem,
) -> RcStatus {
    guard(|| {
        if nx == 0 || nu == 0 || nr == 0 || horizon == 0 {
            return fail(RcStatus::InvalidArgument, "dimensions and horizon must be positive");
        }
        let sys = LtiSystem::new(matrix(a, nx, nx, "A")?, matrix(b, nx, nu, "B")?, matrix(c, nr, nx, "C")?, ts).or_status()?;
        let weights = TrackingWeights::new(matrix(q, nr, nr, "Q")?, matrix(r, nu, nu, "R")?).or_status()?;
        let lb = if u_min.is_null() {
            DVector::from_element(nu, f64::NEG_INFINITY)
        } else {
            DVector::from_column_slice(slice(u_min, nu, "u_min")?)
        };
        let ub = if u_max.is_null() {
            DVector::from_element(nu, f64::INFINITY)
        } else {
            DVector::from_column_slice(slice(u_max, nu, "u_max")?)
        };
        if lb.iter().zip(ub.iter()).any(|(l, u)| !(l <= u)) {
            return fail(RcStatus::InvalidArgument, "u_min must not exceed u_max");
        }
        let config = ProblemConfig {
            x0: DVector::zeros(nx),
            sys,
            weights,
            horizon,
            input_bounds: InputBounds { lb, ub },
            state_constraints: None,
            signal: None,
            kind: ControllerKind::ref_cond(refcond::controllers::DEFAULT_RHO),
            rho: refcond::controllers::DEFAULT_RHO,
            t_final: None,
            seed: 0,
        };
        boxed(out, problem_from_config(config)?)
    })
}

/// # Safety
/// `problem` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_free(problem: *mut RcProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_dims(
    problem: *const RcProblem,
    nx: *mut usize,
    nu: *mut usize,
    nr: *mut usize,
    horizon: *mut usize,
) -> RcStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let g = &p.gains;
        for (dst, v) in [(nx, g.nx), (nu, g.nu), (nr, g.nr), (horizon, g.horizon)] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Writes `Fx` (`N nu x nx`) and `Fr` (`N nu x N nr`) row-major; either
/// output may be null to skip it.
///
/// # Safety
/// `problem` must be a live handle; non-null buffers must hold the given lengths.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_gains(
    problem: *const RcProblem,
    fx: *mut f64,
    fx_len: usize,
    fr: *mut f64,
    fr_len: usize,
) -> RcStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        if !fx.is_null() {
            write_matrix(fx, fx_len, &p.gains.fx, "fx")?;
        }
        if !fr.is_null() {
            write_matrix(fr, fr_len, &p.gains.fr, "fr")?;
        }
        Ok(())
    })
}

/// Closed-loop ISE of `kind` on the problem's configured reference signal.
///
/// # Safety
/// `problem` must be a live handle; `ise` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_simulate_ise(
    problem: *const RcProblem,
    kind: RcControllerKind,
    rho: f64,
    t_final: f64,
    ise: *mut f64,
) -> RcStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let sim = p.config.sim_config(controller_kind(kind, rho)?, t_final).or_status()?;
        let res = simulate_closed_loop(&sim).or_status()?;
        write_out(ise, 1, std::iter::once(res.ise), "ise")
    })
}

fn controller_kind(kind: RcControllerKind, rho: f64) -> Result<ControllerKind, RcStatus> {
    Ok(match kind {
        RcControllerKind::NoPreview => ControllerKind::NoPreview,
        RcControllerKind::AverageRef => ControllerKind::AverageRef,
        RcControllerKind::Preview => ControllerKind::FullPreview,
        RcControllerKind::RefCond if rho > 0.0 && rho.is_finite() => ControllerKind::ref_cond(rho),
        RcControllerKind::RefCond if rho == 0.0 => ControllerKind::RefCond(Condensation::Unweighted),
        RcControllerKind::RefCond => return fail(RcStatus::InvalidArgument, format!("rho must be positive or zero, got {rho}")),
    })
}

/// Builds `S_W` with first-block weight `rho`, or the unweighted `S` when
/// `rho == 0`.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_condenser_new(problem: *const RcProblem, rho: f64, out: *mut *mut RcCondenser) -> RcStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let map = if rho == 0.0 {
            unweighted_map(&p.gains)
        } else {
            weighted_map(&p.gains, rho)
        }
        .or_status()?;
        boxed(out, RcCondenser { map })
    })
}

/// # Safety
/// `condenser` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_condenser_free(condenser: *mut RcCondenser) {
    if !condenser.is_null() {
        drop(Box::from_raw(condenser));
    }
}

/// Writes `S` (`nr x N nr`) row-major and reports whether `Fr I` had full
/// column rank (1) or not (0).
///
/// # Safety
/// `condenser` must be a live handle; `s` must hold `len` doubles; `rank_ok` may be null.
#[no_mangle]
pub unsafe extern "C" fn rc_condenser_matrix(
    condenser: *const RcCondenser,
    s: *mut f64,
    len: usize,
    rank_ok: *mut c_int,
) -> RcStatus {
    guard(|| {
        let c = handle(condenser, "condenser")?;
        write_matrix(s, len, &c.map.s, "s")?;
        if !rank_ok.is_null() {
            *rank_ok = c.map.rank_ok as c_int;
        }
        Ok(())
    })
}

/// `setpoint = S window`.
///
/// # Safety
/// `window` must hold `window_len` doubles and `setpoint` `setpoint_len`.
#[no_mangle]
pub unsafe extern "C" fn rc_condenser_apply(
    condenser: *const RcCondenser,
    window: *const f64,
    window_len: usize,
    setpoint: *mut f64,
    setpoint_len: usize,
) -> RcStatus {
    guard(|| {
        let c = handle(condenser, "condenser")?;
        let w = input(window, window_len, c.map.s.ncols(), "window")?;
        let sp = &c.map.s * w;
        write_out(setpoint, setpoint_len, sp.iter().copied(), "setpoint")
    })
}

/// Controller using the problem's model, weights, horizon and input bounds.
/// `rho` selects the condensation for `RefCond` (0 for unweighted).
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_controller_new(
    problem: *const RcProblem,
    kind: RcControllerKind,
    rho: f64,
    out: *mut *mut RcController,
) -> RcStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let cfg = &p.config;
        let inner = MpcController::new(
            cfg.sys.clone(),
            cfg.weights.clone(),
            cfg.horizon,
            controller_kind(kind, rho)?,
            cfg.input_bounds.clone(),
            cfg.state_constraints.clone(),
        )
        .or_status()?;
        boxed(out, RcController { inner })
    })
}

/// # Safety
/// `controller` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_controller_free(controller: *mut RcController) {
    if !controller.is_null() {
        drop(Box::from_raw(controller));
    }
}

/// Clears the warm start.
///
/// # Safety
/// `controller` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_controller_reset(controller: *mut RcController) -> RcStatus {
    guard(|| {
        handle_mut(controller, "controller")?.inner.reset();
        Ok(())
    })
}

/// Solves the MPC problem at state `x` given the current reference sample
/// and the preview window `(r_{k+1}, ..., r_{k+N})`, and writes `u_0`.
///
/// # Safety
/// Each buffer must hold its stated length.
#[no_mangle]
pub unsafe extern "C" fn rc_controller_step(
    controller: *mut RcController,
    x: *const f64,
    x_len: usize,
    current: *const f64,
    current_len: usize,
    window: *const f64,
    window_len: usize,
    u: *mut f64,
    u_len: usize,
) -> RcStatus {
    guard(|| {
        let c = handle_mut(controller, "controller")?;
        let sys = c.inner.system();
        let (nx, nr, nu, n) = (sys.nx(), sys.nr(), sys.nu(), c.inner.horizon());
        let x = input(x, x_len, nx, "x")?;
        let current = input(current, current_len, nr, "current")?;
        let window = input(window, window_len, n * nr, "window")?;
        let (u0, _) = c.inner.control_action(&x, &current, &window).or_status()?;
        debug_assert_eq!(u0.len(), nu);
        write_out(u, u_len, u0.iter().copied(), "u")
    })
}
