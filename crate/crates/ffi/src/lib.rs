//! C ABI over `carnot-heat`.
//!
//! Every fallible call returns a [`CarnotStatus`]; on failure the message is
//! available from [`carnot_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use carnot_heat::barrier;
use carnot_heat::config::RunConfig;
use carnot_heat::solver::{self, ProblemSpec, SolverConfig, Trajectory};
use carnot_heat::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarnotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Precondition = 4,
    Infeasible = 5,
    SingularCoefficient = 6,
    BlowUp = 7,
    MaxStepsExhausted = 8,
    Io = 9,
    OutOfRange = 10,
    Panic = 11,
}

/// Parsed run configuration.
pub struct CarnotConfig(RunConfig);

/// Problem instance together with its solver settings.
pub struct CarnotSpec {
    spec: ProblemSpec,
    solver: SolverConfig,
}

/// Recorded states of one run.
pub struct CarnotTrajectory(Trajectory);

/// Outcome of evolving `scale·u0` and `u0` side by side.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CarnotCompareReport {
    pub max_violation: f64,
    pub violation_time: f64,
    pub tolerance: f64,
    pub sup_v: f64,
    pub ordered: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> CarnotStatus {
    match e {
        Error::InvalidArgument(_) => CarnotStatus::InvalidArgument,
        Error::SingularCoefficient(_) => CarnotStatus::SingularCoefficient,
        Error::NumericalBlowUp { .. } => CarnotStatus::BlowUp,
        Error::MaxStepsExhausted { .. } => CarnotStatus::MaxStepsExhausted,
        Error::Infeasible(_) => CarnotStatus::Infeasible,
        Error::Precondition(_) => CarnotStatus::Precondition,
        Error::Config { .. } => CarnotStatus::Config,
        _ => CarnotStatus::Io,
    }
}

fn fail(status: CarnotStatus, msg: impl Into<String>) -> CarnotStatus {
    set_error(msg);
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), CarnotStatus>) -> CarnotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CarnotStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(CarnotStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: carnot_heat::Result<T>) -> Result<T, CarnotStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, CarnotStatus> {
    p.as_ref().ok_or_else(|| fail(CarnotStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, CarnotStatus> {
    p.as_mut().ok_or_else(|| fail(CarnotStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, CarnotStatus> {
    if p.is_null() {
        return Err(fail(CarnotStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CarnotStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn carnot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn carnot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse configuration text. Relative paths inside resolve against the
/// current directory.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carnot_config_parse(text: *const c_char, out: *mut *mut CarnotConfig) -> CarnotStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let text = c_str(text, "text")?;
        let cfg = lift(RunConfig::parse(text, Path::new(".")))?;
        *out = Box::into_raw(Box::new(CarnotConfig(cfg)));
        Ok(())
    })
}

/// Load a configuration file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carnot_config_from_file(path: *const c_char, out: *mut *mut CarnotConfig) -> CarnotStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = c_str(path, "path")?;
        let cfg = lift(RunConfig::from_file(Path::new(path)))?;
        *out = Box::into_raw(Box::new(CarnotConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from a `carnot_config_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn carnot_config_free(cfg: *mut CarnotConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Build the problem described by `cfg`, with the mesh halved `refine` times
/// and `seed` used by random initial data.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carnot_spec_build(
    cfg: *const CarnotConfig,
    refine: u32,
    seed: u64,
    out: *mut *mut CarnotSpec,
) -> CarnotStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = &deref(cfg, "cfg")?.0;
        let spec = lift(cfg.build_spec(refine, seed))?;
        *out = Box::into_raw(Box::new(CarnotSpec {
            spec,
            solver: cfg.solver.clone(),
        }));
        Ok(())
    })
}

/// # Safety
/// `spec` must come from [`carnot_spec_build`], or be null.
#[no_mangle]
pub unsafe extern "C" fn carnot_spec_free(spec: *mut CarnotSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of grid nodes, i.e. the length of every state vector.
///
/// # Safety
/// `spec` must be a live spec handle or null (yields 0).
#[no_mangle]
pub unsafe extern "C" fn carnot_spec_node_count(spec: *const CarnotSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.spec.grid().len())
}

/// Integrate to the horizon. A blow-up still produces a trajectory; query
/// it with [`carnot_trajectory_blew_up`].
///
/// # Safety
/// `spec` must be a live spec handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carnot_solve(spec: *const CarnotSpec, out: *mut *mut CarnotTrajectory) -> CarnotStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = deref(spec, "spec")?;
        let traj = lift(solver::solve(&s.spec, &s.solver))?;
        *out = Box::into_raw(Box::new(CarnotTrajectory(traj)));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`carnot_solve`], or be null.
#[no_mangle]
pub unsafe extern "C" fn carnot_trajectory_free(traj: *mut CarnotTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded states.
///
/// # Safety
/// `traj` must be a live trajectory handle or null (yields 0).
#[no_mangle]
pub unsafe extern "C" fn carnot_trajectory_len(traj: *const CarnotTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.states.len())
}

/// # Safety
/// `traj` must be a live trajectory handle or null (yields false).
#[no_mangle]
pub unsafe extern "C" fn carnot_trajectory_blew_up(traj: *const CarnotTrajectory) -> bool {
    traj.as_ref().is_some_and(|t| t.0.blew_up())
}

/// Time stamp of recorded state `k`.
///
/// # Safety
/// `traj` must be a live trajectory handle and `time` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carnot_trajectory_time(traj: *const CarnotTrajectory, k: usize, time: *mut f64) -> CarnotStatus {
    guard(|| {
        let out = out_ptr(time, "time")?;
        let t = &deref(traj, "traj")?.0;
        *out = *t
            .times
            .get(k)
            .ok_or_else(|| fail(CarnotStatus::OutOfRange, format!("state {k} of {}", t.times.len())))?;
        Ok(())
    })
}

/// Copy recorded state `k` into `buf`, which must hold `len` values with
/// `len` equal to the node count.
///
/// # Safety
/// `traj` must be a live trajectory handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn carnot_trajectory_state(
    traj: *const CarnotTrajectory,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> CarnotStatus {
    guard(|| {
        let t = &deref(traj, "traj")?.0;
        if buf.is_null() {
            return Err(fail(CarnotStatus::NullPointer, "buf is null"));
        }
        let state = t
            .states
            .get(k)
            .ok_or_else(|| fail(CarnotStatus::OutOfRange, format!("state {k} of {}", t.states.len())))?;
        let v = state.values();
        if len != v.len() {
            return Err(fail(
                CarnotStatus::InvalidArgument,
                format!("buffer holds {len} values, state has {}", v.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(v);
        Ok(())
    })
}

/// Evolve `scale·u0` and `u0` in lockstep and report the largest excess
/// of the first over the second. `scale` must lie in `(0, 1]`.
///
/// # Safety
/// `spec` must be a live spec handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn carnot_compare_scaled(
    spec: *const CarnotSpec,
    scale: f64,
    out: *mut CarnotCompareReport,
) -> CarnotStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = deref(spec, "spec")?;
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(fail(
                CarnotStatus::Precondition,
                format!("scale must lie in (0, 1], got {scale}"),
            ));
        }
        let su = s.spec.with_u0(s.spec.u0.scaled(scale));
        let tr = lift(solver::solve_lockstep(&[&su, &s.spec], &s.solver))?;
        let rep = lift(solver::compare(&s.solver, &tr[0], &tr[1]))?;
        *out = CarnotCompareReport {
            max_violation: rep.max_violation,
            violation_time: rep.violation_time,
            tolerance: rep.tolerance,
            sup_v: rep.sup_v,
            ordered: rep.ordered,
        };
        Ok(())
    })
}

/// Barrier rate `sigma` and level `l` for the given exponents, horizontal
/// dimension `n1`, inner radius `eps` and radius `r_prime`.
///
/// # Safety
/// `sigma` and `l` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn carnot_barrier_params(
    p: f64,
    q: f64,
    beta: f64,
    n1: usize,
    eps: f64,
    r_prime: f64,
    sigma: *mut f64,
    l: *mut f64,
) -> CarnotStatus {
    guard(|| {
        let sigma = out_ptr(sigma, "sigma")?;
        let l = out_ptr(l, "l")?;
        let (s, big_l) = lift(barrier::barrier_params(p, q, beta, n1, eps, r_prime))?;
        *sigma = s;
        *l = big_l;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_round_trip() {
        let mut out = ptr::null_mut();
        let text = CString::new("problem.p = zero\n").unwrap();
        let st = unsafe { carnot_config_parse(text.as_ptr(), &mut out) };
        assert_eq!(st, CarnotStatus::Config);
        assert!(out.is_null());
        let msg = unsafe { CStr::from_ptr(carnot_last_error()) }.to_str().unwrap();
        assert!(msg.contains("problem.p"), "{msg}");
    }

    #[test]
    fn null_arguments_are_reported() {
        let st = unsafe { carnot_config_parse(ptr::null(), ptr::null_mut()) };
        assert_eq!(st, CarnotStatus::NullPointer);
        assert_eq!(unsafe { carnot_trajectory_len(ptr::null()) }, 0);
    }
}
