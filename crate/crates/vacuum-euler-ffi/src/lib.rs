//! C ABI over the moving-domain gas simulator. Handles are opaque boxes,
//! every entry point returns a status code, panics never cross the
//! boundary, and the most recent error message is retrievable per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vacuum_euler::diff::distance_functionals;
use vacuum_euler::energy::make_report;
use vacuum_euler::oracle::AffineOrbit;
use vacuum_euler::state::{FluidState, Grid, Params};
use vacuum_euler::stepper::{run, RegridSpec, StepConfig, Trajectory};
use vacuum_euler::SimError;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    FoldedFlow = 3,
    ContinuationViolation = 4,
    Unsupported = 5,
    Panic = 6,
}

/// Which per-node array to copy out of a state.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VeField {
    Nodes = 0,
    Q = 1,
    V = 2,
    Sigma = 3,
}

/// Scalar diagnostics of one state (second-order energy at level 1).
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct VeEnergyReport {
    pub e_phys: f64,
    pub entropy_mass: f64,
    pub e2_high: f64,
    pub e2_low: f64,
    pub a_star: f64,
    pub b_control: f64,
    pub c_min: f64,
}

/// Opaque snapshot handle.
pub struct VeState {
    inner: FluidState,
}

/// Opaque recorded-run handle.
pub struct VeTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn fail(e: &SimError) -> VeStatus {
    set_error(&e.to_string());
    match e {
        SimError::FoldedFlow { .. } => VeStatus::FoldedFlow,
        SimError::ContinuationViolation { .. } => VeStatus::ContinuationViolation,
        SimError::Unsupported(_) => VeStatus::Unsupported,
        _ => VeStatus::InvalidArgument,
    }
}

fn guarded(body: impl FnOnce() -> VeStatus) -> VeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            VeStatus::Panic
        }
    }
}

/// Copies the most recent error message for this thread into `buf` as a
/// NUL-terminated string, truncating to `cap` bytes. Returns the full
/// message length in bytes (excluding the terminator), which may exceed
/// `cap`; call with a null `buf` to query the needed size.
///
/// # Safety
/// `buf` must be null or valid for writes of `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn ve_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

unsafe fn emit_state(out: *mut *mut VeState, state: FluidState) -> VeStatus {
    *out = Box::into_raw(Box::new(VeState { inner: state }));
    VeStatus::Ok
}

/// Builds the parabolic profile state `q = b (r^2 - x^2)`, `v = a x`,
/// `sigma = sigma_bar` on a fresh uniform grid of `node_count` nodes.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives an owned handle
/// that must be released with `ve_state_free`.
#[no_mangle]
pub unsafe extern "C" fn ve_state_affine(
    a: f64,
    b: f64,
    r: f64,
    sigma_bar: f64,
    beta: f64,
    node_count: usize,
    out: *mut *mut VeState,
) -> VeStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out must not be null");
            return VeStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let params = match Params::new(beta) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let orbit = AffineOrbit { a, b, r, sigma_bar };
        match orbit.state(params, node_count) {
            Ok(s) => emit_state(out, s),
            Err(e) => fail(&e),
        }
    })
}

/// Builds a state from caller-provided arrays of length `len`. `nodes`
/// must be strictly increasing, `q` nonnegative with zero endpoints, and
/// `sigma` strictly positive.
///
/// # Safety
/// `nodes`, `q`, `v`, `sigma` must be valid for reads of `len` doubles;
/// `out` must be valid; the returned handle must be released with
/// `ve_state_free`.
#[no_mangle]
pub unsafe extern "C" fn ve_state_from_arrays(
    nodes: *const f64,
    q: *const f64,
    v: *const f64,
    sigma: *const f64,
    len: usize,
    beta: f64,
    out: *mut *mut VeState,
) -> VeStatus {
    guarded(|| {
        if out.is_null() || nodes.is_null() || q.is_null() || v.is_null() || sigma.is_null() {
            set_error("array and out pointers must not be null");
            return VeStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let params = match Params::new(beta) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let take = |p: *const f64| std::slice::from_raw_parts(p, len).to_vec();
        let grid = match Grid::new(take(nodes)) {
            Ok(g) => g,
            Err(e) => return fail(&e),
        };
        match FluidState::new(grid, take(q), take(v), take(sigma), params) {
            Ok(s) => emit_state(out, s),
            Err(e) => fail(&e),
        }
    })
}

/// Releases a state handle. Null is a no-op.
///
/// # Safety
/// `state` must be null or a handle produced by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn ve_state_free(state: *mut VeState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of grid nodes, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ve_state_len(state: *const VeState) -> usize {
    if state.is_null() {
        0
    } else {
        (*state).inner.len()
    }
}

/// Writes the domain endpoints.
///
/// # Safety
/// `state` must be a live handle; `lo` and `hi` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ve_state_domain(
    state: *const VeState,
    lo: *mut f64,
    hi: *mut f64,
) -> VeStatus {
    guarded(|| {
        if state.is_null() || lo.is_null() || hi.is_null() {
            set_error("state, lo, hi must not be null");
            return VeStatus::NullPointer;
        }
        let g = &(*state).inner.grid;
        *lo = g.a();
        *hi = g.b();
        VeStatus::Ok
    })
}

/// Copies one per-node array into `buf`, which must hold exactly
/// `ve_state_len(state)` doubles.
///
/// # Safety
/// `state` must be a live handle; `buf` must be valid for writes of `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ve_state_field(
    state: *const VeState,
    field: VeField,
    buf: *mut f64,
    len: usize,
) -> VeStatus {
    guarded(|| {
        if state.is_null() || buf.is_null() {
            set_error("state and buf must not be null");
            return VeStatus::NullPointer;
        }
        let s = &(*state).inner;
        if len != s.len() {
            set_error("buffer length does not match the node count");
            return VeStatus::InvalidArgument;
        }
        let src: &[f64] = match field {
            VeField::Nodes => s.grid.nodes(),
            VeField::Q => &s.q,
            VeField::V => &s.v,
            VeField::Sigma => &s.sigma,
        };
        ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
        VeStatus::Ok
    })
}

/// Fills the scalar diagnostics of a state.
///
/// # Safety
/// `state` must be a live handle; `report` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ve_state_energy(
    state: *const VeState,
    report: *mut VeEnergyReport,
) -> VeStatus {
    guarded(|| {
        if state.is_null() || report.is_null() {
            set_error("state and report must not be null");
            return VeStatus::NullPointer;
        }
        match make_report(&(*state).inner, 0.0, &[1]) {
            Ok(r) => {
                let split = r.e2k.get(&1).copied().expect("level-1 energy requested");
                *report = VeEnergyReport {
                    e_phys: r.e_phys,
                    entropy_mass: r.entropy_mass,
                    e2_high: split.high,
                    e2_low: split.low,
                    a_star: r.controls.a_star,
                    b_control: r.controls.b,
                    c_min: r.nondeg.c,
                };
                VeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the explicit stepper from `initial` up to `t_final` with step
/// `eps`, resampling onto `uniform_count` nodes after each step. A run cut
/// short by the continuation criterion still succeeds; inspect
/// `ve_trajectory_violation`.
///
/// # Safety
/// `initial` must be a live handle; `out` must be valid; the returned
/// handle must be released with `ve_trajectory_free`.
#[no_mangle]
pub unsafe extern "C" fn ve_simulate(
    initial: *const VeState,
    t_final: f64,
    eps: f64,
    uniform_count: usize,
    out: *mut *mut VeTrajectory,
) -> VeStatus {
    guarded(|| {
        if initial.is_null() || out.is_null() {
            set_error("initial and out must not be null");
            return VeStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let cfg = StepConfig {
            eps,
            regrid: RegridSpec { uniform_count },
            ..StepConfig::default()
        };
        match run(&(*initial).inner, t_final, &cfg) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(VeTrajectory { inner: traj }));
                VeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a trajectory handle. Null is a no-op.
///
/// # Safety
/// `traj` must be null or a handle produced by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn ve_trajectory_free(traj: *mut VeTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of stored snapshots, or 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ve_trajectory_snapshot_count(traj: *const VeTrajectory) -> usize {
    if traj.is_null() {
        0
    } else {
        (*traj).inner.snapshots.len()
    }
}

/// Writes the time of snapshot `idx`.
///
/// # Safety
/// `traj` must be a live handle; `t` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ve_trajectory_time(
    traj: *const VeTrajectory,
    idx: usize,
    t: *mut f64,
) -> VeStatus {
    guarded(|| {
        if traj.is_null() || t.is_null() {
            set_error("traj and t must not be null");
            return VeStatus::NullPointer;
        }
        let snapshots = &(*traj).inner.snapshots;
        match snapshots.get(idx) {
            Some((time, _)) => {
                *t = *time;
                VeStatus::Ok
            }
            None => {
                set_error("snapshot index out of range");
                VeStatus::InvalidArgument
            }
        }
    })
}

/// Copies snapshot `idx` into a fresh state handle.
///
/// # Safety
/// `traj` must be a live handle; `out` must be valid; the returned handle
/// must be released with `ve_state_free`.
#[no_mangle]
pub unsafe extern "C" fn ve_trajectory_state(
    traj: *const VeTrajectory,
    idx: usize,
    out: *mut *mut VeState,
) -> VeStatus {
    guarded(|| {
        if traj.is_null() || out.is_null() {
            set_error("traj and out must not be null");
            return VeStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let snapshots = &(*traj).inner.snapshots;
        match snapshots.get(idx) {
            Some((_, state)) => emit_state(out, state.clone()),
            None => {
                set_error("snapshot index out of range");
                VeStatus::InvalidArgument
            }
        }
    })
}

/// Returns 1 and fills the outputs (when non-null) if the run was
/// truncated by the continuation criterion, else returns 0.
///
/// # Safety
/// `traj` must be a live handle; `t`, `c`, `threshold` must each be null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ve_trajectory_violation(
    traj: *const VeTrajectory,
    t: *mut f64,
    c: *mut f64,
    threshold: *mut f64,
) -> i32 {
    if traj.is_null() {
        return 0;
    }
    match &(*traj).inner.violation {
        Some(v) => {
            if !t.is_null() {
                *t = v.t;
            }
            if !c.is_null() {
                *c = v.c;
            }
            if !threshold.is_null() {
                *threshold = v.threshold;
            }
            1
        }
        None => 0,
    }
}

/// Evaluates the full and reduced distance functionals of two states over
/// their common support.
///
/// # Safety
/// `s1` and `s2` must be live handles; `d_full` and `d_reduced` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ve_distance(
    s1: *const VeState,
    s2: *const VeState,
    d_full: *mut f64,
    d_reduced: *mut f64,
) -> VeStatus {
    guarded(|| {
        if s1.is_null() || s2.is_null() || d_full.is_null() || d_reduced.is_null() {
            set_error("all pointers must be non-null");
            return VeStatus::NullPointer;
        }
        match distance_functionals(&(*s1).inner, &(*s2).inner) {
            Ok(d) => {
                *d_full = d.d_full;
                *d_reduced = d.d_reduced;
                VeStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    unsafe fn mk_state() -> *mut VeState {
        let mut out: *mut VeState = ptr::null_mut();
        let st = ve_state_affine(0.0, 0.5, 1.0, 1.0, 1.0, 101, &mut out);
        assert_eq!(st, VeStatus::Ok);
        assert!(!out.is_null());
        out
    }

    #[test]
    fn state_construction_and_accessors() {
        unsafe {
            let s = mk_state();
            assert_eq!(ve_state_len(s), 101);
            let (mut lo, mut hi) = (0.0, 0.0);
            assert_eq!(ve_state_domain(s, &mut lo, &mut hi), VeStatus::Ok);
            assert_eq!((lo, hi), (-1.0, 1.0));
            let mut q = vec![0.0; 101];
            assert_eq!(ve_state_field(s, VeField::Q, q.as_mut_ptr(), 101), VeStatus::Ok);
            assert_eq!(q[50], 0.5);
            assert_eq!(q[0], 0.0);
            assert_eq!(
                ve_state_field(s, VeField::Q, q.as_mut_ptr(), 100),
                VeStatus::InvalidArgument
            );
            ve_state_free(s);
        }
    }

    #[test]
    fn invalid_construction_reports_message() {
        unsafe {
            let mut out: *mut VeState = ptr::null_mut();
            let st = ve_state_affine(0.0, 0.5, 1.0, 1.0, -1.0, 101, &mut out);
            assert_eq!(st, VeStatus::InvalidArgument);
            assert!(out.is_null());
            let needed = ve_last_error_message(ptr::null_mut(), 0);
            assert!(needed > 0);
            let mut buf = vec![0i8; needed + 1];
            let written = ve_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len());
            assert_eq!(written, needed);
            assert_eq!(buf[needed], 0);
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(
                ve_state_affine(0.0, 0.5, 1.0, 1.0, 1.0, 101, ptr::null_mut()),
                VeStatus::NullPointer
            );
            assert_eq!(ve_state_len(ptr::null()), 0);
            let mut d = 0.0;
            assert_eq!(
                ve_state_domain(ptr::null(), &mut d, &mut d),
                VeStatus::NullPointer
            );
            ve_state_free(ptr::null_mut());
            ve_trajectory_free(ptr::null_mut());
        }
    }

    #[test]
    fn from_arrays_round_trip() {
        unsafe {
            let n = 101usize;
            let nodes: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / 100.0).collect();
            let q: Vec<f64> = nodes.iter().map(|&x| (1.0 - x * x).max(0.0) * 0.5).collect();
            let v = vec![0.0; n];
            let sigma = vec![1.0; n];
            let mut out: *mut VeState = ptr::null_mut();
            let st = ve_state_from_arrays(
                nodes.as_ptr(),
                q.as_ptr(),
                v.as_ptr(),
                sigma.as_ptr(),
                n,
                1.0,
                &mut out,
            );
            assert_eq!(st, VeStatus::Ok);
            let mut rep = VeEnergyReport {
                e_phys: 0.0,
                entropy_mass: 0.0,
                e2_high: 0.0,
                e2_low: 0.0,
                a_star: 0.0,
                b_control: 0.0,
                c_min: 0.0,
            };
            assert_eq!(ve_state_energy(out, &mut rep), VeStatus::Ok);
            assert!(rep.e_phys > 0.0);
            assert!((rep.c_min - 1.0).abs() < 1e-10);
            ve_state_free(out);
        }
    }

    #[test]
    fn simulate_and_walk_trajectory() {
        unsafe {
            let s = mk_state();
            let mut traj: *mut VeTrajectory = ptr::null_mut();
            let st = ve_simulate(s, 0.01, 1e-3, 101, &mut traj);
            assert_eq!(st, VeStatus::Ok);
            assert_eq!(ve_trajectory_snapshot_count(traj), 11);
            let mut t = -1.0;
            assert_eq!(ve_trajectory_time(traj, 10, &mut t), VeStatus::Ok);
            assert!((t - 0.01).abs() < 1e-12);
            assert_eq!(
                ve_trajectory_time(traj, 11, &mut t),
                VeStatus::InvalidArgument
            );
            assert_eq!(ve_trajectory_violation(traj, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), 0);

            let mut last: *mut VeState = ptr::null_mut();
            assert_eq!(ve_trajectory_state(traj, 10, &mut last), VeStatus::Ok);
            let (mut d_full, mut d_reduced) = (0.0, 0.0);
            assert_eq!(ve_distance(s, last, &mut d_full, &mut d_reduced), VeStatus::Ok);
            assert!(d_reduced <= d_full);
            assert!(d_full > 0.0);

            ve_state_free(last);
            ve_trajectory_free(traj);
            ve_state_free(s);
        }
    }
}
