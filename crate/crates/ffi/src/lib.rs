//! C ABI over the `pabf` crate.
//!
//! Every entry point returns a [`PabfStatus`]. On failure a description is
//! kept per thread and can be fetched with [`pabf_last_error`]. Simulations are
//! opaque handles created by [`pabf_simulation_new`] and released with
//! [`pabf_simulation_free`]. Field buffers hold `n1 * n2` doubles in storage
//! order, axis 1 fastest.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use pabf::{parse_config, project, Error, RcGrid, ScalarField, Simulation, VectorField};

/// Result codes of every call.
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PabfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Precondition = 4,
    Blowup = 5,
    SolverFailure = 6,
    BufferSize = 7,
    InvalidGrid = 8,
    Other = 9,
    Panic = 10,
}

/// Opaque simulation handle.
pub struct PabfSimulation {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PabfStatus {
    match e {
        Error::Config { .. } => PabfStatus::Config,
        Error::Precondition(_)
        | Error::InsufficientReplication(_)
        | Error::UnsupportedSystem(_) => PabfStatus::Precondition,
        Error::Blowup { .. } | Error::NonFinite(_) | Error::BrokenConfiguration(_) => {
            PabfStatus::Blowup
        }
        Error::SolverFailure { .. } => PabfStatus::SolverFailure,
        Error::InvalidGrid(_) | Error::GridMismatch => PabfStatus::InvalidGrid,
        Error::Sweep { source, .. } => status_of(source),
        _ => PabfStatus::Other,
    }
}

fn fail(e: Error) -> PabfStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

fn null(what: &str) -> PabfStatus {
    set_error(format!("{what} is null"));
    PabfStatus::NullPointer
}

/// Run `f`, turning panics into [`PabfStatus::Panic`].
fn guarded(f: impl FnOnce() -> PabfStatus) -> PabfStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("internal panic".into());
        PabfStatus::Panic
    })
}

/// Create a simulation from configuration text (the `key = value` format of
/// the command-line tool). On success `*out` receives the handle.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pabf_simulation_new(
    config: *const c_char,
    out: *mut *mut PabfSimulation,
) -> PabfStatus {
    guarded(|| {
        if config.is_null() {
            return null("config");
        }
        if out.is_null() {
            return null("out");
        }
        let text = match CStr::from_ptr(config).to_str() {
            Ok(t) => t,
            Err(e) => {
                set_error(format!("config is not UTF-8: {e}"));
                return PabfStatus::InvalidUtf8;
            }
        };
        let sim = match parse_config(text).and_then(|spec| Simulation::new(&spec)) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        *out = Box::into_raw(Box::new(PabfSimulation { sim }));
        PabfStatus::Ok
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from [`pabf_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pabf_simulation_free(sim: *mut PabfSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advance `n` sweeps.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pabf_simulation_run_sweeps(
    sim: *mut PabfSimulation,
    n: usize,
) -> PabfStatus {
    guarded(|| {
        let Some(s) = sim.as_mut() else {
            return null("sim");
        };
        for _ in 0..n {
            if let Err(e) = s.sim.run_sweep() {
                return fail(e);
            }
        }
        PabfStatus::Ok
    })
}

/// Grid shape, completed sweeps, simulated time and deposit count. Any
/// output pointer may be null.
///
/// # Safety
/// `sim` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pabf_simulation_info(
    sim: *const PabfSimulation,
    n1: *mut usize,
    n2: *mut usize,
    sweeps: *mut usize,
    time: *mut f64,
    deposits: *mut u64,
) -> PabfStatus {
    guarded(|| {
        let Some(s) = sim.as_ref() else {
            return null("sim");
        };
        let g = s.sim.state().grid();
        if let Some(p) = n1.as_mut() {
            *p = g.n1();
        }
        if let Some(p) = n2.as_mut() {
            *p = g.n2();
        }
        if let Some(p) = sweeps.as_mut() {
            *p = s.sim.sweep();
        }
        if let Some(p) = time.as_mut() {
            *p = s.sim.time();
        }
        if let Some(p) = deposits.as_mut() {
            *p = s.sim.state().total_count();
        }
        PabfStatus::Ok
    })
}

unsafe fn copy_out(dst: *mut f64, src: &[f64]) {
    if !dst.is_null() {
        slice::from_raw_parts_mut(dst, src.len()).copy_from_slice(src);
    }
}

/// Current estimate: mean force `F`, projected potential `A`, its gradient
/// and the histogram density. Each buffer holds `len` doubles and may be
/// null to skip that field; `len` must equal `n1 * n2`.
///
/// # Safety
/// `sim` must be a live handle; non-null buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pabf_simulation_fields(
    sim: *mut PabfSimulation,
    len: usize,
    force1: *mut f64,
    force2: *mut f64,
    potential: *mut f64,
    grad1: *mut f64,
    grad2: *mut f64,
    density: *mut f64,
) -> PabfStatus {
    guarded(|| {
        let Some(s) = sim.as_mut() else {
            return null("sim");
        };
        let expect = s.sim.state().grid().len();
        if len != expect {
            set_error(format!("buffers hold {len} values, grid has {expect}"));
            return PabfStatus::BufferSize;
        }
        let snap = match s.sim.snapshot() {
            Ok(x) => x,
            Err(e) => return fail(e),
        };
        copy_out(force1, snap.force.comp1());
        copy_out(force2, snap.force.comp2());
        copy_out(potential, snap.potential.values());
        copy_out(grad1, snap.gradient.comp1());
        copy_out(grad2, snap.gradient.comp2());
        copy_out(density, snap.density.values());
        PabfStatus::Ok
    })
}

/// Weighted Helmholtz projection of `(f1, f2)` with weight `psi` on an
/// `n1 × n2` periodic grid of size `l1 × l2`. Writes the mean-zero potential
/// and its gradient; `grad1`/`grad2` may be null. `max_iter = 0` selects the
/// default iteration cap.
///
/// # Safety
/// Inputs must hold `n1 * n2` doubles; non-null outputs likewise.
#[no_mangle]
pub unsafe extern "C" fn pabf_project(
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
    f1: *const f64,
    f2: *const f64,
    psi: *const f64,
    tol: f64,
    max_iter: usize,
    potential: *mut f64,
    grad1: *mut f64,
    grad2: *mut f64,
) -> PabfStatus {
    guarded(|| {
        if f1.is_null() || f2.is_null() || psi.is_null() || potential.is_null() {
            return null("input or potential buffer");
        }
        let grid = match RcGrid::new(n1, n2, l1, l2) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        let n = grid.len();
        let read = |p: *const f64| slice::from_raw_parts(p, n).to_vec();
        let fields = VectorField::new(grid, read(f1), read(f2))
            .and_then(|f| Ok((f, ScalarField::new(grid, read(psi))?)));
        let (force, weight) = match fields {
            Ok(x) => x,
            Err(e) => return fail(e),
        };
        let cap = if max_iter == 0 {
            pabf::projection::default_max_iter(&grid)
        } else {
            max_iter
        };
        match project(&force, &weight, tol, cap) {
            Ok(p) => {
                copy_out(potential, p.potential.values());
                copy_out(grad1, p.gradient.comp1());
                copy_out(grad2, p.gradient.comp2());
                PabfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Description of the last failure on this thread, or null if none. The
/// string is owned by the caller and must be released with
/// [`pabf_string_free`].
#[no_mangle]
pub extern "C" fn pabf_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .clone()
            .map_or(std::ptr::null_mut(), CString::into_raw)
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from [`pabf_last_error`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pabf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
