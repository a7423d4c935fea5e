//! C ABI over the grid-world side of `ftle-verify`.
//!
//! Worlds and policies are opaque handles. Every fallible call returns an
//! [`FvStatus`]; on failure the message is kept per thread and can be read
//! with [`fv_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ftle_verify::attractor::{final_state_histogram, simulate, StartMode};
use ftle_verify::certificate::certify_delta;
use ftle_verify::env::{builtin_layout, GridSystem, GridWorld};
use ftle_verify::experiment::load_checkpoint;
use ftle_verify::ftle::compute_ftle_field;
use ftle_verify::metrics::{metric_report, obstacle_boundary, GoalRegion, MetricParameters};
use ftle_verify::policy::{make_scripted, GridPolicy, ScriptedRule};
use ftle_verify::{Cell, Error};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    InvalidLayout = 4,
    UnknownRule = 5,
    ShapeMismatch = 6,
    EmptyRegion = 7,
    Io = 8,
    Parse = 9,
    Invariant = 10,
    BufferTooSmall = 11,
    Panic = 12,
    Other = 13,
}

/// A grid world.
pub struct FvGridWorld {
    world: GridWorld,
}

/// A deterministic policy bound to the shape of the world it was built for.
pub struct FvPolicy {
    policy: Box<dyn GridPolicy>,
    rows: usize,
    cols: usize,
}

/// Metric parameters. `t_escape` of 0 means four times `t_int`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FvMetricParams {
    pub t_int: usize,
    pub h: f64,
    pub alpha: f64,
    pub n_sim: usize,
    pub t_escape: usize,
    pub seed: u64,
}

/// MBR, ASAS and TASAS. Infinite ASAS/TASAS mean no mass reached the goal.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FvMetrics {
    pub mbr: f64,
    pub asas: f64,
    pub tasas: f64,
    pub h_goal: f64,
    pub boundary_size: usize,
    pub peak_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(FvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidLayout(_) | Error::UnreachableGoal { .. } => FvStatus::InvalidLayout,
            Error::UnknownRule(_) => FvStatus::UnknownRule,
            Error::ShapeMismatch(_) | Error::DimensionMismatch(_) => FvStatus::ShapeMismatch,
            Error::EmptyRegion => FvStatus::EmptyRegion,
            Error::Io { .. } => FvStatus::Io,
            Error::Parse(_) | Error::Json(_) => FvStatus::Parse,
            Error::Invariant(_) | Error::Asymmetric(_) => FvStatus::Invariant,
            Error::InvalidParameter(_) | Error::InvalidState(..) => FvStatus::InvalidParameter,
            _ => FvStatus::Other,
        };
        Fail(code, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FvStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            FvStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FvStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(FvStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn system<'a>(world: &FvGridWorld, policy: &'a FvPolicy) -> Result<GridSystem<&'a dyn GridPolicy>, Fail> {
    let w = &world.world;
    if (w.rows(), w.cols()) != (policy.rows, policy.cols) {
        return Err(Fail(
            FvStatus::ShapeMismatch,
            format!("policy is {}x{}, world is {}x{}", policy.rows, policy.cols, w.rows(), w.cols()),
        ));
    }
    Ok(GridSystem::new(w.clone(), policy.policy.as_ref()))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn fv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// One of `simple_wall`, `scattered_blocks`, `u_shape_trap`.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fv_world_builtin(name: *const c_char, out: *mut *mut FvGridWorld) -> FvStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let world = builtin_layout(name)?;
        *out = Box::into_raw(Box::new(FvGridWorld { world }));
        Ok(())
    })
}

/// A world from layout text (`#` obstacle, `.` free, `G` goal, `S` start).
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fv_world_parse(text: *const c_char, out: *mut *mut FvGridWorld) -> FvStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let world = GridWorld::parse_layout(text)?;
        *out = Box::into_raw(Box::new(FvGridWorld { world }));
        Ok(())
    })
}

/// # Safety
/// `world` comes from this library, or is null.
#[no_mangle]
pub unsafe extern "C" fn fv_world_free(world: *mut FvGridWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// # Safety
/// `world` is a live handle; the out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn fv_world_shape(world: *const FvGridWorld, rows: *mut usize, cols: *mut usize) -> FvStatus {
    guard(|| {
        let w = &deref(world, "world")?.world;
        if rows.is_null() || cols.is_null() {
            return Err(null("rows/cols"));
        }
        *rows = w.rows();
        *cols = w.cols();
        Ok(())
    })
}

/// Goal cell.
///
/// # Safety
/// `world` is a live handle; the out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn fv_world_goal(world: *const FvGridWorld, row: *mut usize, col: *mut usize) -> FvStatus {
    guard(|| {
        let g = deref(world, "world")?.world.goal();
        if row.is_null() || col.is_null() {
            return Err(null("row/col"));
        }
        *row = g.row;
        *col = g.col;
        Ok(())
    })
}

/// Scripted policy from a rule string such as `shortest-path`, `greedy`,
/// `constant:right` or `trap-cycle:5,1;6,1`.
///
/// # Safety
/// `world` is a live handle; `rule` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fv_policy_scripted(
    world: *const FvGridWorld,
    rule: *const c_char,
    out: *mut *mut FvPolicy,
) -> FvStatus {
    guard(|| {
        let w = &deref(world, "world")?.world;
        let rule: ScriptedRule = str_arg(rule, "rule")?.parse()?;
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = make_scripted(&rule, w)?;
        *out = Box::into_raw(Box::new(FvPolicy { policy: Box::new(policy), rows: w.rows(), cols: w.cols() }));
        Ok(())
    })
}

/// Tabular policy from a checkpoint CSV, checked against the world.
///
/// # Safety
/// `world` is a live handle; `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fv_policy_load(world: *const FvGridWorld, path: *const c_char, out: *mut *mut FvPolicy) -> FvStatus {
    guard(|| {
        let w = &deref(world, "world")?.world;
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = load_checkpoint(Path::new(path), w)?;
        *out = Box::into_raw(Box::new(FvPolicy { policy: Box::new(policy), rows: w.rows(), cols: w.cols() }));
        Ok(())
    })
}

/// # Safety
/// `policy` comes from this library, or is null.
#[no_mangle]
pub unsafe extern "C" fn fv_policy_free(policy: *mut FvPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Action index (0 up, 1 down, 2 left, 3 right) at a cell.
///
/// # Safety
/// `policy` is a live handle; `action` is writable.
#[no_mangle]
pub unsafe extern "C" fn fv_policy_action(policy: *const FvPolicy, row: usize, col: usize, action: *mut u32) -> FvStatus {
    guard(|| {
        let p = deref(policy, "policy")?;
        if action.is_null() {
            return Err(null("action"));
        }
        if row >= p.rows || col >= p.cols {
            return Err(Fail(FvStatus::InvalidParameter, format!("({row}, {col}) outside {}x{}", p.rows, p.cols)));
        }
        *action = p.policy.action(Cell::new(row, col)).index() as u32;
        Ok(())
    })
}

/// FTLE field in row-major order; masked cells are NaN. `len` must be at
/// least rows*cols.
///
/// # Safety
/// Handles are live; `values` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fv_ftle_field(
    world: *const FvGridWorld,
    policy: *const FvPolicy,
    t_int: usize,
    h: f64,
    values: *mut f64,
    len: usize,
) -> FvStatus {
    guard(|| {
        let sys = system(deref(world, "world")?, deref(policy, "policy")?)?;
        if values.is_null() {
            return Err(null("values"));
        }
        let (rows, cols) = (sys.world().rows(), sys.world().cols());
        if len < rows * cols {
            return Err(Fail(FvStatus::BufferTooSmall, format!("need {} values, got {len}", rows * cols)));
        }
        let field = compute_ftle_field(&sys, t_int, h)?;
        let out = std::slice::from_raw_parts_mut(values, rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out[r * cols + c] = field.get(Cell::new(r, c)).unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Defaults: t_int 30, h 1, alpha 0.25, n_sim 100, t_escape 0, seed 0.
#[no_mangle]
pub extern "C" fn fv_metric_params_default() -> FvMetricParams {
    FvMetricParams { t_int: 30, h: 1.0, alpha: 0.25, n_sim: 100, t_escape: 0, seed: 0 }
}

/// MBR, ASAS and TASAS from one start per free cell, against the world's goal.
///
/// # Safety
/// Handles are live; `params` is readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fv_metrics(
    world: *const FvGridWorld,
    policy: *const FvPolicy,
    params: *const FvMetricParams,
    out: *mut FvMetrics,
) -> FvStatus {
    guard(|| {
        let sys = system(deref(world, "world")?, deref(policy, "policy")?)?;
        let p = *deref(params, "params")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let w = sys.world();
        let field = compute_ftle_field(&sys, p.t_int, p.h)?;
        let ens = simulate(&sys, StartMode::Exhaustive, p.t_int, 0)?;
        let hist = final_state_histogram(&ens);
        let boundary = obstacle_boundary(w.rows(), w.cols(), &w.obstacle_set());
        let goal = GoalRegion::single(w.goal());
        let t_escape = if p.t_escape == 0 { 4 * p.t_int } else { p.t_escape };
        let mp = MetricParameters { alpha: p.alpha, n_sim: p.n_sim, t_escape, t_int: p.t_int, seed: p.seed };
        let r = metric_report(&sys, &field, &hist, &boundary, &goal, &mp)?;
        *out = FvMetrics {
            mbr: r.mbr,
            asas: r.asas,
            tasas: r.tasas,
            h_goal: r.h_goal,
            boundary_size: r.boundary_size,
            peak_count: r.peaks.len(),
        };
        Ok(())
    })
}

/// Largest certified δ for a region with maximal FTLE `sigma_max`.
///
/// # Safety
/// `delta` is writable.
#[no_mangle]
pub unsafe extern "C" fn fv_certify_delta(sigma_max: f64, t_int: usize, epsilon: f64, delta: *mut f64) -> FvStatus {
    guard(|| {
        if delta.is_null() {
            return Err(null("delta"));
        }
        *delta = certify_delta(sigma_max, t_int, epsilon)?;
        Ok(())
    })
}
