//! C ABI over `rcm-core`.
//!
//! Every fallible call returns an [`RcmStatus`] and writes its result through an
//! out-pointer. On failure the message is kept per thread and can be read with
//! [`rcm_last_error_message`]. Handles are opaque and must be released with the
//! matching `*_free` function; freeing `NULL` is a no-op.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rcm_core::env::{extract_cluster, sample_environment, ClusterView, ConductanceModel, Environment};
use rcm_core::graph::{gasket_graph, lattice_box, WeightedGraph};
use rcm_core::kernel::{heat_kernel_table, HeatKernelTable};
use rcm_core::lil::{phi, psi};
use rcm_core::rng::WalkKey;
use rcm_core::walk::{WalkMetric, Walker};
use rcm_core::{Error, ErrorKind};

pub use rcm_core;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcmStatus {
    Ok = 0,
    RuntimeError = 1,
    ValidationError = 2,
    BudgetError = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcmModelKind {
    Constant = 0,
    /// `a` is the retention probability.
    Bernoulli = 1,
    /// Conductances uniform on `[a, b]`.
    UniformElliptic = 2,
}

/// Final state of one simulated walk.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RcmWalkSummary {
    pub final_position: usize,
    pub final_displacement: u32,
    pub final_running_max: u32,
    pub boundary_hit: bool,
}

pub struct RcmGraph {
    graph: WeightedGraph,
}

pub struct RcmEnvironment {
    env: Environment,
    cluster: ClusterView,
}

pub struct RcmKernelTable {
    table: HeatKernelTable,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(e: &Error) -> RcmStatus {
    match e.kind() {
        ErrorKind::Validation => RcmStatus::ValidationError,
        ErrorKind::Budget => RcmStatus::BudgetError,
        ErrorKind::Runtime => RcmStatus::RuntimeError,
    }
}

/// Runs `f`, storing its value through `out` and translating errors and panics.
fn guard<T>(out: *mut T, f: impl FnOnce() -> Result<T, Error>) -> RcmStatus {
    if out.is_null() {
        set_error("output pointer is null".into());
        return RcmStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(value)) => {
            // SAFETY: `out` is non-null and the caller guarantees it is writable.
            unsafe { out.write(value) };
            RcmStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            RcmStatus::Panic
        }
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// SAFETY: caller passes either null or a live handle from this library.
unsafe fn borrow<'a, T>(ptr: *const T) -> Result<&'a T, Error> {
    unsafe { ptr.as_ref() }.ok_or_else(|| Error::InvalidParameter {
        field: "handle".into(),
        reason: "null handle".into(),
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rcm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Box `[-half, half]^dim` of Z^dim; the base point is the origin.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn rcm_lattice_box(dim: usize, half: usize, out: *mut *mut RcmGraph) -> RcmStatus {
    guard(out, || Ok(boxed(RcmGraph { graph: lattice_box(dim, half)? })))
}

/// Pre-Sierpinski gasket truncated at `level`; the base point is the corner vertex.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn rcm_gasket(level: u32, out: *mut *mut RcmGraph) -> RcmStatus {
    guard(out, || Ok(boxed(RcmGraph { graph: gasket_graph(level)? })))
}

/// Marks the graph as a finite graph in its own right, with no truncation boundary.
///
/// # Safety
/// `graph` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn rcm_graph_close(graph: *mut RcmGraph) -> RcmStatus {
    let Some(g) = (unsafe { graph.as_mut() }) else {
        set_error("null handle".into());
        return RcmStatus::NullPointer;
    };
    g.graph = g.graph.clone().into_closed();
    RcmStatus::Ok
}

/// # Safety
/// `graph` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn rcm_graph_vertex_count(graph: *const RcmGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.graph.vertex_count())
}

/// # Safety
/// `graph` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn rcm_graph_edge_count(graph: *const RcmGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.graph.edge_count())
}

/// # Safety
/// `graph` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn rcm_graph_base_point(graph: *const RcmGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.graph.base_point())
}

/// Hop distance in the underlying graph.
///
/// # Safety
/// `graph` must be a live graph handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_graph_distance(graph: *const RcmGraph, x: usize, y: usize, out: *mut usize) -> RcmStatus {
    guard(out, || {
        let g = unsafe { borrow(graph) }?;
        Ok(g.graph.graph_distance(x, y, false)?.unwrap_or(usize::MAX))
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rcm_graph_free(graph: *mut RcmGraph) {
    if !graph.is_null() {
        drop(unsafe { Box::from_raw(graph) });
    }
}

/// Samples conductances on a copy of `graph` and extracts the base-point cluster.
///
/// # Safety
/// `graph` must be a live graph handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_environment_sample(
    graph: *const RcmGraph,
    kind: RcmModelKind,
    a: f64,
    b: f64,
    master_seed: u64,
    env_id: u64,
    out: *mut *mut RcmEnvironment,
) -> RcmStatus {
    guard(out, || {
        let g = unsafe { borrow(graph) }?;
        let model = match kind {
            RcmModelKind::Constant => ConductanceModel::Constant,
            RcmModelKind::Bernoulli => ConductanceModel::Bernoulli { p: a },
            RcmModelKind::UniformElliptic => ConductanceModel::UniformElliptic { low: a, high: b },
        };
        let env = sample_environment(&g.graph, model, master_seed, env_id)?;
        let cluster = extract_cluster(&env);
        Ok(boxed(RcmEnvironment { env, cluster }))
    })
}

/// # Safety
/// `env` must be null or a live environment handle.
#[no_mangle]
pub unsafe extern "C" fn rcm_environment_cluster_size(env: *const RcmEnvironment) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.cluster.size())
}

/// # Safety
/// `env` must be null or a live environment handle.
#[no_mangle]
pub unsafe extern "C" fn rcm_environment_in_cluster(env: *const RcmEnvironment, v: usize) -> bool {
    unsafe { env.as_ref() }.is_some_and(|e| v < e.env.graph().vertex_count() && e.cluster.contains(v))
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rcm_environment_free(env: *mut RcmEnvironment) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}

/// One walk of `n_steps` from `start` using the stream `(master_seed, env_id, walk_id)`.
///
/// # Safety
/// `env` must be a live environment handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_walk_summary(
    env: *const RcmEnvironment,
    start: usize,
    n_steps: u64,
    walk_id: u64,
    out: *mut RcmWalkSummary,
) -> RcmStatus {
    guard(out, || {
        let e = unsafe { borrow(env) }?;
        let walker = Walker::new(&e.env, &e.cluster, start, WalkMetric::Graph, 0)?;
        let key = WalkKey::new(e.env.master_seed(), e.env.env_id(), walk_id);
        let s = walker.simulate(n_steps, &[], key);
        Ok(RcmWalkSummary {
            final_position: s.final_position,
            final_displacement: s.final_displacement,
            final_running_max: s.final_running_max,
            boundary_hit: s.boundary_hit,
        })
    })
}

/// Exact `P_n(x, .)` for `n <= horizon`.
///
/// # Safety
/// `env` must be a live environment handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_heat_kernel(
    env: *const RcmEnvironment,
    x: usize,
    horizon: usize,
    out: *mut *mut RcmKernelTable,
) -> RcmStatus {
    guard(out, || {
        let e = unsafe { borrow(env) }?;
        let table = heat_kernel_table(&e.env, &e.cluster, x, horizon)?;
        Ok(boxed(RcmKernelTable { table }))
    })
}

/// `P_n(x, y)`; zero outside the support.
///
/// # Safety
/// `table` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_kernel_transition(table: *const RcmKernelTable, n: usize, y: usize, out: *mut f64) -> RcmStatus {
    guard(out, || {
        let t = unsafe { borrow(table) }?;
        t.table.transition(n, y).ok_or_else(|| Error::InvalidParameter {
            field: "n".into(),
            reason: format!("{n} exceeds the horizon {}", t.table.horizon()),
        })
    })
}

/// `p_n(x, y) = P_n(x, y) / mu(y)`.
///
/// # Safety
/// `table` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_kernel_value(table: *const RcmKernelTable, n: usize, y: usize, out: *mut f64) -> RcmStatus {
    guard(out, || {
        let t = unsafe { borrow(table) }?;
        t.table.kernel(n, y).ok_or_else(|| Error::InvalidParameter {
            field: "n".into(),
            reason: format!("{n} exceeds the horizon {}", t.table.horizon()),
        })
    })
}

/// Total mass of row `n`; 1 up to rounding.
///
/// # Safety
/// `table` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_kernel_row_mass(table: *const RcmKernelTable, n: usize, out: *mut f64) -> RcmStatus {
    guard(out, || {
        let t = unsafe { borrow(table) }?;
        if n > t.table.horizon() {
            return Err(Error::InvalidParameter {
                field: "n".into(),
                reason: format!("{n} exceeds the horizon {}", t.table.horizon()),
            });
        }
        Ok(t.table.row_mass(n))
    })
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rcm_kernel_free(table: *mut RcmKernelTable) {
    if !table.is_null() {
        drop(unsafe { Box::from_raw(table) });
    }
}

/// `q^{1/beta} (log log q)^{1 - 1/beta}` for `q > e`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_phi(q: f64, beta: f64, out: *mut f64) -> RcmStatus {
    guard(out, || phi(q, beta))
}

/// `n^{1/beta} (log log n)^{-1/beta}` for `n > e`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rcm_psi(n: f64, beta: f64, out: *mut f64) -> RcmStatus {
    guard(out, || psi(n, beta))
}
