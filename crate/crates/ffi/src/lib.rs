//! C ABI over the solver.
//!
//! Every function returns an [`ScfemStatus`]; on failure a message is kept
//! per thread and can be fetched with [`scfem_last_error`]. Handles are
//! opaque and must be released with their `_free` function. Null handles
//! are rejected, never dereferenced.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use scfem::driver::{AdaptiveState, IterationRecord, RefinementKind, RunOutcome, RunStatus, SolveAudit};
use scfem::index_set::{is_monotone, IndexSet, MultiIndex};
use scfem::mesh::SimplexMesh;
use scfem::output::{emit_svg_plot, manifest_json, snapshot_mesh, write_csv, RawConfig, RunConfig};
use scfem::problems::problem_by_name;
use scfem::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScfemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Contract = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScfemRefinement {
    Spatial = 0,
    Parametric = 1,
    Final = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScfemRunStatus {
    Converged = 0,
    MaxIterations = 1,
    Failed = 2,
}

/// One iteration of a run; estimates are NaN when not computed.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ScfemRecord {
    pub iter: usize,
    pub kind: ScfemRefinement,
    pub dof: usize,
    pub dof_total_vertices: usize,
    pub mu_bar: f64,
    pub tau_bar: f64,
    pub mu: f64,
    pub tau: f64,
    pub eta: f64,
    pub n_colpts: usize,
    pub n_triangles: usize,
    pub wall_ms: f64,
}

/// A downward-closed multi-index set.
pub struct ScfemIndexSet {
    inner: IndexSet,
}

/// A finished adaptive run.
pub struct ScfemRun {
    raw: RawConfig,
    config: RunConfig,
    outcome: RunOutcome,
    mesh: Arc<SimplexMesh>,
    audit: SolveAudit,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> ScfemStatus {
    match e {
        Error::Config(_) | Error::Parse(_) => ScfemStatus::Config,
        Error::Ellipticity { .. } | Error::Solver { .. } | Error::Hypothesis(_) => ScfemStatus::Numerical,
        Error::Io(_) | Error::Json(_) => ScfemStatus::Io,
        Error::Dimension { .. } | Error::Contract(_) => ScfemStatus::Contract,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (ScfemStatus, String)>) -> ScfemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScfemStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ScfemStatus::Panic
        }
    }
}

fn lib<T>(r: scfem::Result<T>) -> Result<T, (ScfemStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (ScfemStatus, String) {
    (ScfemStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (ScfemStatus, String) {
    (ScfemStatus::InvalidArgument, msg.into())
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (ScfemStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ScfemStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), (ScfemStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Read `count` multi-indices of length `dim` stored row-major.
unsafe fn read_indices(
    entries: *const u32,
    count: usize,
    dim: usize,
) -> Result<Vec<MultiIndex>, (ScfemStatus, String)> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if entries.is_null() {
        return Err(null("entries"));
    }
    let flat = std::slice::from_raw_parts(entries, count * dim);
    flat.chunks(dim).map(|c| lib(MultiIndex::new(c.to_vec()))).collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scfem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or null if none.
/// Release with [`scfem_string_free`].
#[no_mangle]
pub extern "C" fn scfem_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_deref() {
        Some(m) => CString::new(m.replace('\0', " ")).map_or(std::ptr::null_mut(), CString::into_raw),
        None => std::ptr::null_mut(),
    })
}

/// # Safety
/// `s` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn scfem_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The set `{(1, ..., 1)}` in `dim` dimensions.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_root(dim: usize, out: *mut *mut ScfemIndexSet) -> ScfemStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        write_out(out, ScfemIndexSet { inner: IndexSet::root(dim) })
    })
}

/// Build a set from `count` row-major multi-indices of length `dim`.
///
/// # Safety
/// `entries` must hold `count * dim` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_from_entries(
    entries: *const u32,
    count: usize,
    dim: usize,
    out: *mut *mut ScfemIndexSet,
) -> ScfemStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let indices = read_indices(entries, count, dim)?;
        write_out(out, ScfemIndexSet { inner: lib(IndexSet::from_indices(indices))? })
    })
}

/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_free(set: *mut ScfemIndexSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_len(set: *const ScfemIndexSet, len: *mut usize) -> ScfemStatus {
    guard(|| {
        let s = borrow(set, "set")?;
        *len.as_mut().ok_or_else(|| null("len"))? = s.inner.len();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_dim(set: *const ScfemIndexSet, dim: *mut usize) -> ScfemStatus {
    guard(|| {
        let s = borrow(set, "set")?;
        *dim.as_mut().ok_or_else(|| null("dim"))? = s.inner.dim();
        Ok(())
    })
}

/// Write all indices, lexicographically sorted and row-major, into `buf`
/// of capacity `cap` values (`len * dim` are needed).
///
/// # Safety
/// `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_entries(set: *const ScfemIndexSet, buf: *mut u32, cap: usize) -> ScfemStatus {
    guard(|| {
        let s = borrow(set, "set")?;
        let need = s.inner.len() * s.inner.dim();
        if cap < need {
            return Err((ScfemStatus::BufferTooSmall, format!("need {need} values, have {cap}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (dst, v) in out.iter_mut().zip(s.inner.iter().flat_map(|nu| nu.entries().iter())) {
            *dst = *v;
        }
        Ok(())
    })
}

/// `I ∪ R(I)` as a new handle. The margin alone is not downward closed;
/// read it with [`scfem_index_set_margin_entries`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_with_margin(
    set: *const ScfemIndexSet,
    out: *mut *mut ScfemIndexSet,
) -> ScfemStatus {
    guard(|| {
        let s = borrow(set, "set")?;
        write_out(out, ScfemIndexSet { inner: s.inner.with_margin() })
    })
}

/// Write the reduced margin (sorted, row-major) into `buf`; `count`
/// receives the number of indices. Fails with `BUFFER_TOO_SMALL` (after
/// setting `count`) when `cap < count * dim`.
///
/// # Safety
/// Pointers must be valid; `buf` may be null when `cap` is 0.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_margin_entries(
    set: *const ScfemIndexSet,
    buf: *mut u32,
    cap: usize,
    count: *mut usize,
) -> ScfemStatus {
    guard(|| {
        let s = borrow(set, "set")?;
        let margin = s.inner.reduced_margin();
        *count.as_mut().ok_or_else(|| null("count"))? = margin.len();
        let need = margin.len() * s.inner.dim();
        if cap < need {
            return Err((ScfemStatus::BufferTooSmall, format!("need {need} values, have {cap}")));
        }
        if need > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            let out = std::slice::from_raw_parts_mut(buf, need);
            for (dst, v) in out.iter_mut().zip(margin.iter().flat_map(|nu| nu.entries().iter())) {
                *dst = *v;
            }
        }
        Ok(())
    })
}

/// `I ∪ added`, where every added index must lie in the reduced margin.
///
/// # Safety
/// `entries` must hold `count * dim` values; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_index_set_enrich(
    set: *const ScfemIndexSet,
    entries: *const u32,
    count: usize,
    out: *mut *mut ScfemIndexSet,
) -> ScfemStatus {
    guard(|| {
        let s = borrow(set, "set")?;
        let added = read_indices(entries, count, s.inner.dim())?;
        write_out(out, ScfemIndexSet { inner: lib(s.inner.enrich(&added))? })
    })
}

/// Downward-closedness test for `count` row-major indices of length `dim`.
///
/// # Safety
/// `entries` must hold `count * dim` values; `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_is_monotone(
    entries: *const u32,
    count: usize,
    dim: usize,
    result: *mut bool,
) -> ScfemStatus {
    guard(|| {
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let indices = read_indices(entries, count, dim)?;
        *result.as_mut().ok_or_else(|| null("result"))? = lib(is_monotone(&indices))?;
        Ok(())
    })
}

fn execute(raw: RawConfig) -> Result<ScfemRun, (ScfemStatus, String)> {
    let config = lib(RunConfig::from_raw(&raw))?;
    let problem = lib(problem_by_name(&config.problem, Some(config.m)))?;
    let mut state = lib(AdaptiveState::new(problem, config.driver.clone()))?;
    let outcome = state.run();
    Ok(ScfemRun { raw, config, outcome, mesh: state.mesh().clone(), audit: state.audit().clone() })
}

/// Run with a flat `key = value` configuration (same keys as the CLI).
/// A run that fails part-way still yields a handle; check its status.
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_run_from_config(config: *const c_char, out: *mut *mut ScfemRun) -> ScfemStatus {
    guard(|| {
        let raw = lib(RawConfig::parse(text(config, "config")?))?;
        write_out(out, execute(raw)?)
    })
}

/// Run a model problem with default marking parameters. `m = 0` selects
/// the problem's default dimension.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_run(
    problem: *const c_char,
    family: *const c_char,
    tol: f64,
    m: usize,
    max_iter: usize,
    out: *mut *mut ScfemRun,
) -> ScfemStatus {
    guard(|| {
        let mut raw = RawConfig::default();
        raw.set("problem", text(problem, "problem")?);
        raw.set("family", text(family, "family")?);
        raw.set("tol", tol);
        if m > 0 {
            raw.set("m", m);
        }
        if max_iter > 0 {
            raw.set("max_iter", max_iter);
        }
        write_out(out, execute(raw)?)
    })
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scfem_run_free(run: *mut ScfemRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_run_status(run: *const ScfemRun, status: *mut ScfemRunStatus) -> ScfemStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        *status.as_mut().ok_or_else(|| null("status"))? = match r.outcome.status {
            RunStatus::Converged => ScfemRunStatus::Converged,
            RunStatus::MaxIterations => ScfemRunStatus::MaxIterations,
            RunStatus::Failed => ScfemRunStatus::Failed,
        };
        if let Some(e) = &r.outcome.error {
            set_error(e.clone());
        }
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_run_record_count(run: *const ScfemRun, count: *mut usize) -> ScfemStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        *count.as_mut().ok_or_else(|| null("count"))? = r.outcome.records.len();
        Ok(())
    })
}

fn to_c(r: &IterationRecord) -> ScfemRecord {
    ScfemRecord {
        iter: r.iter,
        kind: match r.kind {
            RefinementKind::Spatial => ScfemRefinement::Spatial,
            RefinementKind::Parametric => ScfemRefinement::Parametric,
            RefinementKind::Final => ScfemRefinement::Final,
        },
        dof: r.dof,
        dof_total_vertices: r.dof_total_vertices,
        mu_bar: r.mu_bar,
        tau_bar: r.tau_bar,
        mu: r.mu,
        tau: r.tau,
        eta: r.eta,
        n_colpts: r.n_colpts,
        n_triangles: r.n_triangles,
        wall_ms: r.wall_ms,
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn scfem_run_record(run: *const ScfemRun, k: usize, record: *mut ScfemRecord) -> ScfemStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        let rec = r
            .outcome
            .records
            .get(k)
            .ok_or_else(|| invalid(format!("record {k} out of range ({} records)", r.outcome.records.len())))?;
        *record.as_mut().ok_or_else(|| null("record"))? = to_c(rec);
        Ok(())
    })
}

/// Write `run.csv`, `manifest.json`, `convergence.svg` (two or more
/// records) and `mesh_final.txt` into `dir`, creating it if needed.
///
/// # Safety
/// `dir` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn scfem_run_write_outputs(run: *const ScfemRun, dir: *const c_char) -> ScfemStatus {
    guard(|| {
        let r = borrow(run, "run")?;
        let dir = Path::new(text(dir, "dir")?);
        lib(fs::create_dir_all(dir).map_err(Error::from))?;
        lib(write_csv(&r.outcome.records, dir.join("run.csv")))?;
        let manifest = lib(manifest_json(&r.raw, &r.config, &r.outcome, &r.audit))?;
        lib(fs::write(dir.join("manifest.json"), manifest).map_err(Error::from))?;
        if r.outcome.records.len() >= 2 {
            lib(emit_svg_plot(&r.outcome.records, dir.join("convergence.svg")))?;
        }
        lib(snapshot_mesh(&r.mesh, dir.join("mesh_final.txt")))
    })
}
