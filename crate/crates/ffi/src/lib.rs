//! C interface to `petc-core`.
//!
//! Every function returns a [`PetcStatus`]; on failure the message is kept per
//! thread and can be read with [`petc_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use petc_core::config::ProjectConfig;
use petc_core::game::{earliness_update, EarlinessParams, GameState, Move};
use petc_core::lti::Vector;
use petc_core::pipeline::{abstract_all, synthesize, AbstractedLoop};
use petc_core::regions::region_of_state;
use petc_core::synth::{strategy_query, Strategy, Synthesis};
use petc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PetcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Design = 4,
    Numeric = 5,
    Abstraction = 6,
    /// Some initial state is losing; the partial strategy is still returned.
    SynthesisFailed = 7,
    /// The queried state is outside the winning set.
    NotWinning = 8,
    Io = 9,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 10,
    /// The project must be abstracted first.
    NotAbstracted = 11,
    Internal = 12,
}

/// A loaded project configuration and, once computed, its abstraction.
pub struct PetcProject {
    config: ProjectConfig,
    loops: Option<Vec<AbstractedLoop>>,
}

/// A scheduler strategy: the allowed moves of every winning state.
pub struct PetcStrategy {
    inner: Strategy,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: PetcStatus, msg: impl Into<String>) -> PetcStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> PetcStatus {
    match e {
        Error::Input(_) | Error::Contract(_) => PetcStatus::InvalidInput,
        Error::Config(_) => PetcStatus::Config,
        Error::Design(_) => PetcStatus::Design,
        Error::Numeric(_) => PetcStatus::Numeric,
        Error::Abstraction(_) => PetcStatus::Abstraction,
        Error::Query(_) => PetcStatus::NotWinning,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => PetcStatus::Io,
        Error::Soundness(_) => PetcStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<PetcStatus, Error>) -> PetcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(e)) => fail(status_of(&e), e.to_string()),
        Err(_) => fail(PetcStatus::Internal, "panic inside petc"),
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Error> {
    if s.is_null() {
        return Err(Error::input(format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Error::input(format!("{what} is not UTF-8")))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(PetcStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Copies the last error message of this thread into `buf` (NUL-terminated)
/// and stores its length, without the terminator, in `len`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes or be null with `cap == 0`;
/// `len` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_last_error(buf: *mut c_char, cap: usize, len: *mut usize) -> PetcStatus {
    if len.is_null() {
        return PetcStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        *len = msg.len();
        if cap <= msg.len() || buf.is_null() {
            return PetcStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
        *buf.add(msg.len()) = 0;
        PetcStatus::Ok
    })
}

/// Parses a project configuration from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_project_from_toml(toml: *const c_char, out: *mut *mut PetcProject) -> PetcStatus {
    non_null!(out);
    guard(|| {
        let config = ProjectConfig::from_toml(str_arg(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(PetcProject { config, loops: None }));
        Ok(PetcStatus::Ok)
    })
}

/// Loads a project configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_project_load(path: *const c_char, out: *mut *mut PetcProject) -> PetcStatus {
    non_null!(out);
    guard(|| {
        let config = ProjectConfig::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(PetcProject { config, loops: None }));
        Ok(PetcStatus::Ok)
    })
}

/// # Safety
/// `project` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn petc_project_free(project: *mut PetcProject) {
    if !project.is_null() {
        drop(Box::from_raw(project));
    }
}

/// # Safety
/// `project` must be a live handle and `n` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_project_num_loops(project: *const PetcProject, n: *mut usize) -> PetcStatus {
    non_null!(project, n);
    *n = (*project).config.loops.len();
    PetcStatus::Ok
}

/// Computes regions, transition relations and traffic models of every loop.
///
/// # Safety
/// `project` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn petc_project_abstract(project: *mut PetcProject) -> PetcStatus {
    non_null!(project);
    guard(|| {
        let p = &mut *project;
        p.loops = Some(abstract_all(&p.config)?);
        Ok(PetcStatus::Ok)
    })
}

fn loop_of(p: &PetcProject, loop_id: usize) -> Result<&AbstractedLoop, PetcStatus> {
    let loops = p.loops.as_ref().ok_or_else(|| fail(PetcStatus::NotAbstracted, "project is not abstracted"))?;
    loop_id
        .checked_sub(1)
        .and_then(|i| loops.get(i))
        .ok_or_else(|| fail(PetcStatus::InvalidInput, format!("no loop {loop_id}")))
}

/// Region range `[k_min, k_max]` of loop `loop_id` (1-based).
///
/// # Safety
/// `project` must be a live handle; `k_min` and `k_max` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_project_region_bounds(
    project: *const PetcProject,
    loop_id: usize,
    k_min: *mut usize,
    k_max: *mut usize,
) -> PetcStatus {
    non_null!(project, k_min, k_max);
    match loop_of(&*project, loop_id) {
        Ok(l) => {
            *k_min = l.prepared.spec.k_min;
            *k_max = l.prepared.spec.k_max;
            PetcStatus::Ok
        }
        Err(s) => s,
    }
}

/// Trigger and early edge counts of loop `loop_id` (1-based).
///
/// # Safety
/// `project` must be a live handle; `trigger` and `early` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_project_edge_counts(
    project: *const PetcProject,
    loop_id: usize,
    trigger: *mut usize,
    early: *mut usize,
) -> PetcStatus {
    non_null!(project, trigger, early);
    match loop_of(&*project, loop_id) {
        Ok(l) => {
            *trigger = l.model.trigger_edges.len();
            *early = l.model.early_edges.len();
            PetcStatus::Ok
        }
        Err(s) => s,
    }
}

/// Region index of the held state `x` (length `n`) for loop `loop_id`.
///
/// # Safety
/// `project` must be a live handle, `x` must point to `n` doubles and
/// `region` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_region_of_state(
    project: *const PetcProject,
    loop_id: usize,
    x: *const f64,
    n: usize,
    region: *mut usize,
) -> PetcStatus {
    non_null!(project, x, region);
    let l = match loop_of(&*project, loop_id) {
        Ok(l) => l,
        Err(s) => return s,
    };
    guard(|| {
        let v = Vector::from_column_slice(std::slice::from_raw_parts(x, n));
        *region = region_of_state(&v, &l.prepared.tables, &l.prepared.spec)?;
        Ok(PetcStatus::Ok)
    })
}

/// Builds and solves the scheduling game. On `SynthesisFailed` the strategy
/// over the winning states is still stored in `out`.
///
/// # Safety
/// `project` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_project_synthesize(project: *const PetcProject, out: *mut *mut PetcStrategy) -> PetcStatus {
    non_null!(project, out);
    let p = &*project;
    let Some(loops) = p.loops.as_ref() else {
        return fail(PetcStatus::NotAbstracted, "project is not abstracted");
    };
    guard(|| {
        let models: Vec<_> = loops.iter().map(|l| l.model.clone()).collect();
        let (_, result, report) = synthesize(&p.config, &models)?;
        let status = match &result {
            Synthesis::Winning(_) => PetcStatus::Ok,
            Synthesis::Failure { .. } => {
                set_error(format!("{} initial states are losing", report.losing_initial.len()));
                PetcStatus::SynthesisFailed
            }
        };
        *out = Box::into_raw(Box::new(PetcStrategy { inner: result.strategy().clone() }));
        Ok(status)
    })
}

/// # Safety
/// `strategy` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn petc_strategy_free(strategy: *mut PetcStrategy) {
    if !strategy.is_null() {
        drop(Box::from_raw(strategy));
    }
}

/// Number of winning states.
///
/// # Safety
/// `strategy` must be a live handle and `n` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_strategy_winning_len(strategy: *const PetcStrategy, n: *mut usize) -> PetcStatus {
    non_null!(strategy, n);
    *n = (*strategy).inner.winning_len();
    PetcStatus::Ok
}

/// Writes the strategy in its line format.
///
/// # Safety
/// `strategy` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn petc_strategy_write(strategy: *const PetcStrategy, path: *const c_char) -> PetcStatus {
    non_null!(strategy);
    guard(|| {
        let file = File::create(str_arg(path, "path")?)?;
        (*strategy).inner.write(BufWriter::new(file))?;
        Ok(PetcStatus::Ok)
    })
}

/// Reads a strategy file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_strategy_read(path: *const c_char, out: *mut *mut PetcStrategy) -> PetcStatus {
    non_null!(out);
    guard(|| {
        let file = File::open(str_arg(path, "path")?)?;
        let inner = Strategy::read(BufReader::new(file))?;
        *out = Box::into_raw(Box::new(PetcStrategy { inner }));
        Ok(PetcStatus::Ok)
    })
}

/// Allowed moves at `state`, given in the strategy file syntax
/// (`"6,4 5,1 idle:0 0"`). Moves are encoded as `0` for waiting and `l` for
/// an early communication of loop `l` (1-based). At most `cap` moves are
/// written to `moves`; `n` receives the total count.
///
/// # Safety
/// `strategy` must be a live handle, `state` a NUL-terminated string,
/// `moves` must point to `cap` writable slots (or be null with `cap == 0`)
/// and `n` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_strategy_query(
    strategy: *const PetcStrategy,
    state: *const c_char,
    moves: *mut u32,
    cap: usize,
    n: *mut usize,
) -> PetcStatus {
    non_null!(strategy, n);
    guard(|| {
        let s: GameState = str_arg(state, "state")?.parse()?;
        let allowed = strategy_query(&(*strategy).inner, &s)?;
        *n = allowed.len();
        if allowed.len() > cap || (moves.is_null() && !allowed.is_empty()) {
            set_error(format!("{} moves do not fit in {cap} slots", allowed.len()));
            return Ok(PetcStatus::BufferTooSmall);
        }
        for (i, mv) in allowed.iter().enumerate() {
            *moves.add(i) = match mv {
                Move::Wait => 0,
                Move::Early(l) => *l as u32 + 1,
            };
        }
        Ok(PetcStatus::Ok)
    })
}

/// `e' = clamp(e + r(i − k) − e_ref, 0, bound)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn petc_earliness_update(
    e: u32,
    i: usize,
    k: usize,
    r: u32,
    e_ref: u32,
    bound: u32,
    out: *mut u32,
) -> PetcStatus {
    non_null!(out);
    guard(|| {
        *out = earliness_update(e, i, k, &EarlinessParams::new(r, e_ref, bound)?)?;
        Ok(PetcStatus::Ok)
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn petc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
