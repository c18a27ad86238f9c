//! C interface to the tagesim predictor, branch history model and
//! search-space estimators.
//!
//! Every function returns a [`TsStatus`]. On failure a message is kept
//! per thread and can be read with [`ts_last_error_message`]. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tagesim::bhr::{BhrModel, BhrState, BranchEvent};
use tagesim::stats;
use tagesim::tage::{Privilege, SecurityContext, TageConfig, TageError, TagePredictor};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    WidthMismatch = 4,
    UpdateWithoutPredict = 5,
    Panic = 6,
}

/// Core type whose history model or predictor sizing is used.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsPreset {
    Firestorm = 0,
    Icestorm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsBranchKind {
    ConditionalTaken = 0,
    ConditionalNotTaken = 1,
    IndirectTaken = 2,
    DirectUnconditional = 3,
}

/// One executed branch. `imm` is the signed word offset of a conditional;
/// `target` is used by indirect and direct branches.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsBranchEvent {
    pub kind: TsBranchKind,
    pub pc: u64,
    pub target: u64,
    pub imm: i32,
}

/// Execution context used for security tags.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsContext {
    /// 0 for user mode, 1 for kernel mode.
    pub exception_level: u8,
    pub process_id: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsPrediction {
    pub taken: bool,
    /// 0 for the base predictor, 1..=T for tagged tables.
    pub provider: u32,
    pub alt_taken: bool,
    pub alt_provider: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TsEstimate {
    pub exponent: i32,
    /// Natural log of the Chernoff bound at `exponent`.
    pub chernoff_log_bound: f64,
    /// Set when no success was observed; `exponent` is then a lower bound.
    pub lower_bound_only: bool,
}

/// Opaque predictor handle.
pub struct TsPredictor {
    inner: TagePredictor,
}

/// Opaque branch history register handle.
pub struct TsHistory {
    model: BhrModel,
    state: BhrState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: TsStatus, msg: impl Into<String>) -> TsStatus {
    set_error(msg.into());
    status
}

fn tage_status(e: TageError) -> TsStatus {
    let status = match e {
        TageError::InvalidConfig(_) | TageError::TableIndex { .. } => TsStatus::InvalidConfig,
        TageError::UpdateWithoutPredict => TsStatus::UpdateWithoutPredict,
        TageError::WidthMismatch { .. } => TsStatus::WidthMismatch,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into [`TsStatus::Panic`].
fn guard(f: impl FnOnce() -> TsStatus) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(TsStatus::Panic, "internal panic"),
    }
}

macro_rules! deref {
    ($p:expr, $what:literal) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(TsStatus::NullPointer, concat!($what, " is null")),
        }
    };
}

macro_rules! deref_mut {
    ($p:expr, $what:literal) => {
        match $p.as_mut() {
            Some(v) => v,
            None => return fail(TsStatus::NullPointer, concat!($what, " is null")),
        }
    };
}

fn context(c: TsContext) -> Result<SecurityContext, TsStatus> {
    let privilege = match c.exception_level {
        0 => Privilege::El0,
        1 => Privilege::El1,
        el => return Err(fail(TsStatus::InvalidArgument, format!("exception level {el} not 0 or 1"))),
    };
    Ok(SecurityContext::new(privilege, c.process_id))
}

fn event(e: TsBranchEvent) -> Result<BranchEvent, TsStatus> {
    let r = match e.kind {
        TsBranchKind::ConditionalTaken => BranchEvent::conditional(e.pc, e.imm, true),
        TsBranchKind::ConditionalNotTaken => BranchEvent::conditional(e.pc, e.imm, false),
        TsBranchKind::IndirectTaken => BranchEvent::indirect(e.pc, e.target),
        TsBranchKind::DirectUnconditional => BranchEvent::direct(e.pc, e.target),
    };
    r.map_err(|err| fail(TsStatus::InvalidArgument, err.to_string()))
}

fn prediction(p: tagesim::tage::Prediction) -> TsPrediction {
    TsPrediction {
        taken: p.taken,
        provider: p.provider as u32,
        alt_taken: p.alt_taken,
        alt_provider: p.alt_provider as u32,
    }
}

/// Message describing the last failure on this thread, or null.
///
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a predictor with the preset's sizing.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_new(preset: TsPreset, seed: u64, out: *mut *mut TsPredictor) -> TsStatus {
    guard(|| {
        let out = deref_mut!(out, "out");
        let cfg = match preset {
            TsPreset::Firestorm => TageConfig::firestorm(),
            TsPreset::Icestorm => TageConfig::icestorm(),
        };
        match TagePredictor::new(cfg, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TsPredictor { inner }));
                TsStatus::Ok
            }
            Err(e) => tage_status(e),
        }
    })
}

/// Creates a predictor from a JSON predictor config.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer
/// to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_from_json(
    json: *const c_char,
    seed: u64,
    out: *mut *mut TsPredictor,
) -> TsStatus {
    guard(|| {
        if json.is_null() {
            return fail(TsStatus::NullPointer, "json is null");
        }
        let out = deref_mut!(out, "out");
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => return fail(TsStatus::InvalidArgument, "json is not utf-8"),
        };
        let cfg: TageConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(TsStatus::InvalidConfig, e.to_string()),
        };
        match TagePredictor::new(cfg, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TsPredictor { inner }));
                TsStatus::Ok
            }
            Err(e) => tage_status(e),
        }
    })
}

/// Releases a predictor. Null is ignored.
///
/// # Safety
/// `p` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_free(p: *mut TsPredictor) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Clears every table and the base predictor.
///
/// # Safety
/// `p` must be null or a live predictor handle.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_reset(p: *mut TsPredictor) -> TsStatus {
    guard(|| {
        deref_mut!(p, "predictor").inner.reset();
        TsStatus::Ok
    })
}

/// Number of tagged tables.
///
/// # Safety
/// `p` must be null or a live predictor handle; `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_num_tables(p: *const TsPredictor, out: *mut u32) -> TsStatus {
    guard(|| {
        let p = deref!(p, "predictor");
        *deref_mut!(out, "out") = p.inner.num_tables() as u32;
        TsStatus::Ok
    })
}

fn checked<'a>(p: &TsPredictor, h: &'a TsHistory) -> Result<&'a BhrState, TsStatus> {
    p.inner.check_width(h.state.width()).map_err(tage_status)?;
    Ok(&h.state)
}

/// Predicts the branch at `pc` under the history; the next
/// [`ts_predictor_update`] must be for the same branch, history and context.
///
/// # Safety
/// Handles must be null or live; `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_predict(
    p: *mut TsPredictor,
    pc: u64,
    h: *const TsHistory,
    ctx: TsContext,
    out: *mut TsPrediction,
) -> TsStatus {
    guard(|| {
        let p = deref_mut!(p, "predictor");
        let h = deref!(h, "history");
        let out = deref_mut!(out, "out");
        let ctx = match context(ctx) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let bhr = match checked(p, h) {
            Ok(b) => *b,
            Err(s) => return s,
        };
        *out = prediction(p.inner.predict(pc, &bhr, ctx));
        TsStatus::Ok
    })
}

/// Trains the predictor with the resolved outcome of the last predicted
/// branch. `mispredicted` may be null.
///
/// # Safety
/// Handles must be null or live; `mispredicted` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_update(
    p: *mut TsPredictor,
    pc: u64,
    h: *const TsHistory,
    taken: bool,
    ctx: TsContext,
    mispredicted: *mut bool,
) -> TsStatus {
    guard(|| {
        let p = deref_mut!(p, "predictor");
        let h = deref!(h, "history");
        let ctx = match context(ctx) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let bhr = match checked(p, h) {
            Ok(b) => *b,
            Err(s) => return s,
        };
        match p.inner.update(pc, &bhr, taken, ctx) {
            Ok(info) => {
                if let Some(m) = mispredicted.as_mut() {
                    *m = info.mispredicted;
                }
                TsStatus::Ok
            }
            Err(e) => tage_status(e),
        }
    })
}

/// Table that would provide the prediction, without changing state.
///
/// # Safety
/// Handles must be null or live; `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ts_predictor_provider_of(
    p: *const TsPredictor,
    pc: u64,
    h: *const TsHistory,
    ctx: TsContext,
    out: *mut u32,
) -> TsStatus {
    guard(|| {
        let p = deref!(p, "predictor");
        let h = deref!(h, "history");
        let out = deref_mut!(out, "out");
        let ctx = match context(ctx) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let bhr = match checked(p, h) {
            Ok(b) => *b,
            Err(s) => return s,
        };
        *out = p.inner.provider_of(pc, &bhr, ctx) as u32;
        TsStatus::Ok
    })
}

/// Creates an all-zero history register for the preset's model.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ts_history_new(preset: TsPreset, out: *mut *mut TsHistory) -> TsStatus {
    guard(|| {
        let out = deref_mut!(out, "out");
        let model = match preset {
            TsPreset::Firestorm => BhrModel::firestorm(),
            TsPreset::Icestorm => BhrModel::icestorm(),
        };
        let state = model.zero_state();
        *out = Box::into_raw(Box::new(TsHistory { model, state }));
        TsStatus::Ok
    })
}

/// Releases a history. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ts_history_free(h: *mut TsHistory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Applies one executed branch to the history.
///
/// # Safety
/// `h` must be null or a live history handle.
#[no_mangle]
pub unsafe extern "C" fn ts_history_push(h: *mut TsHistory, e: TsBranchEvent) -> TsStatus {
    guard(|| {
        let h = deref_mut!(h, "history");
        let e = match event(e) {
            Ok(e) => e,
            Err(s) => return s,
        };
        h.model.apply(&mut h.state, &e);
        TsStatus::Ok
    })
}

/// Resets the history to all zeros.
///
/// # Safety
/// `h` must be null or a live history handle.
#[no_mangle]
pub unsafe extern "C" fn ts_history_clear(h: *mut TsHistory) -> TsStatus {
    guard(|| {
        let h = deref_mut!(h, "history");
        h.state = h.model.zero_state();
        TsStatus::Ok
    })
}

/// History width in bits.
///
/// # Safety
/// `h` must be null or a live history handle; `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ts_history_width(h: *const TsHistory, out: *mut u32) -> TsStatus {
    guard(|| {
        let h = deref!(h, "history");
        *deref_mut!(out, "out") = h.state.width() as u32;
        TsStatus::Ok
    })
}

/// Value of history bit `i`; bit 0 is the youngest.
///
/// # Safety
/// `h` must be null or a live history handle; `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ts_history_bit(h: *const TsHistory, i: u32, out: *mut bool) -> TsStatus {
    guard(|| {
        let h = deref!(h, "history");
        let out = deref_mut!(out, "out");
        if i as usize >= h.state.width() {
            return fail(TsStatus::InvalidArgument, format!("bit {i} outside history width {}", h.state.width()));
        }
        *out = h.state.bit(i as usize);
        TsStatus::Ok
    })
}

/// Search-space exponent from `successes` out of `trials`.
///
/// # Safety
/// `out` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_estimate_search_space(trials: u64, successes: u64, out: *mut TsEstimate) -> TsStatus {
    guard(|| {
        let out = deref_mut!(out, "out");
        match stats::estimate_search_space(trials, successes) {
            Ok(e) => {
                *out = TsEstimate {
                    exponent: e.exponent,
                    chernoff_log_bound: e.chernoff_log_bound,
                    lower_bound_only: e.lower_bound_only,
                };
                TsStatus::Ok
            }
            Err(e) => fail(TsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Success probability of one brute-force trial against a victim served
/// by table `i` of `t`, with per-table aliasing probability `p`.
///
/// # Safety
/// `out` must be null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_p_succ(p: f64, i: u32, t: u32, out: *mut f64) -> TsStatus {
    guard(|| {
        let out = deref_mut!(out, "out");
        match stats::p_succ(p, i, t) {
            Ok(v) => {
                *out = v;
                TsStatus::Ok
            }
            Err(e) => fail(TsStatus::InvalidArgument, e.to_string()),
        }
    })
}
