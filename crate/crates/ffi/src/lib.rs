//! C ABI over the `ocrchain` scoring core.
//!
//! Every fallible call returns an [`OcrStatus`] and writes its result through
//! an out-pointer. On failure, [`ocr_last_error`] describes the most recent
//! error on the calling thread. Strings handed out by this library must be
//! released with [`ocr_string_free`]; handles with their own `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ocrchain::chain::{parse_chain, render_chain, ReasoningChain};
use ocrchain::formula::cdm_proxy;
use ocrchain::table::{steds, teds};
use ocrchain::text::{exact_match, ned};
use ocrchain::{format_reward, RewardEngine, TaskKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Ground-truth HTML has no table.
    NoTable = 4,
    /// The chain is not well formed; the last error holds the violations.
    InvalidChain = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcrTask {
    Seal = 0,
    Table = 1,
    Formula = 2,
}

impl From<OcrTask> for TaskKind {
    fn from(t: OcrTask) -> Self {
        match t {
            OcrTask::Seal => TaskKind::Seal,
            OcrTask::Table => TaskKind::Table,
            OcrTask::Formula => TaskKind::Formula,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcrRewardScore {
    pub format_reward: f64,
    pub accuracy_reward: f64,
    pub total: f64,
}

/// Chain sections, for [`ocr_chain_section`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcrSection {
    Think = 0,
    Tool = 1,
    Rethink = 2,
    Answer = 3,
}

/// Opaque reward engine.
pub struct OcrRewardEngine {
    inner: RewardEngine,
}

/// Opaque parsed chain.
pub struct OcrChain {
    inner: ReasoningChain,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(OcrStatus);

fn fail(status: OcrStatus, msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(status)
}

/// Runs `f` with panics and errors mapped to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OcrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OcrStatus::Ok,
        Ok(Err(Fail(status))) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OcrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(OcrStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(OcrStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(fail(OcrStatus::NullPointer, "out pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn owned_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ocr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn ocr_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ocr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocr_reward_engine_new(strict_gating: bool, out: *mut *mut OcrRewardEngine) -> OcrStatus {
    guard(|| {
        let engine = Box::new(OcrRewardEngine { inner: RewardEngine::default().strict(strict_gating) });
        write_out(out, Box::into_raw(engine))
    })
}

/// # Safety
/// `engine` must come from [`ocr_reward_engine_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ocr_reward_engine_free(engine: *mut OcrRewardEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Scores one rollout against its ground truth.
///
/// # Safety
/// `engine` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_reward_engine_score(
    engine: *const OcrRewardEngine,
    task: OcrTask,
    rollout: *const c_char,
    gt: *const c_char,
    out: *mut OcrRewardScore,
) -> OcrStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| fail(OcrStatus::NullPointer, "engine is null"))?;
        let rollout = str_arg(rollout, "rollout")?;
        let gt = str_arg(gt, "gt")?;
        let s = engine.inner.score_rollout(task.into(), rollout, gt);
        write_out(out, OcrRewardScore { format_reward: s.format_reward, accuracy_reward: s.accuracy_reward, total: s.total })
    })
}

/// 1.0 for a well-formed chain, else 0.0.
///
/// # Safety
/// `raw` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_format_reward(raw: *const c_char, out: *mut f64) -> OcrStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        write_out(out, format_reward(raw))
    })
}

/// TEDS, or STEDS when `structure_only`. An unparseable prediction scores 0.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_teds(
    pred_html: *const c_char,
    gt_html: *const c_char,
    structure_only: bool,
    out: *mut f64,
) -> OcrStatus {
    guard(|| {
        let pred = str_arg(pred_html, "pred_html")?;
        let gt = str_arg(gt_html, "gt_html")?;
        let score = if structure_only { steds(pred, gt) } else { teds(pred, gt) };
        let score = score.map_err(|e| fail(OcrStatus::NoTable, e.to_string()))?;
        write_out(out, score.value)
    })
}

/// Normalized edit distance over characters.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_ned(pred: *const c_char, gt: *const c_char, out: *mut f64) -> OcrStatus {
    guard(|| {
        let pred = str_arg(pred, "pred")?;
        let gt = str_arg(gt, "gt")?;
        write_out(out, ned(pred, gt).value)
    })
}

/// 1.0 when the strings match after NFC and trimming, else 0.0.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_exact_match(pred: *const c_char, gt: *const c_char, out: *mut f64) -> OcrStatus {
    guard(|| {
        let pred = str_arg(pred, "pred")?;
        let gt = str_arg(gt, "gt")?;
        write_out(out, exact_match(pred, gt))
    })
}

/// Token-level formula match score in [0, 1].
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_cdm_proxy(pred: *const c_char, gt: *const c_char, out: *mut f64) -> OcrStatus {
    guard(|| {
        let pred = str_arg(pred, "pred")?;
        let gt = str_arg(gt, "gt")?;
        write_out(out, cdm_proxy(pred, gt).value)
    })
}

/// Parses a chain. On [`OcrStatus::InvalidChain`] the last error holds the
/// violations as JSON.
///
/// # Safety
/// `raw` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_chain_parse(raw: *const c_char, out: *mut *mut OcrChain) -> OcrStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        match parse_chain(raw) {
            Ok(chain) => write_out(out, Box::into_raw(Box::new(OcrChain { inner: chain }))),
            Err(verdict) => {
                let json = serde_json::to_string(&verdict).unwrap_or_default();
                Err(fail(OcrStatus::InvalidChain, json))
            }
        }
    })
}

/// # Safety
/// `chain` must come from [`ocr_chain_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ocr_chain_free(chain: *mut OcrChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of `<tool>` blocks.
///
/// # Safety
/// `chain` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ocr_chain_tool_count(chain: *const OcrChain, out: *mut usize) -> OcrStatus {
    guard(|| {
        let chain = chain.as_ref().ok_or_else(|| fail(OcrStatus::NullPointer, "chain is null"))?;
        write_out(out, chain.inner.tool_blocks.len())
    })
}

/// Copies a section body into a new string. `index` selects the tool block
/// and must be 0 for the other sections.
///
/// # Safety
/// `chain` live; `out` writable. Free the result with [`ocr_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ocr_chain_section(
    chain: *const OcrChain,
    section: OcrSection,
    index: usize,
    out: *mut *mut c_char,
) -> OcrStatus {
    guard(|| {
        let chain = &chain.as_ref().ok_or_else(|| fail(OcrStatus::NullPointer, "chain is null"))?.inner;
        let body = match section {
            OcrSection::Tool => chain.tool_blocks.get(index).map(String::as_str),
            _ if index != 0 => None,
            OcrSection::Think => Some(chain.think.as_str()),
            OcrSection::Rethink => Some(chain.rethink.as_str()),
            OcrSection::Answer => Some(chain.answer.as_str()),
        };
        let body = body.ok_or_else(|| fail(OcrStatus::InvalidArgument, format!("no section at index {index}")))?;
        write_out(out, owned_c_string(body))
    })
}

/// Canonical text of a chain.
///
/// # Safety
/// `chain` live; `out` writable. Free the result with [`ocr_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ocr_chain_render(chain: *const OcrChain, out: *mut *mut c_char) -> OcrStatus {
    guard(|| {
        let chain = chain.as_ref().ok_or_else(|| fail(OcrStatus::NullPointer, "chain is null"))?;
        write_out(out, owned_c_string(&render_chain(&chain.inner)))
    })
}
