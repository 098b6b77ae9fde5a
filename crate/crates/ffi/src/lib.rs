//! C ABI for layoutrank.
//!
//! Objects are opaque handles created by `*_open` and released by `*_free`.
//! Every fallible function returns an [`LrStatus`]; on failure a description
//! is available from [`lr_last_error_message`] on the same thread.
//!
//! Strings passed in must be NUL-terminated UTF-8. Strings handed out are
//! owned by the library and stay valid until the next call on the same handle
//! (or, for the error message, the next failing call on the same thread).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use layoutrank::dom::Viewport;
use layoutrank::features::FeatureSchema;
use layoutrank::graph::build_layout_graph;
use layoutrank::metrics::{self, GsbCounts};
use layoutrank::model::{encode_graph, score_graphs, Checkpoint, ModelParams};
use layoutrank::pipeline;
use layoutrank::store::ScoreStore;
use layoutrank::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed input file or document.
    Parse = 4,
    SchemaMismatch = 5,
    UnsupportedVersion = 6,
    InvalidArgument = 7,
    NotFound = 8,
    /// The metric is undefined for this input (for example a single class).
    Undefined = 9,
    Internal = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> LrStatus {
    match err {
        Error::Io { .. } => LrStatus::Io,
        Error::Json(_) | Error::Schema { .. } | Error::EmptyDocument | Error::Data(_) => {
            LrStatus::Parse
        }
        Error::SchemaMismatch { .. } => LrStatus::SchemaMismatch,
        Error::Version { .. } => LrStatus::UnsupportedVersion,
        Error::LengthMismatch(..)
        | Error::BadWeight(_)
        | Error::Config(_)
        | Error::ShortList { .. } => LrStatus::InvalidArgument,
        Error::NoComparablePairs | Error::SingleClass | Error::EmptyCounts => LrStatus::Undefined,
        _ => LrStatus::Internal,
    }
}

struct Failure(LrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            LrStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LrStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failure on this thread, or null if none.
#[no_mangle]
pub extern "C" fn lr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn lr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// scorer

/// A trained model bound to its feature schema.
pub struct LrScorer {
    checkpoint: Checkpoint,
    params: ModelParams,
    schema: FeatureSchema,
    viewport: Viewport,
    model_version: CString,
}

/// Loads a checkpoint and the feature schema it was trained with.
///
/// # Safety
/// Paths must be valid C strings; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn lr_scorer_open(
    checkpoint_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut LrScorer,
) -> LrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let checkpoint = Checkpoint::load(str_arg(checkpoint_path, "checkpoint_path")?)?;
        let schema = FeatureSchema::load(str_arg(schema_path, "schema_path")?)?;
        checkpoint.check_schema(&schema)?;
        let params = checkpoint.params()?;
        let model_version = CString::new(checkpoint.hash()).expect("hex hash");
        *out = Box::into_raw(Box::new(LrScorer {
            checkpoint,
            params,
            schema,
            viewport: Viewport::default(),
            model_version,
        }));
        Ok(())
    })
}

/// Sets the viewport used to lay out subsequently scored pages.
///
/// # Safety
/// `scorer` must come from [`lr_scorer_open`].
#[no_mangle]
pub unsafe extern "C" fn lr_scorer_set_viewport(
    scorer: *mut LrScorer,
    width: f64,
    height: f64,
) -> LrStatus {
    guard(|| {
        let s = out_arg(scorer, "scorer")?;
        if !(width.is_finite() && width > 0.0 && height.is_finite() && height > 0.0) {
            return Err(Failure(
                LrStatus::InvalidArgument,
                format!("bad viewport {width}x{height}"),
            ));
        }
        s.viewport = Viewport { width, height };
        Ok(())
    })
}

/// Scores one HTML document. The result is in `[0, 1]`.
///
/// # Safety
/// `scorer` must come from [`lr_scorer_open`]; strings must be valid C
/// strings; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_scorer_score_html(
    scorer: *const LrScorer,
    html: *const c_char,
    url: *const c_char,
    category: *const c_char,
    score: *mut f64,
) -> LrStatus {
    guard(|| {
        let s = scorer.as_ref().ok_or_else(|| null("scorer"))?;
        let score = out_arg(score, "score")?;
        let tree = pipeline::ingest_html(
            str_arg(html, "html")?,
            str_arg(url, "url")?,
            str_arg(category, "category")?,
            s.viewport,
        )?;
        let graph = encode_graph(&build_layout_graph(&tree), &s.schema);
        *score = score_graphs(&s.params, &s.checkpoint.config, &[graph], 1)?[0];
        Ok(())
    })
}

/// Hash identifying the checkpoint; owned by the scorer.
///
/// # Safety
/// `scorer` must come from [`lr_scorer_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn lr_scorer_model_version(scorer: *const LrScorer) -> *const c_char {
    scorer
        .as_ref()
        .map_or(ptr::null(), |s| s.model_version.as_ptr())
}

/// # Safety
/// `scorer` must come from [`lr_scorer_open`] or be null; it is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn lr_scorer_free(scorer: *mut LrScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

// ---------------------------------------------------------------------------
// score store

/// Read-only view of a score store file.
pub struct LrScoreStore {
    store: ScoreStore,
}

/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_store_open(
    path: *const c_char,
    out: *mut *mut LrScoreStore,
) -> LrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let store = ScoreStore::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(LrScoreStore { store }));
        Ok(())
    })
}

/// Number of urls in the store; 0 for a null handle.
///
/// # Safety
/// `store` must come from [`lr_store_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn lr_store_len(store: *const LrScoreStore) -> usize {
    store.as_ref().map_or(0, |s| s.store.len())
}

/// Looks up a url. Returns `NotFound` (and leaves `score` untouched) when the
/// url is absent.
///
/// # Safety
/// `store` must come from [`lr_store_open`]; `url` must be a valid C string;
/// `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_store_get(
    store: *const LrScoreStore,
    url: *const c_char,
    score: *mut f64,
) -> LrStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| null("store"))?;
        let score = out_arg(score, "score")?;
        let url = str_arg(url, "url")?;
        *score = s
            .store
            .get(url)
            .ok_or_else(|| Failure(LrStatus::NotFound, format!("{url} is not in the store")))?;
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`lr_store_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn lr_store_free(store: *mut LrScoreStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

// ---------------------------------------------------------------------------
// metrics

/// ROC AUC with ties counted as one half.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> LrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = metrics::auc(
            slice_arg(scores, n, "scores")?,
            slice_arg(labels, n, "labels")?,
        )?;
        Ok(())
    })
}

/// Positive-negative ratio. Writes `+inf` when no pair is discordant and NaN
/// when every comparable pair is tied.
///
/// # Safety
/// As for [`lr_auc`].
#[no_mangle]
pub unsafe extern "C" fn lr_pnr(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> LrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = metrics::pnr(
            slice_arg(scores, n, "scores")?,
            slice_arg(labels, n, "labels")?,
        )?
        .value();
        Ok(())
    })
}

/// DCG over the first `p` grades of one ranked list.
///
/// # Safety
/// `grades` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_dcg(grades: *const u8, n: usize, p: usize, out: *mut f64) -> LrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if n < p {
            return Err(Failure(
                LrStatus::InvalidArgument,
                format!("list of {n} grades is shorter than {p}"),
            ));
        }
        *out = metrics::dcg(slice_arg(grades, n, "grades")?, p);
        Ok(())
    })
}

/// (good - bad) / (good + same + bad).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_gsb(good: u64, same: u64, bad: u64, out: *mut f64) -> LrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = metrics::gsb(GsbCounts { good, same, bad })?;
        Ok(())
    })
}
