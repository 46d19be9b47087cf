//! C interface to a trained tracker.
//!
//! Handles are opaque pointers created and destroyed only through this
//! library. Every fallible call returns an [`XlnbtStatus`]; on failure the
//! message is available from [`xlnbt_last_error_message`] on the same thread
//! until the next failing call there. Strings returned to the caller are
//! released with [`xlnbt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use xlnbt::cli::parse_acts;
use xlnbt::corpus::{load_embeddings, load_ontology, utterance_of};
use xlnbt::eval::Tracker;
use xlnbt::model::{Lexicon, NbtModel, ScoreTable};
use xlnbt::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XlnbtStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Bad input: not UTF-8, malformed acts, unknown terms, mismatched sizes.
    InvalidArgument = 2,
    /// A file could not be read.
    Io = 3,
    /// A file was read but its contents are malformed.
    Format = 4,
    /// Any other failure inside the tracker.
    Runtime = 5,
    /// A bug: the library panicked. The handle involved should be dropped.
    Panic = 6,
}

/// A loaded model with its embeddings and ontology.
pub struct XlnbtModel {
    inner: Arc<Loaded>,
}

struct Loaded {
    model: NbtModel,
    lexicon: Lexicon,
}

/// Tracking state of one dialog. Keeps its model alive on its own.
pub struct XlnbtTracker {
    model: Arc<Loaded>,
    prior: ScoreTable,
}

struct Failure(XlnbtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => XlnbtStatus::Io,
            Error::Format { .. } | Error::Json(_) => XlnbtStatus::Format,
            Error::InvalidArgument(_)
            | Error::Shape(_)
            | Error::Ontology(_)
            | Error::UnmappedTerm { .. }
            | Error::EmptyUtterance
            | Error::UtteranceTooLong { .. } => XlnbtStatus::InvalidArgument,
            _ => XlnbtStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> XlnbtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XlnbtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            XlnbtStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(XlnbtStatus::NullArgument, format!("`{name}` is null"))
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(XlnbtStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn xlnbt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn xlnbt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint together with the embeddings and ontology of the
/// language it will track. On success `*out` owns a new handle.
///
/// # Safety
/// The path arguments are NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn xlnbt_model_load(
    checkpoint: *const c_char,
    embeddings: *const c_char,
    ontology: *const c_char,
    out: *mut *mut XlnbtModel,
) -> XlnbtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let checkpoint = str_arg(checkpoint, "checkpoint")?;
        let embeddings = str_arg(embeddings, "embeddings")?;
        let ontology = str_arg(ontology, "ontology")?;
        let model = NbtModel::load(Path::new(checkpoint))?;
        let (table, _) = load_embeddings(Path::new(embeddings))?;
        let lexicon = Lexicon::new(Arc::new(table), load_ontology(Path::new(ontology))?)?;
        // Fails early on a width mismatch.
        Tracker::new(&model, &lexicon)?;
        let handle = XlnbtModel {
            inner: Arc::new(Loaded { model, lexicon }),
        };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Releases a model. Trackers created from it stay usable.
///
/// # Safety
/// `model` is null or a handle from [`xlnbt_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xlnbt_model_free(model: *mut XlnbtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Starts a dialog on `model`.
///
/// # Safety
/// `model` is a live model handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn xlnbt_tracker_new(model: *const XlnbtModel, out: *mut *mut XlnbtTracker) -> XlnbtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let loaded = model.inner.clone();
        let prior = Tracker::new(&loaded.model, &loaded.lexicon)?.prior().clone();
        *out = Box::into_raw(Box::new(XlnbtTracker { model: loaded, prior }));
        Ok(())
    })
}

/// Tracks one turn. `acts` is empty, `-` or `none`, or `request(slot)`
/// and/or `confirm(slot=value)` joined by `;`. On success `*state_json`
/// receives the belief state as JSON, `{"goals":{...},"requests":[...]}`,
/// to be released with [`xlnbt_string_free`]. A failed turn leaves the
/// dialog history unchanged.
///
/// # Safety
/// `tracker` is a live tracker handle; strings are NUL-terminated;
/// `state_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn xlnbt_tracker_step(
    tracker: *mut XlnbtTracker,
    acts: *const c_char,
    utterance: *const c_char,
    state_json: *mut *mut c_char,
) -> XlnbtStatus {
    guard(|| {
        if state_json.is_null() {
            return Err(null("state_json"));
        }
        *state_json = ptr::null_mut();
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        let loaded = &*t.model;
        let acts = parse_acts(str_arg(acts, "acts")?, loaded.lexicon.ontology())
            .map_err(|m| Failure(XlnbtStatus::InvalidArgument, format!("malformed acts: {m}")))?;
        let utterance = utterance_of(str_arg(utterance, "utterance")?)?;
        let mut tracker = Tracker::new(&loaded.model, &loaded.lexicon)?;
        tracker.set_prior(t.prior.clone())?;
        let (state, _) = tracker.step(&acts, &utterance)?;
        let json = serde_json::to_string(&state).map_err(Error::from)?;
        t.prior = tracker.prior().clone();
        *state_json = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Forgets the dialog history.
///
/// # Safety
/// `tracker` is null or a live tracker handle.
#[no_mangle]
pub unsafe extern "C" fn xlnbt_tracker_reset(tracker: *mut XlnbtTracker) -> XlnbtStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        t.prior = Tracker::new(&t.model.model, &t.model.lexicon)?.prior().clone();
        Ok(())
    })
}

/// # Safety
/// `tracker` is null or a handle from [`xlnbt_tracker_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xlnbt_tracker_free(tracker: *mut XlnbtTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// # Safety
/// `s` is null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xlnbt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
