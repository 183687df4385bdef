//! C interface to the sarcstance toolkit.
//!
//! Every fallible function returns an [`SsStatus`]; on failure a message is
//! available from [`ss_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_load` and released with the matching
//! `*_free`. Strings are UTF-8 and NUL-terminated. Functions that fill a
//! caller buffer report the required size (including the NUL) through
//! `needed` and return `SS_STATUS_BUFFER_TOO_SMALL` when it does not fit.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;
use std::sync::Arc;

use sarcstance::analysis::{affinity, AffinityWeights};
use sarcstance::corpus::{load_corpus, CorpusBundle, CorpusName, SarcasmLoadOptions, Task};
use sarcstance::eval::{macro_f1_favor_against, ConfusionMatrix};
use sarcstance::model::bundle::ParameterBundle;
use sarcstance::preprocess::{segment_hashtag, WordCostTable};
use sarcstance::train::{compute_class_weights, lr_at_epoch, TrainConfig};
use sarcstance::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Bundle = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Hashtag segmenter backed by a word-frequency table.
pub struct SsSegmenter {
    table: Arc<WordCostTable>,
}

/// A loaded canonical corpus.
pub struct SsCorpus {
    bundle: CorpusBundle,
}

/// A loaded parameter bundle.
pub struct SsBundle {
    bundle: ParameterBundle,
}

/// Affinity between an intermediate and a target corpus.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SsAffinity {
    pub avg_len_intermediate: f64,
    pub avg_len_target: f64,
    pub length_ratio: f64,
    pub vocab_jaccard: f64,
    pub size_ratio: f64,
    /// Composite score under the default weights.
    pub score: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::Io { .. } => SsStatus::Io,
        Error::Parse { .. }
        | Error::UnknownLabel { .. }
        | Error::DuplicateId { .. }
        | Error::NoExamples(_)
        | Error::Json(_)
        | Error::Csv(_) => SsStatus::Parse,
        Error::FingerprintMismatch { .. } | Error::Checksum { .. } | Error::Bundle(_) => SsStatus::Bundle,
        Error::Tensor(_) => SsStatus::Internal,
        _ => SsStatus::InvalidArgument,
    }
}

struct Failure(SsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: SsStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

/// Runs `f`, recording any error or panic for `ss_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SsStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SsStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(SsStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(SsStatus::NullPointer, format!("{what} is NULL")))
}

/// Copies `s` plus a NUL into `buf`, reporting the size needed.
unsafe fn write_string(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    let size = s.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = size;
    }
    if buf.is_null() || len < size {
        return Err(fail(SsStatus::BufferTooSmall, format!("buffer of {len} bytes, {size} needed")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Mean F1 of the FAVOR (0) and AGAINST (1) classes over `n` gold and
/// predicted labels in {0, 1, 2}.
#[no_mangle]
pub unsafe extern "C" fn ss_macro_f1(gold: *const u32, predicted: *const u32, n: usize, out: *mut f64) -> SsStatus {
    guard(|| {
        let gold = slice_arg(gold, n, "gold")?;
        let predicted = slice_arg(predicted, n, "predicted")?;
        let out = out_arg(out, "out")?;
        let idx = |v: &[u32]| -> Vec<usize> { v.iter().map(|&x| x as usize).collect() };
        let cm = ConfusionMatrix::from_indices(3, &idx(gold), &idx(predicted))?;
        *out = macro_f1_favor_against(&cm);
        Ok(())
    })
}

/// Inverse-frequency class weights for `n` class counts (2 for sarcasm,
/// 3 for stance), written to `out[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn ss_class_weights(counts: *const usize, n: usize, out: *mut f64) -> SsStatus {
    guard(|| {
        let task = match n {
            2 => Task::Sarcasm,
            3 => Task::Stance,
            _ => return Err(fail(SsStatus::InvalidArgument, format!("{n} classes; expected 2 or 3"))),
        };
        let counts = slice_arg(counts, n, "counts")?;
        if out.is_null() {
            return Err(fail(SsStatus::NullPointer, "out is NULL"));
        }
        let weights = compute_class_weights(task, counts)?;
        slice::from_raw_parts_mut(out, n).copy_from_slice(&weights);
        Ok(())
    })
}

/// Learning rate of 1-based `epoch` under the per-epoch exponential decay.
#[no_mangle]
pub unsafe extern "C" fn ss_lr_at_epoch(
    lr_initial: f64,
    lr_final: f64,
    max_epochs: usize,
    epoch: usize,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = TrainConfig {
            lr_initial,
            lr_final,
            max_epochs,
            min_epochs: 1.min(max_epochs),
            ..TrainConfig::default()
        };
        cfg.validate()?;
        if epoch == 0 {
            return Err(fail(SsStatus::InvalidArgument, "epochs are 1-based"));
        }
        *out = lr_at_epoch(&cfg, epoch);
        Ok(())
    })
}

/// Segmenter with the built-in English word list.
#[no_mangle]
pub extern "C" fn ss_segmenter_new() -> *mut SsSegmenter {
    Box::into_raw(Box::new(SsSegmenter {
        table: WordCostTable::english(),
    }))
}

/// Segmenter from a word list file, one word per line, most frequent first.
#[no_mangle]
pub unsafe extern "C" fn ss_segmenter_load(path: *const c_char, out: *mut *mut SsSegmenter) -> SsStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let table = Arc::new(WordCostTable::from_path(&path)?);
        *out = Box::into_raw(Box::new(SsSegmenter { table }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ss_segmenter_free(segmenter: *mut SsSegmenter) {
    if !segmenter.is_null() {
        drop(Box::from_raw(segmenter));
    }
}

/// Splits a hashtag (with or without the leading `#`) into words and writes
/// them space-separated.
#[no_mangle]
pub unsafe extern "C" fn ss_segment_hashtag(
    segmenter: *const SsSegmenter,
    tag: *const c_char,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SsStatus {
    guard(|| {
        let seg = handle(segmenter, "segmenter")?;
        let tag = str_arg(tag, "tag")?;
        let words = segment_hashtag(tag.strip_prefix('#').unwrap_or(tag), &seg.table);
        write_string(&words.join(" "), buf, len, needed)
    })
}

/// Loads a canonical corpus. `name` is one of SemEval, MPCHI, SaV2C, SARC,
/// ST; `max_rows` (0 for all) subsamples sarcasm corpora.
#[no_mangle]
pub unsafe extern "C" fn ss_corpus_load(
    path: *const c_char,
    name: *const c_char,
    max_rows: usize,
    out: *mut *mut SsCorpus,
) -> SsStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let name: CorpusName = str_arg(name, "name")?.parse()?;
        let out = out_arg(out, "out")?;
        let opts = SarcasmLoadOptions {
            max_rows: (max_rows > 0).then_some(max_rows),
            seed: 0,
        };
        let bundle = load_corpus(&path, name, &opts)?;
        *out = Box::into_raw(Box::new(SsCorpus { bundle }));
        Ok(())
    })
}

/// Number of examples, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_corpus_len(corpus: *const SsCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.bundle.len())
}

#[no_mangle]
pub unsafe extern "C" fn ss_corpus_free(corpus: *mut SsCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ss_affinity(
    intermediate: *const SsCorpus,
    target: *const SsCorpus,
    out: *mut SsAffinity,
) -> SsStatus {
    guard(|| {
        let a = handle(intermediate, "intermediate")?;
        let b = handle(target, "target")?;
        let out = out_arg(out, "out")?;
        let p = affinity(&a.bundle, &b.bundle)?;
        *out = SsAffinity {
            avg_len_intermediate: p.avg_len_intermediate,
            avg_len_target: p.avg_len_target,
            length_ratio: p.length_ratio,
            vocab_jaccard: p.vocab_jaccard,
            size_ratio: p.size_ratio,
            score: p.score(&AffinityWeights::default()),
        };
        Ok(())
    })
}

/// Loads and verifies a parameter bundle directory.
#[no_mangle]
pub unsafe extern "C" fn ss_bundle_load(dir: *const c_char, out: *mut *mut SsBundle) -> SsStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let out = out_arg(out, "out")?;
        let bundle = ParameterBundle::load(&dir)?;
        *out = Box::into_raw(Box::new(SsBundle { bundle }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ss_bundle_free(bundle: *mut SsBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Architecture fingerprint (hex SHA-256) of the bundle.
#[no_mangle]
pub unsafe extern "C" fn ss_bundle_fingerprint(
    bundle: *const SsBundle,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SsStatus {
    guard(|| {
        let b = handle(bundle, "bundle")?;
        write_string(&b.bundle.fingerprint(), buf, len, needed)
    })
}

/// Number of output classes of the bundle's head.
#[no_mangle]
pub unsafe extern "C" fn ss_bundle_head_classes(bundle: *const SsBundle, out: *mut usize) -> SsStatus {
    guard(|| {
        let b = handle(bundle, "bundle")?;
        *out_arg(out, "out")? = b.bundle.head.classes;
        Ok(())
    })
}
