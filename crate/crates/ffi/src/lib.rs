//! C interface to trained model bundles.
//!
//! Every function returns an [`SpStatus`]. On failure a description is kept
//! per thread and can be read with [`sp_last_error_message`]. Panics never
//! cross the boundary; they surface as [`SpStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use sunnpest_core::bundle::{load_bundle, BundleError, ModelBundle};
use sunnpest_core::eval::{ci_mean, ci_proportion, Interval};
use sunnpest_core::features::{NymphStageRatios, PhaseLabel};
use sunnpest_core::tree::TreeError;
use sunnpest_core::warning::{warning_decision, WarningRule, WarningStatus};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Version = 5,
    ArityMismatch = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpWarning {
    NoAction = 0,
    Watch = 1,
    SprayWindow = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpInterval {
    pub lower: f64,
    pub upper: f64,
}

/// Opaque handle to a loaded bundle.
pub struct SpBundle {
    inner: ModelBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Failure = (SpStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    (SpStatus::NullPointer, format!("{what} is null"))
}

fn bundle_failure(e: BundleError) -> Failure {
    let status = match &e {
        BundleError::Io { .. } => SpStatus::Io,
        BundleError::Parse { .. } | BundleError::Invalid(_) => SpStatus::Parse,
        BundleError::Version { .. } => SpStatus::Version,
    };
    (status, e.to_string())
}

fn tree_failure(e: TreeError) -> Failure {
    let status = match e {
        TreeError::ArityMismatch { .. } => SpStatus::ArityMismatch,
        TreeError::NonFinite { .. } => SpStatus::InvalidArgument,
        _ => SpStatus::Internal,
    };
    (status, e.to_string())
}

unsafe fn bundle_ref<'a>(b: *const SpBundle) -> Result<&'a ModelBundle, Failure> {
    b.as_ref().map(|b| &b.inner).ok_or_else(|| null("bundle"))
}

unsafe fn features<'a>(x: *const f64, n: usize) -> Result<&'a [f64], Failure> {
    if x.is_null() {
        return Err(null("features"));
    }
    let x = slice::from_raw_parts(x, n);
    if x.iter().any(|v| !v.is_finite()) {
        return Err((SpStatus::InvalidArgument, "features must be finite".into()));
    }
    Ok(x)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads and validates a bundle file. On success `*out` owns a handle that
/// must be released with `sp_bundle_free`; on failure `*out` is set to null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_bundle_load(path: *const c_char, out: *mut *mut SpBundle) -> SpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (SpStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let inner = load_bundle(Path::new(path)).map_err(bundle_failure)?;
        *out = Box::into_raw(Box::new(SpBundle { inner }));
        Ok(())
    })
}

/// Parses a bundle from `len` bytes of JSON.
///
/// # Safety
/// `json` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_bundle_from_json(json: *const c_char, len: usize, out: *mut *mut SpBundle) -> SpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let bytes = slice::from_raw_parts(json.cast::<u8>(), len);
        let text = std::str::from_utf8(bytes).map_err(|_| (SpStatus::Parse, "bundle is not UTF-8".to_string()))?;
        let inner = ModelBundle::from_json(text).map_err(bundle_failure)?;
        *out = Box::into_raw(Box::new(SpBundle { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `b` must come from a loader in this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sp_bundle_free(b: *mut SpBundle) {
    if !b.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(b))));
    }
}

/// Number of features a prediction call expects.
///
/// # Safety
/// `b` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_bundle_feature_count(b: *const SpBundle, out: *mut usize) -> SpStatus {
    guard(|| {
        let b = bundle_ref(b)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = b.feature_set.len();
        Ok(())
    })
}

/// Copies the name of feature `index` into `buf` with a trailing NUL.
/// `*needed` receives the name length without the NUL, even when `buf` is
/// too small, so callers can size a second attempt.
///
/// # Safety
/// `buf` must have `buf_len` writable bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn sp_bundle_feature_name(
    b: *const SpBundle,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> SpStatus {
    guard(|| {
        let b = bundle_ref(b)?;
        let name = b.feature_set.fields.get(index).ok_or_else(|| {
            (
                SpStatus::InvalidArgument,
                format!("feature index {index} out of range 0..{}", b.feature_set.len()),
            )
        })?;
        if let Some(n) = needed.as_mut() {
            *n = name.len();
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        if buf_len < name.len() + 1 {
            return Err((SpStatus::BufferTooSmall, format!("need {} bytes", name.len() + 1)));
        }
        ptr::copy_nonoverlapping(name.as_ptr().cast::<c_char>(), buf, name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

/// Predicts the phase (1..3) and writes the leaf class distribution to
/// `distribution[0..3]`.
///
/// # Safety
/// `features` must hold `n` values, `distribution` have room for 3.
#[no_mangle]
pub unsafe extern "C" fn sp_predict_phase(
    b: *const SpBundle,
    features_ptr: *const f64,
    n: usize,
    phase: *mut u8,
    distribution: *mut f64,
) -> SpStatus {
    guard(|| {
        let b = bundle_ref(b)?;
        let x = features(features_ptr, n)?;
        if phase.is_null() || distribution.is_null() {
            return Err(null("output"));
        }
        let p = b.predict(x).map_err(tree_failure)?;
        *phase = p.phase.number();
        ptr::copy_nonoverlapping(p.phase_distribution.as_ptr(), distribution, 3);
        Ok(())
    })
}

/// Predicts the five stage shares into `ratios[0..5]`. `*degenerate` is set
/// when every stage forest predicted zero and the shares are a placeholder.
///
/// # Safety
/// `features` must hold `n` values, `ratios` have room for 5; `degenerate` may be null.
#[no_mangle]
pub unsafe extern "C" fn sp_predict_ratios(
    b: *const SpBundle,
    features_ptr: *const f64,
    n: usize,
    ratios: *mut f64,
    degenerate: *mut bool,
) -> SpStatus {
    guard(|| {
        let b = bundle_ref(b)?;
        let x = features(features_ptr, n)?;
        if ratios.is_null() {
            return Err(null("ratios"));
        }
        let p = b.predict(x).map_err(tree_failure)?;
        ptr::copy_nonoverlapping(p.ratios.ratios.as_array().as_ptr(), ratios, 5);
        if let Some(d) = degenerate.as_mut() {
            *d = p.ratios.degenerate;
        }
        Ok(())
    })
}

/// Spray decision. Bit `s - 1` of `watched_mask` selects stage `s`.
///
/// # Safety
/// `ratios` must hold 5 values summing to one; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_warning_decision(
    phase: u8,
    ratios: *const f64,
    watched_mask: u8,
    threshold: f64,
    require_phase3: bool,
    out: *mut SpWarning,
) -> SpStatus {
    guard(|| {
        if ratios.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let phase = PhaseLabel::from_index((phase as usize).wrapping_sub(1))
            .ok_or_else(|| (SpStatus::InvalidArgument, format!("phase {phase} is not 1..3")))?;
        let mut r = [0.0; 5];
        r.copy_from_slice(slice::from_raw_parts(ratios, 5));
        let r = NymphStageRatios::new(r).map_err(|e| (SpStatus::InvalidArgument, e.to_string()))?;
        let stages = (1..=5u8).filter(|s| watched_mask & (1 << (s - 1)) != 0);
        let rule = WarningRule::new(stages, threshold, require_phase3).map_err(|m| (SpStatus::InvalidArgument, m))?;
        *out = match warning_decision(phase, &r, &rule) {
            WarningStatus::NoAction => SpWarning::NoAction,
            WarningStatus::Watch => SpWarning::Watch,
            WarningStatus::SprayWindow => SpWarning::SprayWindow,
        };
        Ok(())
    })
}

fn write_interval(i: Interval, out: *mut SpInterval) {
    unsafe {
        *out = SpInterval {
            lower: i.lower,
            upper: i.upper,
        }
    }
}

/// Normal-approximation interval for an error rate measured on `n` cases.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_ci_proportion(error_rate: f64, n: u64, level: f64, out: *mut SpInterval) -> SpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let i = ci_proportion(error_rate, n, level).map_err(|e| (SpStatus::InvalidArgument, e.to_string()))?;
        write_interval(i, out);
        Ok(())
    })
}

/// Student-t interval for the mean of `n` values.
///
/// # Safety
/// `values` must hold `n` values and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_ci_mean(values: *const f64, n: usize, level: f64, out: *mut SpInterval) -> SpStatus {
    guard(|| {
        if values.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let v = slice::from_raw_parts(values, n);
        let i = ci_mean(v, level).map_err(|e| (SpStatus::InvalidArgument, e.to_string()))?;
        write_interval(i, out);
        Ok(())
    })
}
