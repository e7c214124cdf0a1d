//! C ABI over the rebuy model format: load a saved model file, score feature
//! vectors, free the handle. All functions are thread-compatible; the error
//! message buffer is thread-local.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::Path;
use std::ptr;

use rebuy::model::{load_model, Model};

/// Opaque handle to a loaded model.
pub struct RebuyModel {
    inner: Model,
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RebuyStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    LoadFailed = 3,
    PredictFailed = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap();
    });
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn rebuy_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rebuy_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a model JSON file. On success writes a handle to `out`; the caller
/// owns it and must release it with `rebuy_model_free`.
#[no_mangle]
pub extern "C" fn rebuy_model_load(
    path: *const c_char,
    out: *mut *mut RebuyModel,
) -> RebuyStatus {
    if path.is_null() || out.is_null() {
        set_error("path and out must be non-null");
        return RebuyStatus::NullArgument;
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(s) => s,
        Err(e) => {
            set_error(&format!("path is not valid UTF-8: {e}"));
            return RebuyStatus::InvalidUtf8;
        }
    };
    match load_model(Path::new(path)) {
        Ok(model) => {
            let handle = Box::new(RebuyModel { inner: model });
            unsafe { *out = Box::into_raw(handle) };
            RebuyStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            unsafe { *out = ptr::null_mut() };
            RebuyStatus::LoadFailed
        }
    }
}

/// Positive-class probability for one feature vector of `len` doubles.
#[no_mangle]
pub extern "C" fn rebuy_model_predict(
    model: *const RebuyModel,
    features: *const f64,
    len: usize,
    out_probability: *mut f64,
) -> RebuyStatus {
    if model.is_null() || features.is_null() || out_probability.is_null() {
        set_error("model, features and out_probability must be non-null");
        return RebuyStatus::NullArgument;
    }
    let row = unsafe { std::slice::from_raw_parts(features, len) };
    let model = unsafe { &*model };
    match model.inner.predict_proba(row) {
        Ok(p) => {
            unsafe { *out_probability = p };
            RebuyStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            RebuyStatus::PredictFailed
        }
    }
}

/// Hard 0/1 label at the given threshold.
#[no_mangle]
pub extern "C" fn rebuy_model_classify(
    model: *const RebuyModel,
    features: *const f64,
    len: usize,
    threshold: f64,
    out_label: *mut u8,
) -> RebuyStatus {
    if out_label.is_null() {
        set_error("out_label must be non-null");
        return RebuyStatus::NullArgument;
    }
    let mut p = 0.0;
    let status = rebuy_model_predict(model, features, len, &mut p);
    if status == RebuyStatus::Ok {
        unsafe { *out_label = u8::from(p >= threshold) };
    }
    status
}

/// Release a handle returned by `rebuy_model_load`. Null is a no-op.
#[no_mangle]
pub extern "C" fn rebuy_model_free(model: *mut RebuyModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
