//! C ABI over the pipeline library. Conventions: every fallible call
//! returns a `PmStatus`; on failure a thread-local message is set,
//! readable via `pm_last_error` until the next failing call on the same
//! thread. Handles are opaque, created and released by paired
//! `pm_*_fit`/`pm_*_parse` and `pm_*_free` calls. Strings returned
//! through out-pointers are owned by the caller and must be released
//! with `pm_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use povmap::annotations::BoundingBox;
use povmap::deteval::iou;
use povmap::gmm::{fit_gmm_1d, Gmm1D, GmmFitOptions};
use povmap::ridge::{ridge_fit, RidgeModel};
use povmap::sampler::QuadrantTable;
use povmap::seed::stage_seed;
use povmap::Error;

/// Result code of a C ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    /// The call succeeded.
    Ok = 0,
    /// An argument or input file was rejected.
    InvalidInput = 1,
    /// Text input failed to parse.
    Parse = 2,
    /// A numeric routine failed to converge or produced no result.
    Numeric = 3,
    /// An internal invariant was violated.
    Internal = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: PmStatus, message: &str) -> PmStatus {
    set_last_error(message);
    status
}

fn fail_err(err: &Error) -> PmStatus {
    let status = match err {
        Error::Parse { .. } => PmStatus::Parse,
        Error::InvalidInput(_) => PmStatus::InvalidInput,
        Error::Numeric(_) => PmStatus::Numeric,
        Error::Internal(_) => PmStatus::Internal,
    };
    fail(status, &err.to_string())
}

/// Panics must not unwind across the ABI boundary.
fn guarded<F: FnOnce() -> PmStatus>(f: F) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(PmStatus::Internal, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be null or valid for reads of a `T`.
unsafe fn deref<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, PmStatus> {
    if ptr.is_null() {
        Err(fail(PmStatus::NullPointer, &format!("null pointer: {name}")))
    } else {
        Ok(&*ptr)
    }
}

unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, PmStatus> {
    if ptr.is_null() {
        return Err(fail(PmStatus::NullPointer, &format!("null pointer: {name}")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(PmStatus::InvalidUtf8, &format!("{name} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), PmStatus> {
    if out.is_null() {
        return Err(fail(PmStatus::NullPointer, &format!("null pointer: {name}")));
    }
    out.write(value);
    Ok(())
}

fn string_out(text: String, out: *mut *mut c_char) -> PmStatus {
    let Ok(cstring) = CString::new(text.replace('\0', " ")) else {
        return fail(PmStatus::Internal, "output contained an interior nul");
    };
    unsafe {
        match write_out(out, cstring.into_raw(), "out") {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    }
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned through an out-pointer.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library.
#[no_mangle]
pub unsafe extern "C" fn pm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Derive a per-stage seed from a run seed and a stage label.
///
/// # Safety
/// `label` must be a valid nul-terminated string; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_stage_seed(seed: u64, label: *const c_char, out: *mut u64) -> PmStatus {
    guarded(|| {
        let label = match read_str(label, "label") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match write_out(out, stage_seed(seed, label), "out") {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Intersection over union of two integer-corner boxes.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_iou(
    a_tlx: i64,
    a_tly: i64,
    a_brx: i64,
    a_bry: i64,
    b_tlx: i64,
    b_tly: i64,
    b_brx: i64,
    b_bry: i64,
    out: *mut f64,
) -> PmStatus {
    guarded(|| {
        let a = BoundingBox::new(a_tlx, a_tly, a_brx, a_bry);
        let b = BoundingBox::new(b_tlx, b_tly, b_brx, b_bry);
        match write_out(out, iou(&a, &b), "out") {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Opaque handle to a one-dimensional Gaussian mixture.
pub struct PmGmm(Gmm1D);

/// Fit a mixture of `k` Gaussians to `values` by expectation
/// maximization with deterministic quantile initialization.
///
/// # Safety
/// `values` must point to `n_values` doubles; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn pm_gmm_fit(
    values: *const f64,
    n_values: usize,
    k: usize,
    max_iter: usize,
    tol: f64,
    out: *mut *mut PmGmm,
) -> PmStatus {
    guarded(|| {
        if values.is_null() {
            return fail(PmStatus::NullPointer, "null pointer: values");
        }
        let values = std::slice::from_raw_parts(values, n_values);
        let opts = GmmFitOptions { k, max_iter, tol };
        match fit_gmm_1d(values, &opts) {
            Ok(fit) => match write_out(out, Box::into_raw(Box::new(PmGmm(fit.model))), "out") {
                Ok(()) => PmStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_err(&e),
        }
    })
}

/// Load a mixture from its `key = value` text form.
///
/// # Safety
/// `text` must be a valid nul-terminated string; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_gmm_parse(text: *const c_char, out: *mut *mut PmGmm) -> PmStatus {
    guarded(|| {
        let text = match read_str(text, "text") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match Gmm1D::parse(text) {
            Ok(model) => match write_out(out, Box::into_raw(Box::new(PmGmm(model))), "out") {
                Ok(()) => PmStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_err(&e),
        }
    })
}

/// Serialize a mixture; release the string with `pm_string_free`.
///
/// # Safety
/// `gmm` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_gmm_write(gmm: *const PmGmm, out: *mut *mut c_char) -> PmStatus {
    guarded(|| {
        let gmm = match deref(gmm, "gmm") {
            Ok(g) => g,
            Err(status) => return status,
        };
        string_out(gmm.0.write(), out)
    })
}

/// Number of components.
///
/// # Safety
/// `gmm` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_gmm_k(gmm: *const PmGmm, out: *mut usize) -> PmStatus {
    guarded(|| {
        let gmm = match deref(gmm, "gmm") {
            Ok(g) => g,
            Err(status) => return status,
        };
        match write_out(out, gmm.0.k(), "out") {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Weight, mean, and variance of component `index` (components are
/// sorted by ascending mean).
///
/// # Safety
/// `gmm` must be a live handle; the out-pointers must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn pm_gmm_component(
    gmm: *const PmGmm,
    index: usize,
    out_weight: *mut f64,
    out_mean: *mut f64,
    out_variance: *mut f64,
) -> PmStatus {
    guarded(|| {
        let gmm = match deref(gmm, "gmm") {
            Ok(g) => g,
            Err(status) => return status,
        };
        if index >= gmm.0.k() {
            return fail(
                PmStatus::InvalidInput,
                &format!("component index {index} out of range for k = {}", gmm.0.k()),
            );
        }
        let result = write_out(out_weight, gmm.0.weights[index], "out_weight")
            .and_then(|()| write_out(out_mean, gmm.0.means[index], "out_mean"))
            .and_then(|()| write_out(out_variance, gmm.0.variances[index], "out_variance"));
        match result {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Index of the most probable component for `value`.
///
/// # Safety
/// `gmm` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_gmm_assign(gmm: *const PmGmm, value: f64, out: *mut usize) -> PmStatus {
    guarded(|| {
        let gmm = match deref(gmm, "gmm") {
            Ok(g) => g,
            Err(status) => return status,
        };
        match write_out(out, gmm.0.assign(value), "out") {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Release a mixture handle.
///
/// # Safety
/// `gmm` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_gmm_free(gmm: *mut PmGmm) {
    if !gmm.is_null() {
        drop(Box::from_raw(gmm));
    }
}

/// Opaque handle to a fitted ridge regression model.
pub struct PmRidge(RidgeModel);

/// Fit ridge regression on standardized features. `x` is row-major,
/// `n_rows` by `n_cols`.
///
/// # Safety
/// `x` must point to `n_rows * n_cols` doubles and `y` to `n_rows`
/// doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_ridge_fit(
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    y: *const f64,
    lambda: f64,
    out: *mut *mut PmRidge,
) -> PmStatus {
    guarded(|| {
        if x.is_null() {
            return fail(PmStatus::NullPointer, "null pointer: x");
        }
        if y.is_null() {
            return fail(PmStatus::NullPointer, "null pointer: y");
        }
        let Some(len) = n_rows.checked_mul(n_cols) else {
            return fail(PmStatus::InvalidInput, "matrix dimensions overflow");
        };
        let flat = std::slice::from_raw_parts(x, len);
        let rows: Vec<Vec<f64>> = flat.chunks(n_cols.max(1)).map(<[f64]>::to_vec).collect();
        let y = std::slice::from_raw_parts(y, n_rows);
        match ridge_fit(&rows, y, lambda) {
            Ok(model) => match write_out(out, Box::into_raw(Box::new(PmRidge(model))), "out") {
                Ok(()) => PmStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_err(&e),
        }
    })
}

/// Predict one target from `n_cols` features.
///
/// # Safety
/// `model` must be a live handle; `features` must point to `n_cols`
/// doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_ridge_predict(
    model: *const PmRidge,
    features: *const f64,
    n_cols: usize,
    out: *mut f64,
) -> PmStatus {
    guarded(|| {
        let model = match deref(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        if features.is_null() {
            return fail(PmStatus::NullPointer, "null pointer: features");
        }
        let row = std::slice::from_raw_parts(features, n_cols);
        match model.0.predict_one(row) {
            Ok(value) => match write_out(out, value, "out") {
                Ok(()) => PmStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_err(&e),
        }
    })
}

/// Load a model from its `key = value` text form.
///
/// # Safety
/// `text` must be a valid nul-terminated string; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_ridge_parse(text: *const c_char, out: *mut *mut PmRidge) -> PmStatus {
    guarded(|| {
        let text = match read_str(text, "text") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match RidgeModel::parse(text) {
            Ok(model) => match write_out(out, Box::into_raw(Box::new(PmRidge(model))), "out") {
                Ok(()) => PmStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_err(&e),
        }
    })
}

/// Serialize a model; release the string with `pm_string_free`.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_ridge_write(model: *const PmRidge, out: *mut *mut c_char) -> PmStatus {
    guarded(|| {
        let model = match deref(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        string_out(model.0.write(), out)
    })
}

/// Release a model handle.
///
/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_ridge_free(model: *mut PmRidge) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Opaque handle to a 4x4 quadrant sampling table.
pub struct PmQuadrants(QuadrantTable);

/// Build a quadrant table from 16 precomputed weights in row-major
/// order (row index varies slowest).
///
/// # Safety
/// `name` must be a valid nul-terminated string; `weights` must point
/// to 16 values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_quadrants_from_weights(
    name: *const c_char,
    img_w: u32,
    img_h: u32,
    weights: *const u64,
    out: *mut *mut PmQuadrants,
) -> PmStatus {
    guarded(|| {
        let name = match read_str(name, "name") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if weights.is_null() {
            return fail(PmStatus::NullPointer, "null pointer: weights");
        }
        let mut w = [0u64; 16];
        w.copy_from_slice(std::slice::from_raw_parts(weights, 16));
        match QuadrantTable::from_weights(name, img_w, img_h, &w) {
            Ok(table) => match write_out(out, Box::into_raw(Box::new(PmQuadrants(table))), "out") {
                Ok(()) => PmStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_err(&e),
        }
    })
}

/// Map a uniform draw in [0, 1) to a quadrant index in 0..16.
///
/// # Safety
/// `quadrants` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_quadrants_sample(
    quadrants: *const PmQuadrants,
    u: f64,
    out: *mut usize,
) -> PmStatus {
    guarded(|| {
        let quadrants = match deref(quadrants, "quadrants") {
            Ok(q) => q,
            Err(status) => return status,
        };
        match quadrants.0.sample(u) {
            Ok(index) => match write_out(out, index, "out") {
                Ok(()) => PmStatus::Ok,
                Err(status) => status,
            },
            Err(e) => fail_err(&e),
        }
    })
}

/// Pixel bounds `[x0, x1) x [y0, y1)` of quadrant `index`; edge
/// quadrants absorb the remainder.
///
/// # Safety
/// `quadrants` must be a live handle; the out-pointers must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_quadrants_bounds(
    quadrants: *const PmQuadrants,
    index: usize,
    out_x0: *mut u32,
    out_y0: *mut u32,
    out_x1: *mut u32,
    out_y1: *mut u32,
) -> PmStatus {
    guarded(|| {
        let quadrants = match deref(quadrants, "quadrants") {
            Ok(q) => q,
            Err(status) => return status,
        };
        if index >= quadrants.0.records.len() {
            return fail(PmStatus::InvalidInput, &format!("quadrant index {index} out of range"));
        }
        let (x0, y0, x1, y1) = quadrants.0.quadrant_bounds(index);
        let result = write_out(out_x0, x0, "out_x0")
            .and_then(|()| write_out(out_y0, y0, "out_y0"))
            .and_then(|()| write_out(out_x1, x1, "out_x1"))
            .and_then(|()| write_out(out_y1, y1, "out_y1"));
        match result {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Total weight across all 16 quadrants.
///
/// # Safety
/// `quadrants` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_quadrants_total_weight(
    quadrants: *const PmQuadrants,
    out: *mut u64,
) -> PmStatus {
    guarded(|| {
        let quadrants = match deref(quadrants, "quadrants") {
            Ok(q) => q,
            Err(status) => return status,
        };
        match write_out(out, quadrants.0.total_weight(), "out") {
            Ok(()) => PmStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Release a quadrant table handle.
///
/// # Safety
/// `quadrants` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_quadrants_free(quadrants: *mut PmQuadrants) {
    if !quadrants.is_null() {
        drop(Box::from_raw(quadrants));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(pm_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn gmm_fit_roundtrip_through_text() {
        let mut values = Vec::new();
        for i in 0..40 {
            values.push(f64::from(i % 4));
            values.push(100.0 + f64::from(i % 5));
        }
        let mut handle: *mut PmGmm = ptr::null_mut();
        let status = unsafe { pm_gmm_fit(values.as_ptr(), values.len(), 2, 200, 1e-8, &mut handle) };
        assert_eq!(status, PmStatus::Ok);
        let mut k = 0usize;
        assert_eq!(unsafe { pm_gmm_k(handle, &mut k) }, PmStatus::Ok);
        assert_eq!(k, 2);

        let mut text: *mut c_char = ptr::null_mut();
        assert_eq!(unsafe { pm_gmm_write(handle, &mut text) }, PmStatus::Ok);
        let serialized = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
        let c_text = CString::new(serialized).unwrap();
        let mut reloaded: *mut PmGmm = ptr::null_mut();
        assert_eq!(unsafe { pm_gmm_parse(c_text.as_ptr(), &mut reloaded) }, PmStatus::Ok);

        let mut class = usize::MAX;
        assert_eq!(unsafe { pm_gmm_assign(reloaded, 101.0, &mut class) }, PmStatus::Ok);
        assert_eq!(class, 1);
        assert_eq!(unsafe { pm_gmm_assign(reloaded, 1.0, &mut class) }, PmStatus::Ok);
        assert_eq!(class, 0);

        let (mut w, mut m, mut v) = (0.0, 0.0, 0.0);
        assert_eq!(
            unsafe { pm_gmm_component(handle, 1, &mut w, &mut m, &mut v) },
            PmStatus::Ok
        );
        assert!((m - 102.0).abs() < 0.5, "mean {m}");

        unsafe {
            pm_string_free(text);
            pm_gmm_free(handle);
            pm_gmm_free(reloaded);
        }
    }

    #[test]
    fn gmm_errors_set_message() {
        let values = [1.0, 1.0, 1.0];
        let mut handle: *mut PmGmm = ptr::null_mut();
        let status = unsafe { pm_gmm_fit(values.as_ptr(), values.len(), 2, 10, 1e-8, &mut handle) };
        assert_eq!(status, PmStatus::InvalidInput);
        let message = unsafe { CStr::from_ptr(pm_last_error()) }.to_str().unwrap();
        assert!(!message.is_empty());
        assert!(handle.is_null());
    }

    #[test]
    fn null_pointers_are_rejected() {
        let mut out = 0usize;
        assert_eq!(
            unsafe { pm_gmm_k(ptr::null(), &mut out) },
            PmStatus::NullPointer
        );
        let mut handle: *mut PmGmm = ptr::null_mut();
        assert_eq!(
            unsafe { pm_gmm_fit(ptr::null(), 5, 2, 10, 1e-8, &mut handle) },
            PmStatus::NullPointer
        );
        assert_eq!(
            unsafe { pm_gmm_parse(ptr::null(), &mut handle) },
            PmStatus::NullPointer
        );
    }

    #[test]
    fn ridge_fit_and_predict() {
        // y = 1 + 2 a - b, exactly recoverable at lambda 0.
        let rows: Vec<[f64; 2]> = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [2.0, 1.0],
            [3.0, 5.0],
        ];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        let mut handle: *mut PmRidge = ptr::null_mut();
        let status = unsafe { pm_ridge_fit(flat.as_ptr(), rows.len(), 2, y.as_ptr(), 0.0, &mut handle) };
        assert_eq!(status, PmStatus::Ok);
        let query = [4.0, 2.0];
        let mut pred = f64::NAN;
        assert_eq!(
            unsafe { pm_ridge_predict(handle, query.as_ptr(), 2, &mut pred) },
            PmStatus::Ok
        );
        assert!((pred - 7.0).abs() < 1e-9, "pred {pred}");

        let mut text: *mut c_char = ptr::null_mut();
        assert_eq!(unsafe { pm_ridge_write(handle, &mut text) }, PmStatus::Ok);
        let serialized = unsafe { CStr::from_ptr(text) }.to_owned();
        let mut reloaded: *mut PmRidge = ptr::null_mut();
        assert_eq!(
            unsafe { pm_ridge_parse(serialized.as_ptr(), &mut reloaded) },
            PmStatus::Ok
        );
        let mut pred2 = f64::NAN;
        assert_eq!(
            unsafe { pm_ridge_predict(reloaded, query.as_ptr(), 2, &mut pred2) },
            PmStatus::Ok
        );
        assert_eq!(pred, pred2);
        unsafe {
            pm_string_free(text);
            pm_ridge_free(handle);
            pm_ridge_free(reloaded);
        }
    }

    #[test]
    fn ridge_wrong_width_errors() {
        let flat = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0];
        let mut handle: *mut PmRidge = ptr::null_mut();
        assert_eq!(
            unsafe { pm_ridge_fit(flat.as_ptr(), 2, 2, y.as_ptr(), 0.0, &mut handle) },
            PmStatus::Ok
        );
        let query = [1.0];
        let mut pred = 0.0;
        assert_eq!(
            unsafe { pm_ridge_predict(handle, query.as_ptr(), 1, &mut pred) },
            PmStatus::InvalidInput
        );
        unsafe { pm_ridge_free(handle) };
    }

    #[test]
    fn quadrant_sampling_matches_library() {
        let name = CString::new("image.tif").unwrap();
        let weights: [u64; 16] = [1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 3, 0, 0, 0, 0, 4];
        let mut handle: *mut PmQuadrants = ptr::null_mut();
        let status =
            unsafe { pm_quadrants_from_weights(name.as_ptr(), 400, 400, weights.as_ptr(), &mut handle) };
        assert_eq!(status, PmStatus::Ok);
        let mut total = 0u64;
        assert_eq!(unsafe { pm_quadrants_total_weight(handle, &mut total) }, PmStatus::Ok);
        assert_eq!(total, 10);
        let mut index = usize::MAX;
        assert_eq!(unsafe { pm_quadrants_sample(handle, 0.0, &mut index) }, PmStatus::Ok);
        assert_eq!(index, 0);
        assert_eq!(unsafe { pm_quadrants_sample(handle, 0.999, &mut index) }, PmStatus::Ok);
        assert_eq!(index, 15);
        assert_eq!(
            unsafe { pm_quadrants_sample(handle, 1.0, &mut index) },
            PmStatus::InvalidInput
        );
        let (mut x0, mut y0, mut x1, mut y1) = (0u32, 0u32, 0u32, 0u32);
        assert_eq!(
            unsafe { pm_quadrants_bounds(handle, 15, &mut x0, &mut y0, &mut x1, &mut y1) },
            PmStatus::Ok
        );
        assert_eq!((x0, y0, x1, y1), (300, 300, 400, 400));
        unsafe { pm_quadrants_free(handle) };
    }

    #[test]
    fn stage_seed_matches_library() {
        let label = CString::new("sampler").unwrap();
        let mut out = 0u64;
        assert_eq!(unsafe { pm_stage_seed(7, label.as_ptr(), &mut out) }, PmStatus::Ok);
        assert_eq!(out, stage_seed(7, "sampler"));
    }

    #[test]
    fn iou_matches_library() {
        let mut out = 0.0f64;
        let status = unsafe { pm_iou(0, 0, 10, 10, 5, 5, 15, 15, &mut out) };
        assert_eq!(status, PmStatus::Ok);
        assert!((out - 25.0 / 175.0).abs() < 1e-12);
    }
}
