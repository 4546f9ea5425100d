//! C ABI for depthforge.
//!
//! Maps, label images and sample sets cross the boundary as opaque handles
//! created by `df_*_new` and released by the matching `df_*_free`. Every
//! fallible call returns a [`DfStatus`]; on failure the message is kept per
//! thread and read with [`df_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use depthforge::edgeloss::{edge_weighted_loss, semantic_edges, EdgeParams};
use depthforge::error::{Error, ErrorKind};
use depthforge::metrics::evaluate;
use depthforge::pipeline::{calibrate, PipelineConfig, SCHEMA_VERSION};
use depthforge::types::{DepthMap, LabelMap, Sample, SparseSamples};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NumericalFailure = 3,
    Panic = 4,
}

/// Dense depth map in meters.
pub struct DfDepthMap {
    inner: DepthMap,
}

/// Per-pixel object labels, 0 = unlabeled.
pub struct DfLabelMap {
    inner: LabelMap,
}

/// Sparse depth samples.
pub struct DfSamples {
    inner: SparseSamples,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DfMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixel_count: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DfLossReport {
    pub l1: f64,
    pub edge_weighted: f64,
    pub alpha: f64,
    pub pixel_count: usize,
    pub edge_pixel_count: usize,
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

fn fail(err: Error) -> DfStatus {
    set_error(err.to_string());
    match err.kind() {
        ErrorKind::Input => DfStatus::InvalidInput,
        ErrorKind::Numerical => DfStatus::NumericalFailure,
    }
}

fn null(what: &str) -> DfStatus {
    set_error(format!("{what} is NULL"));
    DfStatus::NullPointer
}

fn guard(f: impl FnOnce() -> DfStatus) -> DfStatus {
    clear_error();
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("internal panic");
        DfStatus::Panic
    })
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        // SAFETY: caller promises `len` readable elements at `p`.
        Some(std::slice::from_raw_parts(p, len))
    }
}

fn checked_area(width: usize, height: usize) -> Result<usize, DfStatus> {
    width.checked_mul(height).ok_or_else(|| {
        set_error("width * height overflows");
        DfStatus::InvalidInput
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next depthforge call on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Version of the JSON configuration layout accepted by `df_calibrate`.
#[no_mangle]
pub extern "C" fn df_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Creates a depth map from `width * height` row-major values in meters.
/// `valid` may be NULL, in which case positive finite values are valid.
///
/// # Safety
/// `values` (and `valid` when not NULL) must point to `width * height`
/// readable elements. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_depth_map_new(
    width: usize,
    height: usize,
    values: *const f64,
    valid: *const u8,
    out: *mut *mut DfDepthMap,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let n = match checked_area(width, height) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(values) = slice(values, n) else {
            return null("values");
        };
        let map = if valid.is_null() {
            DepthMap::from_values(width, height, values.to_vec())
        } else {
            let mask = slice(valid, n).unwrap().iter().map(|&b| b != 0).collect();
            DepthMap::new(width, height, values.to_vec(), mask)
        };
        match map {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DfDepthMap { inner }));
                DfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `map` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_depth_map_free(map: *mut DfDepthMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_depth_map_width(map: *const DfDepthMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.width())
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_depth_map_height(map: *const DfDepthMap) -> usize {
    map.as_ref().map_or(0, |m| m.inner.height())
}

/// Copies values (meters) into `values` and, when not NULL, the validity
/// mask into `valid`. Invalid pixels read 0.
///
/// # Safety
/// `map` must be a live handle; the buffers must hold `len` elements and
/// `len` must equal width * height.
#[no_mangle]
pub unsafe extern "C" fn df_depth_map_copy(
    map: *const DfDepthMap,
    values: *mut f64,
    valid: *mut u8,
    len: usize,
) -> DfStatus {
    guard(|| {
        let Some(m) = map.as_ref() else {
            return null("map");
        };
        if values.is_null() {
            return null("values");
        }
        if len != m.inner.len() {
            set_error(format!("buffer holds {len} elements, map has {}", m.inner.len()));
            return DfStatus::InvalidInput;
        }
        let out = std::slice::from_raw_parts_mut(values, len);
        for (i, o) in out.iter_mut().enumerate() {
            *o = if m.inner.validity()[i] { m.inner.values()[i] } else { 0.0 };
        }
        if !valid.is_null() {
            let mask = std::slice::from_raw_parts_mut(valid, len);
            for (o, &v) in mask.iter_mut().zip(m.inner.validity()) {
                *o = v as u8;
            }
        }
        DfStatus::Ok
    })
}

/// # Safety
/// `labels` must point to `width * height` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_label_map_new(
    width: usize,
    height: usize,
    labels: *const u32,
    out: *mut *mut DfLabelMap,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let n = match checked_area(width, height) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(labels) = slice(labels, n) else {
            return null("labels");
        };
        match LabelMap::new(width, height, labels.to_vec()) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DfLabelMap { inner }));
                DfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `labels` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_label_map_free(labels: *mut DfLabelMap) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

/// Creates `count` samples at pixels `(u[i], v[i])` with depth `depth[i]`
/// meters, for an image of `width` x `height`.
///
/// # Safety
/// `u`, `v` and `depth` must each point to `count` readable elements;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_samples_new(
    u: *const u32,
    v: *const u32,
    depth: *const f64,
    count: usize,
    width: usize,
    height: usize,
    out: *mut *mut DfSamples,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let (Some(u), Some(v), Some(d)) = (slice(u, count), slice(v, count), slice(depth, count)) else {
            return null("sample arrays");
        };
        let samples = (0..count)
            .map(|i| Sample {
                u: u[i],
                v: v[i],
                depth: d[i],
            })
            .collect();
        match SparseSamples::new(samples, width, height) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DfSamples { inner }));
                DfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `samples` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_samples_free(samples: *mut DfSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}

/// Calibrates `prediction` against `samples`. `config_json` is a pipeline
/// configuration document (intrinsics required; paths are ignored).
/// `labels` may be NULL unless the mode is `smd`. On success `*out`
/// receives a new depth map the caller frees.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; handles must be live;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_calibrate(
    config_json: *const c_char,
    prediction: *const DfDepthMap,
    labels: *const DfLabelMap,
    samples: *const DfSamples,
    out: *mut *mut DfDepthMap,
) -> DfStatus {
    guard(|| {
        if config_json.is_null() {
            return null("config_json");
        }
        let (Some(pred), Some(samples)) = (prediction.as_ref(), samples.as_ref()) else {
            return null("prediction or samples");
        };
        if out.is_null() {
            return null("out");
        }
        let Ok(text) = CStr::from_ptr(config_json).to_str() else {
            set_error("config_json is not UTF-8");
            return DfStatus::InvalidInput;
        };
        let config = match PipelineConfig::from_json_str(text, &[], None) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let labels = labels.as_ref().map(|l| &l.inner);
        match calibrate(&pred.inner, labels, &samples.inner, &config) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(DfDepthMap { inner: c.depth }));
                DfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Error metrics over pixels valid in both maps.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_evaluate(
    truth: *const DfDepthMap,
    prediction: *const DfDepthMap,
    out: *mut DfMetrics,
) -> DfStatus {
    guard(|| {
        let (Some(t), Some(p)) = (truth.as_ref(), prediction.as_ref()) else {
            return null("truth or prediction");
        };
        if out.is_null() {
            return null("out");
        }
        match evaluate(&t.inner, &p.inner) {
            Ok(r) => {
                *out = DfMetrics {
                    rmse: r.rmse,
                    mae: r.mae,
                    rel: r.rel,
                    delta1: r.delta1,
                    delta2: r.delta2,
                    delta3: r.delta3,
                    pixel_count: r.pixel_count,
                };
                DfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Edge-weighted loss with semantic edges taken from `labels`.
/// `edge_params_json` may be NULL for the default edge settings.
///
/// # Safety
/// Handles must be live; `edge_params_json` must be NULL or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_edge_weighted_loss(
    truth: *const DfDepthMap,
    prediction: *const DfDepthMap,
    labels: *const DfLabelMap,
    alpha: f64,
    edge_params_json: *const c_char,
    out: *mut DfLossReport,
) -> DfStatus {
    guard(|| {
        let (Some(t), Some(p), Some(l)) = (truth.as_ref(), prediction.as_ref(), labels.as_ref()) else {
            return null("truth, prediction or labels");
        };
        if out.is_null() {
            return null("out");
        }
        let params = if edge_params_json.is_null() {
            EdgeParams::default()
        } else {
            let parsed = CStr::from_ptr(edge_params_json)
                .to_str()
                .map_err(|_| Error::Config("edge_params_json is not UTF-8".into()))
                .and_then(|s| serde_json::from_str::<EdgeParams>(s).map_err(|e| Error::Config(e.to_string())));
            match parsed {
                Ok(p) => p,
                Err(e) => return fail(e),
            }
        };
        let res = semantic_edges(&l.inner, &params).and_then(|edges| edge_weighted_loss(&t.inner, &p.inner, &edges, alpha));
        match res {
            Ok(r) => {
                *out = DfLossReport {
                    l1: r.l1,
                    edge_weighted: r.edge_weighted,
                    alpha: r.alpha,
                    pixel_count: r.pixel_count,
                    edge_pixel_count: r.edge_pixel_count,
                };
                DfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
