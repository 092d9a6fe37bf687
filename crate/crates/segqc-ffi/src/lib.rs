//! C ABI for the segmentation quality-control library.
//!
//! Opaque handles + integer status codes; the last error message per thread
//! is retrievable as a C string. Tensor arguments are dense row-major
//! buffers: images are `m × D × H × W` f32 (modality-major), label masks are
//! `D × H × W` u8, error-map outputs are `C × D × H × W`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::{Array3, Array4};

use segqc::error::SegQcError;
use segqc::hierarchy::ClassHierarchy;
use segqc::mask::{one_hot, LabelMask};
use segqc::metrics::{multiclass_dsc, nsd, sem_ground_truth};
use segqc::model::{load_checkpoint, QcResUNet};
use segqc::volume::Volume;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegqcStatus {
    Ok = 0,
    /// Null pointer, bad shape, or otherwise unusable argument.
    InvalidArgument = 1,
    /// Configuration or checkpoint problem.
    BadConfig = 2,
    /// Data problem (labels, files, geometry).
    DataError = 3,
    /// Numerical failure.
    NumericalError = 4,
    /// A panic was caught at the boundary.
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").expect("empty cstring"));
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul-free");
    });
}

fn status_of(err: &SegQcError) -> SegqcStatus {
    match err.exit_code() {
        2 => SegqcStatus::BadConfig,
        4 => SegqcStatus::NumericalError,
        _ => SegqcStatus::DataError,
    }
}

fn guard<F: FnOnce() -> Result<(), (SegqcStatus, String)>>(f: F) -> SegqcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SegqcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&msg);
            SegqcStatus::Panic
        }
    }
}

fn err_of(e: SegQcError) -> (SegqcStatus, String) {
    (status_of(&e), e.to_string())
}

/// Message of the most recent error on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn segqc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn segqc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque class-hierarchy handle.
pub struct SegqcHierarchy {
    inner: ClassHierarchy,
}

/// Opaque model handle.
pub struct SegqcModel {
    inner: QcResUNet,
}

/// Built-in nested brain-tumor hierarchy (labels 1/2/4; classes WT ⊇ TC ⊇ ET).
#[no_mangle]
pub extern "C" fn segqc_hierarchy_brats() -> *mut SegqcHierarchy {
    Box::into_raw(Box::new(SegqcHierarchy { inner: ClassHierarchy::brats() }))
}

/// Built-in disjoint cardiac hierarchy (labels 1/2/3; classes LV, Myo, RV).
#[no_mangle]
pub extern "C" fn segqc_hierarchy_cardiac() -> *mut SegqcHierarchy {
    Box::into_raw(Box::new(SegqcHierarchy { inner: ClassHierarchy::cardiac() }))
}

/// Parses a hierarchy from its JSON form; returns null on failure (see
/// `segqc_last_error`).
///
/// # Safety
/// `json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn segqc_hierarchy_from_json(json: *const c_char) -> *mut SegqcHierarchy {
    if json.is_null() {
        set_error("json is null");
        return std::ptr::null_mut();
    }
    let raw = match CStr::from_ptr(json).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("json is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match serde_json::from_str::<ClassHierarchy>(raw) {
        Ok(h) => Box::into_raw(Box::new(SegqcHierarchy { inner: h })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Number of derived classes of a hierarchy handle.
///
/// # Safety
/// `h` must be a live pointer from a `segqc_hierarchy_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn segqc_hierarchy_num_classes(h: *const SegqcHierarchy) -> usize {
    if h.is_null() {
        return 0;
    }
    (*h).inner.num_classes()
}

/// Frees a hierarchy handle (null is ignored).
///
/// # Safety
/// `h` must come from a `segqc_hierarchy_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn segqc_hierarchy_free(h: *mut SegqcHierarchy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Loads a checkpoint directory (weights.bin + config.json); returns null on
/// failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn segqc_model_load(path: *const c_char) -> *mut SegqcModel {
    if path.is_null() {
        set_error("path is null");
        return std::ptr::null_mut();
    }
    let raw = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match load_checkpoint(Path::new(raw)) {
        Ok(m) => Box::into_raw(Box::new(SegqcModel { inner: m })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Number of error-map classes the model emits.
///
/// # Safety
/// `m` must be a live pointer from `segqc_model_load`.
#[no_mangle]
pub unsafe extern "C" fn segqc_model_num_classes(m: *const SegqcModel) -> usize {
    if m.is_null() {
        return 0;
    }
    (*m).inner.config().num_classes
}

/// Number of imaging modalities the model expects.
///
/// # Safety
/// `m` must be a live pointer from `segqc_model_load`.
#[no_mangle]
pub unsafe extern "C" fn segqc_model_in_modalities(m: *const SegqcModel) -> usize {
    if m.is_null() {
        return 0;
    }
    (*m).inner.config().in_modalities
}

/// Frees a model handle (null is ignored).
///
/// # Safety
/// `m` must come from `segqc_model_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn segqc_model_free(m: *mut SegqcModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

unsafe fn labels_from_raw(
    ptr: *const u8,
    d: usize,
    h: usize,
    w: usize,
    hierarchy: &ClassHierarchy,
) -> Result<LabelMask, (SegqcStatus, String)> {
    if ptr.is_null() {
        return Err((SegqcStatus::InvalidArgument, "label buffer is null".into()));
    }
    let slice = std::slice::from_raw_parts(ptr, d * h * w);
    let arr = Array3::from_shape_vec((d, h, w), slice.to_vec()).expect("exact size");
    LabelMask::new(arr, hierarchy.clone()).map_err(err_of)
}

/// Runs the quality model on one (image, query mask) pair.
///
/// `image`: `m·d·h·w` f32 values; `labels`: `d·h·w` u8 values. On success
/// writes the predicted DSC and NSD; when `out_sem_prob` is non-null it must
/// hold `num_classes·d·h·w` f32 slots and receives the per-class error
/// probabilities.
///
/// # Safety
/// All pointers must honor the documented buffer sizes; `model` and
/// `hierarchy` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn segqc_predict(
    model: *const SegqcModel,
    hierarchy: *const SegqcHierarchy,
    image: *const f32,
    labels: *const u8,
    m: usize,
    d: usize,
    h: usize,
    w: usize,
    out_dsc: *mut f64,
    out_nsd: *mut f64,
    out_sem_prob: *mut f32,
) -> SegqcStatus {
    guard(|| {
        if model.is_null() || hierarchy.is_null() || image.is_null() {
            return Err((SegqcStatus::InvalidArgument, "null handle or buffer".into()));
        }
        if out_dsc.is_null() || out_nsd.is_null() {
            return Err((SegqcStatus::InvalidArgument, "null output pointer".into()));
        }
        let model = &(*model).inner;
        let hier = &(*hierarchy).inner;
        let img = std::slice::from_raw_parts(image, m * d * h * w);
        let volume = Volume::new(
            Array4::from_shape_vec((m, d, h, w), img.to_vec()).expect("exact size"),
            [1.0; 3],
            (0..m).map(|i| format!("M{}", i + 1)).collect(),
        )
        .map_err(err_of)?;
        let query = labels_from_raw(labels, d, h, w, hier)?;
        let pred = model.predict(&volume, &query).map_err(err_of)?;
        *out_dsc = pred.dsc_pred;
        *out_nsd = pred.nsd_pred;
        if !out_sem_prob.is_null() {
            let c = model.config().num_classes;
            let dst = std::slice::from_raw_parts_mut(out_sem_prob, c * d * h * w);
            dst.copy_from_slice(pred.sem_prob.as_slice().expect("contiguous"));
        }
        Ok(())
    })
}

/// Multi-class Dice between two label volumes.
///
/// # Safety
/// `query`/`gt` must hold `d·h·w` bytes; `hierarchy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segqc_multiclass_dsc(
    hierarchy: *const SegqcHierarchy,
    query: *const u8,
    gt: *const u8,
    d: usize,
    h: usize,
    w: usize,
    out: *mut f64,
) -> SegqcStatus {
    guard(|| {
        if hierarchy.is_null() || out.is_null() {
            return Err((SegqcStatus::InvalidArgument, "null handle or output".into()));
        }
        let hier = &(*hierarchy).inner;
        let q = labels_from_raw(query, d, h, w, hier)?;
        let g = labels_from_raw(gt, d, h, w, hier)?;
        *out = multiclass_dsc(&q, &g).map_err(err_of)?;
        Ok(())
    })
}

/// Class-averaged normalized surface dice at `tolerance_vox`.
///
/// # Safety
/// `query`/`gt` must hold `d·h·w` bytes; `hierarchy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segqc_nsd(
    hierarchy: *const SegqcHierarchy,
    query: *const u8,
    gt: *const u8,
    d: usize,
    h: usize,
    w: usize,
    tolerance_vox: f64,
    out: *mut f64,
) -> SegqcStatus {
    guard(|| {
        if hierarchy.is_null() || out.is_null() {
            return Err((SegqcStatus::InvalidArgument, "null handle or output".into()));
        }
        let hier = &(*hierarchy).inner;
        let q = labels_from_raw(query, d, h, w, hier)?;
        let g = labels_from_raw(gt, d, h, w, hier)?;
        *out = nsd(&one_hot(&q), &one_hot(&g), tolerance_vox).map_err(err_of)?;
        Ok(())
    })
}

/// Ground-truth segmentation error map: per class, the symmetric difference
/// of the one-hot channels. `out_sem` receives `num_classes·d·h·w` bytes of
/// 0/1.
///
/// # Safety
/// Buffer sizes as documented; `hierarchy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn segqc_sem_ground_truth(
    hierarchy: *const SegqcHierarchy,
    query: *const u8,
    gt: *const u8,
    d: usize,
    h: usize,
    w: usize,
    out_sem: *mut u8,
) -> SegqcStatus {
    guard(|| {
        if hierarchy.is_null() || out_sem.is_null() {
            return Err((SegqcStatus::InvalidArgument, "null handle or output".into()));
        }
        let hier = &(*hierarchy).inner;
        let q = labels_from_raw(query, d, h, w, hier)?;
        let g = labels_from_raw(gt, d, h, w, hier)?;
        let sem = sem_ground_truth(&q, &g).map_err(err_of)?;
        let c = hier.num_classes();
        let dst = std::slice::from_raw_parts_mut(out_sem, c * d * h * w);
        for (o, &b) in dst.iter_mut().zip(sem.data().iter()) {
            *o = b as u8;
        }
        Ok(())
    })
}
