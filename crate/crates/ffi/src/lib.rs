//! C ABI over the `osamtl` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every entry point returns an
//! [`OsamtlStatus`]; on failure a message for the calling thread is
//! available from [`osamtl_last_error_message`] until the next call.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`osamtl_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use osamtl::cli::{run_experiment, TargetsFile};
use osamtl::config::ExperimentConfig;
use osamtl::error::Error;
use osamtl::learner::{self, FeatureMap, ModelFile, ModelParams};
use osamtl::model::{differentiate, validate_dnls, DatasetFile, NoisyLabelSample, NoisySampleDnls};
use osamtl::reasoning::{one_step_reasoning, Abduction};
use osamtl::synth::generate_dataset;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsamtlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidDnls = 4,
    Failure = 5,
    Panic = 6,
}

/// A noisy sample with its diverse noisy label samples.
pub struct OsamtlDataset {
    inner: NoisySampleDnls,
}

/// Abduced targets plus the reasoning audit trail.
pub struct OsamtlTargets {
    abduction: Abduction,
    file: TargetsFile,
}

/// Trained windowed logistic model.
pub struct OsamtlModel {
    params: ModelParams,
    fm: FeatureMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(OsamtlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidDnls(_) | Error::DiversityUnreachable { .. } => OsamtlStatus::InvalidDnls,
            Error::NonFiniteLoss { .. }
            | Error::PlacementInfeasible { .. }
            | Error::MissingTruth
            | Error::PreconditionViolation
            | Error::Io(_) => OsamtlStatus::Failure,
            _ => OsamtlStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(OsamtlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OsamtlStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OsamtlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            OsamtlStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(OsamtlStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    put(out, Box::into_raw(Box::new(value)), "out")
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|e| Fail(OsamtlStatus::Failure, e.to_string()))?;
    out.write(c.into_raw());
    Ok(())
}

unsafe fn out_slice<'a>(buf: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Fail> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < need {
        return Err(Fail(OsamtlStatus::InvalidArgument, format!("buffer holds {len} values, {need} required")));
    }
    Ok(std::slice::from_raw_parts_mut(buf, need))
}

fn config(text: &str) -> Result<ExperimentConfig, Fail> {
    Ok(ExperimentConfig::from_json(text)?)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Fail> {
    serde_json::to_string(value).map_err(|e| Fail(OsamtlStatus::Failure, e.to_string()))
}

/// Message describing the most recent failure on this thread, or null.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn osamtl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn osamtl_version() -> *const c_char {
    static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    VERSION.as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a dataset JSON document (`n`, `k`, `features`, `nls`, optional
/// `true_labels`, `tau_div`).
#[no_mangle]
pub unsafe extern "C" fn osamtl_dataset_from_json(json: *const c_char, out: *mut *mut OsamtlDataset) -> OsamtlStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let file: DatasetFile =
            serde_json::from_str(text).map_err(|e| Fail(OsamtlStatus::InvalidArgument, e.to_string()))?;
        put_handle(out, OsamtlDataset { inner: file.into_sample()? })
    })
}

/// Generates a synthetic dataset from the `synth` section of an experiment
/// config.
#[no_mangle]
pub unsafe extern "C" fn osamtl_dataset_generate(
    config_json: *const c_char,
    out: *mut *mut OsamtlDataset,
) -> OsamtlStatus {
    guard(|| {
        let cfg = config(read_str(config_json, "config_json")?)?;
        put_handle(out, OsamtlDataset { inner: generate_dataset(&cfg.synth)? })
    })
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_dataset_to_json(ds: *const OsamtlDataset, out: *mut *mut c_char) -> OsamtlStatus {
    guard(|| {
        let ds = borrow(ds, "dataset")?;
        put_string(out, to_json(&DatasetFile::from_sample(&ds.inner))?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_dataset_n(ds: *const OsamtlDataset, out: *mut usize) -> OsamtlStatus {
    guard(|| put(out, borrow(ds, "dataset")?.inner.n(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_dataset_d(ds: *const OsamtlDataset, out: *mut usize) -> OsamtlStatus {
    guard(|| put(out, borrow(ds, "dataset")?.inner.d(), "out"))
}

/// Writes 1 to `passed` when every branch pair is diverse, else 0. A failing
/// gate is not an error; the violations are available as the last error
/// message.
#[no_mangle]
pub unsafe extern "C" fn osamtl_dataset_validate(ds: *const OsamtlDataset, passed: *mut i32) -> OsamtlStatus {
    let mut msg = None;
    let status = guard(|| {
        let report = validate_dnls(&borrow(ds, "dataset")?.inner);
        if !report.is_ok() {
            msg = Some(report.violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "));
        }
        put(passed, i32::from(report.is_ok()), "passed")
    });
    if let Some(m) = msg {
        set_last_error(&m);
    }
    status
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_dataset_free(ds: *mut OsamtlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Normalized Hamming distance between two label vectors of length `n`.
#[no_mangle]
pub unsafe extern "C" fn osamtl_differentiate(a: *const u8, b: *const u8, n: usize, out: *mut f64) -> OsamtlStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(null("labels"));
        }
        let a = NoisyLabelSample::new("a", std::slice::from_raw_parts(a, n).to_vec())?;
        let b = NoisyLabelSample::new("b", std::slice::from_raw_parts(b, n).to_vec())?;
        put(out, differentiate(&a, &b)?, "out")
    })
}

/// Runs one-step reasoning with the KB, policy and target specs of the
/// given experiment config.
#[no_mangle]
pub unsafe extern "C" fn osamtl_abduce(
    ds: *const OsamtlDataset,
    config_json: *const c_char,
    out: *mut *mut OsamtlTargets,
) -> OsamtlStatus {
    guard(|| {
        let ns = &borrow(ds, "dataset")?.inner;
        let cfg = config(read_str(config_json, "config_json")?)?;
        let specs = cfg.resolve_specs(ns.d());
        let abduction = one_step_reasoning(ns, &cfg.kb, &cfg.policy, &specs)?;
        let file = TargetsFile::from_abduction(&abduction);
        put_handle(out, OsamtlTargets { abduction, file })
    })
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_targets_m(t: *const OsamtlTargets, out: *mut usize) -> OsamtlStatus {
    guard(|| put(out, borrow(t, "targets")?.abduction.targets.m(), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_targets_n(t: *const OsamtlTargets, out: *mut usize) -> OsamtlStatus {
    guard(|| put(out, borrow(t, "targets")?.abduction.targets.n(), "out"))
}

/// Copies target row `c` (n values) into `buf`.
#[no_mangle]
pub unsafe extern "C" fn osamtl_targets_row(
    t: *const OsamtlTargets,
    c: usize,
    buf: *mut f64,
    len: usize,
) -> OsamtlStatus {
    guard(|| {
        let tm = &borrow(t, "targets")?.abduction.targets;
        if c >= tm.m() {
            return Err(Error::IndexOutOfRange { index: c, n: tm.m() }.into());
        }
        out_slice(buf, len, tm.n())?.copy_from_slice(tm.row(c));
        Ok(())
    })
}

/// Targets JSON including groundings, inconsistencies, revisions and
/// residuals.
#[no_mangle]
pub unsafe extern "C" fn osamtl_targets_to_json(t: *const OsamtlTargets, out: *mut *mut c_char) -> OsamtlStatus {
    guard(|| put_string(out, to_json(&borrow(t, "targets")?.file)?))
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_targets_free(t: *mut OsamtlTargets) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Trains on the abduced targets with the alpha, feature map and training
/// settings of the config.
#[no_mangle]
pub unsafe extern "C" fn osamtl_train(
    ds: *const OsamtlDataset,
    t: *const OsamtlTargets,
    config_json: *const c_char,
    out: *mut *mut OsamtlModel,
) -> OsamtlStatus {
    guard(|| {
        let ns = &borrow(ds, "dataset")?.inner;
        let abduction = &borrow(t, "targets")?.abduction;
        let cfg = config(read_str(config_json, "config_json")?)?;
        let pit = abduction.per_instance();
        let alpha = cfg.resolve_alpha(pit.m())?;
        let fm = FeatureMap::new(cfg.feature_map.window_radius, ns.instance_sample.feature_width())?;
        let trained = learner::train(ns, &pit, &alpha, &fm, &cfg.train)?;
        put_handle(out, OsamtlModel { params: trained.params, fm })
    })
}

/// Writes one probability per instance of `ds` into `buf`.
#[no_mangle]
pub unsafe extern "C" fn osamtl_model_predict(
    model: *const OsamtlModel,
    ds: *const OsamtlDataset,
    buf: *mut f64,
    len: usize,
) -> OsamtlStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        let is = &borrow(ds, "dataset")?.inner.instance_sample;
        let pred = learner::predict_all(&model.params, &model.fm, is, learner::DEFAULT_CLAMP_EPS)?;
        out_slice(buf, len, pred.len())?.copy_from_slice(&pred);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_model_to_json(model: *const OsamtlModel, out: *mut *mut c_char) -> OsamtlStatus {
    guard(|| {
        let model = borrow(model, "model")?;
        put_string(out, to_json(&ModelFile::new(&model.params, &model.fm))?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn osamtl_model_free(model: *mut OsamtlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Full multi-seed experiment; writes the report JSON.
#[no_mangle]
pub unsafe extern "C" fn osamtl_pipeline(config_json: *const c_char, out: *mut *mut c_char) -> OsamtlStatus {
    guard(|| {
        let cfg = config(read_str(config_json, "config_json")?)?;
        put_string(out, to_json(&run_experiment(&cfg)?)?)
    })
}
