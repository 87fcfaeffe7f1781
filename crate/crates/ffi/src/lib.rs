//! C ABI over the forecasting engine.
//!
//! Conventions at the boundary:
//! - Series and models cross as opaque handles owned by this library; the
//!   matching `*_free` releases them and accepts null.
//! - Every fallible call returns an [`NfStatus`]. On failure a thread-local
//!   message becomes readable through [`nf_last_error`] and stays valid
//!   until the same thread's next failing call.
//! - Pointers are read during the call only; nothing is retained.
//! - Panics never unwind across the boundary; they convert to
//!   [`NfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use netforecast::checkpoint::{load_checkpoint, save_checkpoint};
use netforecast::data::{
    chrono_split, fit_scaler, forward_fill, inverse, make_windows, read_series_csv,
    synth_generate, transform, write_series_csv, ScalerParams, TimeSeries,
};
use netforecast::model::{build_model, Architecture, Model, ModelConfig};
use netforecast::training::{evaluate_model, train, TrainConfig};
use netforecast::{Error, Tensor};

/// Result of every fallible call. `NF_STATUS_OK` is zero so the usual
/// `if (nf_...(...))` error check reads naturally in C.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Invalid configuration (architecture name, window, fractions).
    Config = 3,
    /// Malformed input document.
    Parse = 4,
    /// Data fails a precondition (lengths, ordering, emptiness).
    Data = 5,
    /// Array lengths or tensor shapes do not conform.
    Shape = 6,
    /// Non-finite values or other numeric breakdown.
    Numeric = 7,
    /// Checkpoint file rejected.
    Checkpoint = 8,
    /// Filesystem failure.
    Io = 9,
    /// Internal invariant violation caught at the boundary.
    Panic = 10,
}

/// A univariate bps series with epoch-second timestamps.
pub struct NfSeries {
    inner: TimeSeries,
}

/// A trained model bundled with the scaler fitted to its training split.
pub struct NfModel {
    model: Model,
    scaler: ScalerParams,
}

/// Test-split evaluation in original traffic units.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NfMetrics {
    /// Mean absolute error in bps.
    pub mae: f64,
    /// Root mean squared error in bps.
    pub rmse: f64,
    /// Weighted absolute percentage error, in percent.
    pub wape: f64,
    /// Number of evaluated windows.
    pub n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(clean).expect("NULs removed"));
}

fn status_of(err: &Error) -> NfStatus {
    match err {
        Error::Shape(_) => NfStatus::Shape,
        Error::Config(_) => NfStatus::Config,
        Error::Data(_) => NfStatus::Data,
        Error::Numeric(_) => NfStatus::Numeric,
        Error::Checkpoint(_) => NfStatus::Checkpoint,
        Error::Parse(_) => NfStatus::Parse,
        Error::Io(_) => NfStatus::Io,
    }
}

fn failure(err: Error) -> NfStatus {
    set_last_error(&err.to_string());
    status_of(&err)
}

fn null_argument(what: &str) -> NfStatus {
    set_last_error(&format!("{what} must not be null"));
    NfStatus::NullArgument
}

/// Catches panics so they surface as a status instead of unwinding into C.
fn guarded(body: impl FnOnce() -> NfStatus) -> NfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            NfStatus::Panic
        }
    }
}

/// # Safety
/// `pointer` must be null or point to a NUL-terminated string.
unsafe fn utf8_argument<'a>(
    pointer: *const c_char,
    what: &str,
) -> Result<&'a str, NfStatus> {
    if pointer.is_null() {
        return Err(null_argument(what));
    }
    CStr::from_ptr(pointer).to_str().map_err(|_| {
        set_last_error(&format!("{what} is not valid UTF-8"));
        NfStatus::InvalidUtf8
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the calling thread's most recent failure; empty before any
/// failure. Valid until the thread's next failing call.
#[no_mangle]
pub extern "C" fn nf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a `timestamp,bps` CSV (missing values as empty field).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid location
/// to store the new handle. `out` is written only on success.
#[no_mangle]
pub unsafe extern "C" fn nf_series_from_csv(
    path: *const c_char,
    out: *mut *mut NfSeries,
) -> NfStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        let path = match utf8_argument(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) => return failure(e.into()),
        };
        match read_series_csv(std::io::BufReader::new(file)) {
            Ok(series) => {
                *out = Box::into_raw(Box::new(NfSeries { inner: series }));
                NfStatus::Ok
            }
            Err(e) => failure(e),
        }
    })
}

/// Builds a series from parallel arrays. A NaN bps value marks a missing
/// sample; timestamps must be strictly increasing.
///
/// # Safety
/// `timestamps` and `bps` must point to `len` readable elements (or be
/// ignored when `len` is 0); `out` must be valid. `out` is written only on
/// success.
#[no_mangle]
pub unsafe extern "C" fn nf_series_from_values(
    timestamps: *const i64,
    bps: *const f64,
    len: usize,
    out: *mut *mut NfSeries,
) -> NfStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        if len > 0 && (timestamps.is_null() || bps.is_null()) {
            return null_argument("timestamps/bps");
        }
        let (ts, vs) = if len == 0 {
            (Vec::new(), Vec::new())
        } else {
            let ts = std::slice::from_raw_parts(timestamps, len).to_vec();
            let vs = std::slice::from_raw_parts(bps, len)
                .iter()
                .map(|&v| if v.is_nan() { None } else { Some(v) })
                .collect();
            (ts, vs)
        };
        match TimeSeries::new(ts, vs) {
            Ok(series) => {
                *out = Box::into_raw(Box::new(NfSeries { inner: series }));
                NfStatus::Ok
            }
            Err(e) => failure(e),
        }
    })
}

/// Generates the seeded synthetic diurnal traffic series.
///
/// # Safety
/// `out` must be a valid location; it is written only on success.
#[no_mangle]
pub unsafe extern "C" fn nf_series_synth(
    days: usize,
    samples_per_day: usize,
    seed: u64,
    capacity_bps: f64,
    out: *mut *mut NfSeries,
) -> NfStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        match synth_generate(days, samples_per_day, seed, capacity_bps) {
            Ok(series) => {
                *out = Box::into_raw(Box::new(NfSeries { inner: series }));
                NfStatus::Ok
            }
            Err(e) => failure(e),
        }
    })
}

/// Number of samples; 0 for null.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nf_series_len(series: *const NfSeries) -> usize {
    series.as_ref().map_or(0, |s| s.inner.len())
}

/// Number of missing samples; 0 for null.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nf_series_missing_count(series: *const NfSeries) -> usize {
    series.as_ref().map_or(0, |s| s.inner.missing_count())
}

/// Writes the series as `timestamp,bps` CSV.
///
/// # Safety
/// `series` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nf_series_to_csv(
    series: *const NfSeries,
    path: *const c_char,
) -> NfStatus {
    guarded(|| {
        let Some(series) = series.as_ref() else {
            return null_argument("series");
        };
        let path = match utf8_argument(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let mut file = match std::fs::File::create(path) {
            Ok(f) => f,
            Err(e) => return failure(e.into()),
        };
        match write_series_csv(&series.inner, &mut file) {
            Ok(()) => NfStatus::Ok,
            Err(e) => failure(e),
        }
    })
}

/// Releases a series handle; accepts null.
///
/// # Safety
/// `series` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nf_series_free(series: *mut NfSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Trains a model on the chronological training split of `series`.
///
/// The pipeline forward-fills gaps, splits at `train_fraction`, fits the
/// scaler on the training side only, and trains for `epochs` epochs with
/// the default optimizer settings. `architecture` is one of "rnn", "lstm",
/// "gru", "convlstmtransnet".
///
/// # Safety
/// `series` must be a live handle, `architecture` a NUL-terminated string,
/// and `out` a valid location. `out` is written only on success.
#[no_mangle]
pub unsafe extern "C" fn nf_train(
    series: *const NfSeries,
    architecture: *const c_char,
    window: usize,
    seed: u64,
    epochs: usize,
    train_fraction: f64,
    out: *mut *mut NfModel,
) -> NfStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        let Some(series) = series.as_ref() else {
            return null_argument("series");
        };
        let architecture = match utf8_argument(architecture, "architecture") {
            Ok(a) => a,
            Err(status) => return status,
        };
        match train_on_series(&series.inner, architecture, window, seed, epochs, train_fraction) {
            Ok(handle) => {
                *out = Box::into_raw(Box::new(handle));
                NfStatus::Ok
            }
            Err(e) => failure(e),
        }
    })
}

fn train_on_series(
    series: &TimeSeries,
    architecture: &str,
    window: usize,
    seed: u64,
    epochs: usize,
    train_fraction: f64,
) -> Result<NfModel, Error> {
    let architecture: Architecture = architecture.parse()?;
    let config = ModelConfig {
        architecture,
        window_length: window,
        seed,
        ..ModelConfig::default()
    };
    let filled = forward_fill(series)?;
    let (train_part, _) = chrono_split(&filled, train_fraction, window)?;
    let train_values = train_part.dense_values()?;
    let scaler = fit_scaler(&train_values)?;
    let dataset = make_windows(
        train_part.timestamps(),
        &transform(&train_values, &scaler),
        window,
    )?;
    let mut model = build_model(&config)?;
    let train_cfg = TrainConfig { seed, epochs, ..TrainConfig::default() };
    train(&mut model, &dataset, &train_cfg)?;
    Ok(NfModel { model, scaler })
}

/// Loads a checkpoint written by `nf_model_save` or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid location, written
/// only on success.
#[no_mangle]
pub unsafe extern "C" fn nf_model_load(
    path: *const c_char,
    out: *mut *mut NfModel,
) -> NfStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        let path = match utf8_argument(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match load_checkpoint(path) {
            Ok((model, scaler)) => {
                *out = Box::into_raw(Box::new(NfModel { model, scaler }));
                NfStatus::Ok
            }
            Err(e) => failure(e),
        }
    })
}

/// Saves the model and its scaler as a checkpoint document.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nf_model_save(
    model: *const NfModel,
    path: *const c_char,
) -> NfStatus {
    guarded(|| {
        let Some(model) = model.as_ref() else {
            return null_argument("model");
        };
        let path = match utf8_argument(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match save_checkpoint(&model.model, &model.scaler, path) {
            Ok(()) => NfStatus::Ok,
            Err(e) => failure(e),
        }
    })
}

/// The model's sliding-window length; 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nf_model_window(model: *const NfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config().window_length)
}

/// The model's architecture name as a static string; null for null input.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nf_model_architecture(model: *const NfModel) -> *const c_char {
    let Some(model) = model.as_ref() else {
        return std::ptr::null();
    };
    let name: &'static str = match model.model.architecture() {
        Architecture::Rnn => "rnn\0",
        Architecture::Lstm => "lstm\0",
        Architecture::Gru => "gru\0",
        Architecture::ConvLstmTransNet => "convlstmtransnet\0",
    };
    name.as_ptr().cast()
}

/// Predicts the next bps value from the most recent `len` observations in
/// original traffic units. `len` must equal the model's window length.
///
/// # Safety
/// `model` must be a live handle, `history_bps` must point to `len`
/// readable values, and `out_bps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nf_model_predict_next(
    model: *const NfModel,
    history_bps: *const f64,
    len: usize,
    out_bps: *mut f64,
) -> NfStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return null_argument("model");
        };
        if history_bps.is_null() || out_bps.is_null() {
            return null_argument("history_bps/out_bps");
        }
        let window = handle.model.config().window_length;
        if len != window {
            return failure(Error::Shape(format!(
                "history has {len} values but the model window is {window}"
            )));
        }
        let history = std::slice::from_raw_parts(history_bps, len);
        let scaled = transform(history, &handle.scaler);
        let input = match Tensor::new(vec![1, window, 1], scaled) {
            Ok(t) => t,
            Err(e) => return failure(e),
        };
        match handle.model.predict(&input) {
            Ok(pred) => {
                *out_bps = inverse(&[pred.data()[0]], &handle.scaler)[0];
                NfStatus::Ok
            }
            Err(e) => failure(e),
        }
    })
}

/// Evaluates the model on the held-out split of `series` in bps units.
///
/// # Safety
/// `model` and `series` must be live handles; `out` must be writable. `out`
/// is written only on success.
#[no_mangle]
pub unsafe extern "C" fn nf_model_evaluate(
    model: *const NfModel,
    series: *const NfSeries,
    train_fraction: f64,
    out: *mut NfMetrics,
) -> NfStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return null_argument("model");
        };
        let Some(series) = series.as_ref() else {
            return null_argument("series");
        };
        if out.is_null() {
            return null_argument("out");
        }
        match evaluate_on_series(handle, &series.inner, train_fraction) {
            Ok(metrics) => {
                *out = metrics;
                NfStatus::Ok
            }
            Err(e) => failure(e),
        }
    })
}

fn evaluate_on_series(
    handle: &NfModel,
    series: &TimeSeries,
    train_fraction: f64,
) -> Result<NfMetrics, Error> {
    let window = handle.model.config().window_length;
    let filled = forward_fill(series)?;
    let (_, test_part) = chrono_split(&filled, train_fraction, window)?;
    let dataset = make_windows(
        test_part.timestamps(),
        &transform(&test_part.dense_values()?, &handle.scaler),
        window,
    )?;
    let report = evaluate_model(&handle.model, &dataset, &handle.scaler)?;
    Ok(NfMetrics { mae: report.mae, rmse: report.rmse, wape: report.wape, n: report.n })
}

/// Releases a model handle; accepts null.
///
/// # Safety
/// `model` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nf_model_free(model: *mut NfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
