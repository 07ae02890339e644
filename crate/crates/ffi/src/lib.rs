//! C ABI over the `tidsit` core: load a checkpoint, predict SoH for one raw
//! discharge cycle, and compute the evaluation metrics.
//!
//! Every fallible function returns a [`TidsitStatus`] and writes its result
//! through an out pointer. On failure a message is kept per thread and can
//! be copied out with [`tidsit_last_error_message`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tidsit::data::{compute_soh, pad_and_mask, Cycle, HISTORY_FILL, NUM_FEATURES};
use tidsit::evaluation::{rmse, rmse_percent};
use tidsit::model::Checkpoint;
use tidsit::{Error, ErrorCategory};

/// Result code of every fallible call. Values 2 to 5 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TidsitStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Bad argument or configuration.
    Config = 2,
    /// Malformed data or checkpoint.
    Data = 3,
    /// Numerical failure (non-finite value, shape contract).
    Numeric = 4,
    /// File system error.
    Io = 5,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 6,
    /// Internal panic; the handle involved should be freed.
    Panic = 7,
}

/// A loaded checkpoint. Opaque to C; create with [`tidsit_model_load`] and
/// release with [`tidsit_model_free`]. Safe to share between threads for
/// prediction.
pub struct TidsitModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TidsitStatus {
    match e.category() {
        ErrorCategory::Config => TidsitStatus::Config,
        ErrorCategory::Data => TidsitStatus::Data,
        ErrorCategory::Numeric => TidsitStatus::Numeric,
        ErrorCategory::Io => TidsitStatus::Io,
    }
}

struct Failure(TidsitStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(TidsitStatus::NullPointer, format!("`{name}` is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TidsitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TidsitStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            TidsitStatus::Panic
        }
    }
}

/// # Safety
/// `p` is NULL or points to `len` readable values.
unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `out` is NULL or valid for one write.
unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

/// NUL-terminated library version; static storage, never freed.
#[no_mangle]
pub extern "C" fn tidsit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length plus one,
/// or 0 if no error has been recorded. Pass `buf = NULL, len = 0` to query
/// the size.
///
/// # Safety
/// `buf` is NULL or points to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tidsit_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Load a checkpoint written by `tidsit train`. On success `*out` owns a new
/// handle.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tidsit_model_load(path: *const c_char, out: *mut *mut TidsitModel) -> TidsitStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| Failure(TidsitStatus::InvalidUtf8, format!("path is not UTF-8: {e}")))?;
        let checkpoint = Checkpoint::load(Path::new(path))?;
        out.write(Box::into_raw(Box::new(TidsitModel { checkpoint })));
        Ok(())
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `model` is NULL or came from [`tidsit_model_load`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn tidsit_model_free(model: *mut TidsitModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` is NULL or a live handle.
unsafe fn model_ref<'a>(model: *const TidsitModel) -> Result<&'a TidsitModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

/// Maximum number of samples per cycle (`T`).
///
/// # Safety
/// `model` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tidsit_model_pad_len(model: *const TidsitModel, out: *mut usize) -> TidsitStatus {
    guard(|| write(out, model_ref(model)?.checkpoint.model.config.pad_len, "out"))
}

/// Number of previous SoH values the model expects (`p`).
///
/// # Safety
/// `model` is a live handle; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tidsit_model_history_len(model: *const TidsitModel, out: *mut usize) -> TidsitStatus {
    guard(|| write(out, model_ref(model)?.checkpoint.model.config.history_len, "out"))
}

/// Number of readings per sample: voltage (V), current (A), temperature (°C).
#[no_mangle]
pub extern "C" fn tidsit_num_features() -> usize {
    NUM_FEATURES
}

/// Predict the SoH of one discharge cycle.
///
/// `timestamps` holds `n` strictly increasing seconds since cycle start and
/// `readings` holds `n` rows of voltage, current, temperature in raw units
/// (row-major, `3·n` values). `history` holds `history_len` previous SoH
/// values, most recent first; pass `history_len = 0` to use the fresh-cell
/// fill instead, otherwise it must equal [`tidsit_model_history_len`].
///
/// # Safety
/// `model` is a live handle; the arrays hold the stated number of values;
/// `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tidsit_model_predict(
    model: *const TidsitModel,
    timestamps: *const f64,
    readings: *const f64,
    n: usize,
    history: *const f64,
    history_len: usize,
    out: *mut f64,
) -> TidsitStatus {
    guard(|| {
        let ckpt = &model_ref(model)?.checkpoint;
        let p = ckpt.model.config.history_len;
        let ts = slice(timestamps, n, "timestamps")?;
        let flat = slice(readings, n * NUM_FEATURES, "readings")?;
        let history = match history_len {
            0 => vec![HISTORY_FILL; p],
            k if k == p => slice(history, k, "history")?.to_vec(),
            k => {
                return Err(Failure(
                    TidsitStatus::Config,
                    format!("history_len is {k}; the model expects {p} (or 0 for the fill)"),
                ))
            }
        };
        let rows = flat.chunks_exact(NUM_FEATURES).map(|r| [r[0], r[1], r[2]]).collect();
        // capacity and label are unknown for a cycle being predicted and unused by the model
        let cycle = Cycle::new("ffi", 0, ts.to_vec(), rows, 1.0)?;
        let padded = pad_and_mask(&cycle, HISTORY_FILL, &ckpt.stats, ckpt.model.config.pad_len, history)?;
        write(out, ckpt.model.predict(&padded)?, "out")
    })
}

/// `c_current / c_rated`.
///
/// # Safety
/// `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tidsit_compute_soh(c_current: f64, c_rated: f64, out: *mut f64) -> TidsitStatus {
    guard(|| write(out, compute_soh(c_current, c_rated)?, "out"))
}

/// Root-mean-square error of `n` predictions.
///
/// # Safety
/// `pred` and `target` hold `n` values; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tidsit_rmse(pred: *const f64, target: *const f64, n: usize, out: *mut f64) -> TidsitStatus {
    guard(|| write(out, rmse(slice(pred, n, "pred")?, slice(target, n, "target")?)?, "out"))
}

/// Relative RMSE in percent: `100·sqrt(mean(((pred − true)/true)²))`.
///
/// # Safety
/// `pred` and `target` hold `n` values; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn tidsit_rmse_percent(
    pred: *const f64,
    target: *const f64,
    n: usize,
    out: *mut f64,
) -> TidsitStatus {
    guard(|| {
        write(
            out,
            rmse_percent(slice(pred, n, "pred")?, slice(target, n, "target")?)?,
            "out",
        )
    })
}
