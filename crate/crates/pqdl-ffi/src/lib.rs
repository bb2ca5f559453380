//! C ABI for the pqdl library.
//!
//! Handles are opaque pointers; every function returns a [`PqdlStatus`] and
//! writes results through out-parameters. The last error message is kept in
//! thread-local storage and can be fetched with
//! [`pqdl_last_error_message`]. Panics are caught at the boundary and
//! reported as `Panic`.
//!
//! The header `include/pqdl.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use pqdl::config::{load_experiment, Experiment};
use pqdl::error::Error;
use pqdl::matrix::Matrix;
use pqdl::stats::{bootstrap_snr, EvalMatrix, ResampleMode};

/// Status codes returned by every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqdlStatus {
    Ok = 0,
    /// Bad config file, bad arguments, incompatible model/dataset.
    ConfigError = 1,
    /// Training, coding or I/O failure.
    RuntimeError = 2,
    NullArgument = 3,
    InvalidUtf8 = 4,
    /// A panic crossed the boundary; see the last error message.
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: Vec<u8> = msg.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> PqdlStatus {
    if err.is_config() {
        PqdlStatus::ConfigError
    } else {
        PqdlStatus::RuntimeError
    }
}

fn catch<F: FnOnce() -> PqdlStatus>(f: F) -> PqdlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&msg);
            PqdlStatus::Panic
        }
    }
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, PqdlStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PqdlStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("string is not valid UTF-8");
            Err(PqdlStatus::InvalidUtf8)
        }
    }
}

/// Opaque experiment handle.
pub struct PqdlExperiment {
    inner: Experiment,
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be NULL (then only the
/// length is returned).
#[no_mangle]
pub unsafe extern "C" fn pqdl_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pqdl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates an experiment config (JSON). On success writes a
/// handle that must be freed with [`pqdl_experiment_free`].
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn pqdl_experiment_load(
    config_path: *const c_char,
    seed_offset: u64,
    out: *mut *mut PqdlExperiment,
) -> PqdlStatus {
    catch(|| {
        if out.is_null() {
            set_error("null out pointer");
            return PqdlStatus::NullArgument;
        }
        let path = match path_arg(config_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_experiment(&path, seed_offset) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PqdlExperiment { inner }));
                PqdlStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Frees a handle returned by [`pqdl_experiment_load`]. NULL is a no-op.
///
/// # Safety
/// `exp` must be a pointer previously returned by `pqdl_experiment_load`
/// and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn pqdl_experiment_free(exp: *mut PqdlExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

fn dispatch(
    exp: &Experiment,
    command: &str,
    out_dir: &Path,
    jobs: usize,
    message: Option<&Path>,
) -> pqdl::Result<()> {
    use pqdl::runner;
    match command {
        "train" => runner::cmd_train(exp, out_dir, jobs).map(drop),
        "profile" => runner::cmd_profile(exp, out_dir, jobs).map(drop),
        "mdl" => runner::cmd_mdl(exp, out_dir, jobs).map(drop),
        "encode" => runner::cmd_encode(exp, out_dir, jobs).map(drop),
        "decode" => {
            let message =
                message.ok_or_else(|| Error::Config("decode requires a message path".into()))?;
            runner::cmd_decode(exp, message, out_dir, jobs).map(drop)
        }
        "snr" => runner::cmd_snr(exp, out_dir, jobs).map(drop),
        "width-sweep" => runner::cmd_width_sweep(exp, out_dir, jobs).map(drop),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    }
}

/// Runs one subcommand (`train`, `profile`, `mdl`, `encode`, `decode`,
/// `snr`, `width-sweep`) against the experiment, writing outputs into
/// `out_dir`. `message_path` is only read by `decode` and may be NULL
/// otherwise.
///
/// # Safety
/// `exp` must be a live handle; string arguments must be NUL-terminated or
/// NULL where documented.
#[no_mangle]
pub unsafe extern "C" fn pqdl_run_command(
    exp: *const PqdlExperiment,
    command: *const c_char,
    out_dir: *const c_char,
    jobs: usize,
    message_path: *const c_char,
) -> PqdlStatus {
    catch(|| {
        if exp.is_null() {
            set_error("null experiment handle");
            return PqdlStatus::NullArgument;
        }
        let command = match path_arg(command) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let out_dir = match path_arg(out_dir) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let message = if message_path.is_null() {
            None
        } else {
            match path_arg(message_path) {
                Ok(p) => Some(p),
                Err(s) => return s,
            }
        };
        let command = command.to_string_lossy().into_owned();
        match dispatch(&(*exp).inner, &command, &out_dir, jobs, message.as_deref()) {
            Ok(()) => PqdlStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Converts a description-length difference in nats into decimal orders of
/// evidence.
#[no_mangle]
pub extern "C" fn pqdl_log10_bayes_factor(delta_nats: f64) -> f64 {
    pqdl::prequential::log10_bayes_factor(delta_nats)
}

/// Trapezoid description-length estimate from a generalization curve of
/// `len` points `(sizes[i], nats[i])` with strictly increasing sizes.
///
/// # Safety
/// `sizes` and `nats` must point to `len` readable elements; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn pqdl_auc_dl(
    num_classes: usize,
    sizes: *const usize,
    nats: *const f64,
    len: usize,
    out: *mut f64,
) -> PqdlStatus {
    catch(|| {
        if sizes.is_null() || nats.is_null() || out.is_null() {
            set_error("null array argument");
            return PqdlStatus::NullArgument;
        }
        let sizes = std::slice::from_raw_parts(sizes, len);
        let nats = std::slice::from_raw_parts(nats, len);
        let curve: Vec<(usize, f64)> = sizes.iter().copied().zip(nats.iter().copied()).collect();
        match pqdl::prequential::auc_dl(num_classes, &curve) {
            Ok(dl) => {
                *out = dl;
                PqdlStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Bootstrap SNR between two loss matrices laid out row-major as
/// `num_seeds x num_examples`. `joint` non-zero resamples seed rows as well
/// as example columns. Writes the SNR and the mean gap (nats).
///
/// # Safety
/// `losses_a` and `losses_b` must point to `num_seeds * num_examples`
/// readable doubles; `out_snr` and `out_delta` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn pqdl_bootstrap_snr(
    losses_a: *const f64,
    losses_b: *const f64,
    num_seeds: usize,
    num_examples: usize,
    n_boot: usize,
    seed: u64,
    joint: i32,
    out_snr: *mut f64,
    out_delta: *mut f64,
) -> PqdlStatus {
    catch(|| {
        if losses_a.is_null() || losses_b.is_null() || out_snr.is_null() || out_delta.is_null() {
            set_error("null argument");
            return PqdlStatus::NullArgument;
        }
        let n = num_seeds * num_examples;
        let a = std::slice::from_raw_parts(losses_a, n);
        let b = std::slice::from_raw_parts(losses_b, n);
        let build = |name: &str, data: &[f64]| -> pqdl::Result<EvalMatrix> {
            EvalMatrix::new(
                name,
                (0..num_seeds as u64).collect(),
                (0..num_examples as u64).collect(),
                Matrix::from_vec(num_seeds, num_examples, data.to_vec())?,
            )
        };
        let mode = if joint != 0 {
            ResampleMode::Joint
        } else {
            ResampleMode::ExamplesOnly
        };
        let result = build("a", a)
            .and_then(|ma| build("b", b).map(|mb| (ma, mb)))
            .and_then(|(ma, mb)| bootstrap_snr(&ma, &mb, n_boot, seed, mode));
        match result {
            Ok(est) => {
                *out_snr = est.snr;
                *out_delta = est.delta_mean;
                PqdlStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
