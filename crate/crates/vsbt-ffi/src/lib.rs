//! C ABI over the segmentation pipeline: fit a series, then read split
//! times, labels, change probabilities, or the full results JSON through
//! an opaque handle.
//!
//! Conventions:
//! * every function returns either a [`VsbtStatus`] or a value that is
//!   safe on failure (0 / null);
//! * handles from `vsbt_fit_series` are freed with `vsbt_fit_free`,
//!   strings from `vsbt_fit_to_json` with `vsbt_string_free`;
//! * on any non-OK status, `vsbt_last_error` returns a message valid on
//!   the calling thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vsbt::cli::{fit_series, resolve_fit_settings, CliError, ConfigFile, FitFlags};
use vsbt::persist::{Manifest, ResultsFile};

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Status codes returned by the fitting entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsbtStatus {
    Ok = 0,
    /// A required pointer argument was null or a length was zero.
    NullArgument = 1,
    /// The series or configuration was rejected.
    InvalidInput = 2,
    /// The fit failed numerically.
    NumericalFailure = 3,
    /// An internal panic was caught at the boundary.
    Panic = 4,
}

/// Opaque fitted-model handle.
pub struct VsbtFit {
    results: ResultsFile,
}

/// Message for the most recent failure on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vsbt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

fn cli_status(err: &CliError) -> VsbtStatus {
    match err {
        CliError::Input(_) => VsbtStatus::InvalidInput,
        CliError::Numerical(_) => VsbtStatus::NumericalFailure,
    }
}

/// Fit the model to `data[0..len]`.
///
/// `config_json` may be null for the benchmark defaults, or a JSON
/// object with any of the fields accepted by the CLI `--config` file
/// (`d_max`, `ar_order`, `num_models`, `split_prob`, `alpha`,
/// `ar_prior`, `max_sweeps`, `tol`, `fixed_splitting`, `gate_passes`,
/// `seed`). On success writes a handle to `out`.
///
/// # Safety
/// `data` must point to `len` readable doubles; `config_json`, when not
/// null, must be a NUL-terminated UTF-8 string; `out` must be a valid
/// location to store a pointer.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_series(
    data: *const f64,
    len: usize,
    config_json: *const c_char,
    out: *mut *mut VsbtFit,
) -> VsbtStatus {
    if data.is_null() || out.is_null() || len == 0 {
        set_error("null data/out pointer or empty series".into());
        return VsbtStatus::NullArgument;
    }
    let series = std::slice::from_raw_parts(data, len).to_vec();
    let config = if config_json.is_null() {
        ConfigFile::default()
    } else {
        match CStr::from_ptr(config_json).to_str() {
            Ok(text) if text.trim().is_empty() => ConfigFile::default(),
            Ok(text) => match ConfigFile::from_json(text) {
                Ok(c) => c,
                Err(e) => {
                    set_error(e.to_string());
                    return VsbtStatus::InvalidInput;
                }
            },
            Err(e) => {
                set_error(format!("config is not UTF-8: {e}"));
                return VsbtStatus::InvalidInput;
            }
        }
    };

    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<ResultsFile, CliError> {
        let resolved = resolve_fit_settings(series.len(), &config, &FitFlags::default())?;
        let manifest = Manifest {
            command: "ffi/fit".into(),
            input: None,
            seed: resolved.seed,
            max_sweeps: resolved.options.max_sweeps,
            tol: resolved.options.tol,
            fixed_splitting: resolved.options.fixed_splitting,
        };
        Ok(fit_series(&series, &resolved, manifest)?.results)
    }));
    match outcome {
        Ok(Ok(results)) => {
            *out = Box::into_raw(Box::new(VsbtFit { results }));
            VsbtStatus::Ok
        }
        Ok(Err(err)) => {
            set_error(err.to_string());
            cli_status(&err)
        }
        Err(_) => {
            set_error("internal panic during fit".into());
            VsbtStatus::Panic
        }
    }
}

/// Free a handle from `vsbt_fit_series`. Null is a no-op.
///
/// # Safety
/// `fit` must be null or a pointer previously returned by
/// `vsbt_fit_series` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_free(fit: *mut VsbtFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

unsafe fn fit_ref<'a>(fit: *const VsbtFit) -> Option<&'a VsbtFit> {
    fit.as_ref()
}

/// Length of the fitted series, or 0 on a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_series_len(fit: *const VsbtFit) -> usize {
    fit_ref(fit).map_or(0, |f| f.results.series.len())
}

/// Whether the sweep loop converged before its cap.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_converged(fit: *const VsbtFit) -> bool {
    fit_ref(fit).is_some_and(|f| f.results.converged)
}

/// Number of internal nodes of the MAP tree (= number of split times).
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_num_splits(fit: *const VsbtFit) -> usize {
    fit_ref(fit).map_or(0, |f| f.results.report.split_times.len())
}

unsafe fn copy_into<T: Copy>(values: impl ExactSizeIterator<Item = T>, out: *mut T, cap: usize) -> usize {
    let total = values.len();
    if out.is_null() {
        return total;
    }
    for (i, v) in values.take(cap).enumerate() {
        *out.add(i) = v;
    }
    total
}

/// Copy the learned split times into `out` (up to `cap` values) and
/// return the total count. Call with a null `out` to query the count.
///
/// # Safety
/// `out` must be null or point to `cap` writable doubles; `fit` must be
/// null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_split_times(
    fit: *const VsbtFit,
    out: *mut f64,
    cap: usize,
) -> usize {
    let Some(f) = fit_ref(fit) else { return 0 };
    copy_into(f.results.report.split_times.iter().map(|s| s.time), out, cap)
}

/// Copy the per-time model labels and return the total count.
///
/// # Safety
/// `out` must be null or point to `cap` writable u32; `fit` must be null
/// or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_labels(fit: *const VsbtFit, out: *mut u32, cap: usize) -> usize {
    let Some(f) = fit_ref(fit) else { return 0 };
    copy_into(f.results.report.labels.iter().map(|&l| l as u32), out, cap)
}

/// Copy the change probabilities (one per gap, so series length − 1
/// values) and return the total count.
///
/// # Safety
/// `out` must be null or point to `cap` writable doubles; `fit` must be
/// null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_change_probabilities(
    fit: *const VsbtFit,
    out: *mut f64,
    cap: usize,
) -> usize {
    let Some(f) = fit_ref(fit) else { return 0 };
    copy_into(f.results.report.change_prob.iter().copied(), out, cap)
}

/// The full results document as a JSON string; free it with
/// `vsbt_string_free`. Returns null on a null handle or encoding error.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsbt_fit_to_json(fit: *const VsbtFit) -> *mut c_char {
    let Some(f) = fit_ref(fit) else {
        return std::ptr::null_mut();
    };
    match f.results.to_json() {
        Ok(text) => CString::new(text).map_or(std::ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Free a string from `vsbt_fit_to_json`. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer previously returned by
/// `vsbt_fit_to_json` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vsbt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
