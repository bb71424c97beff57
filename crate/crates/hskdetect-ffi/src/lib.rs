//! C ABI over the heteroskedasticity test.
//!
//! Callers hold opaque handles to datasets and configurations, drive the
//! test through `hsk_test_run` and read results from a plain C struct.
//! Every entry point returns a status code; on failure a thread-local
//! message is retrievable with `hsk_last_error_message`. The matching
//! declarations live in `include/hskdetect.h`.
//!
//! Safety contract: pointers must be valid for the documented lengths,
//! handles must come from the constructors here, and every handle must be
//! released exactly once with its `_free` function. Handles are not
//! thread-safe; the library itself may use worker threads internally.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use hskdetect::bootstrap::BootstrapConfig;
use hskdetect::empirical::{run_test, QuantileSource, TestConfig};
use hskdetect::locpoly::{BandwidthRule, SmootherConfig};
use hskdetect::nulldist::{self, SeriesPolicy};
use hskdetect::simulate::published_critical_value;
use hskdetect::{Dataset, DetectionFunction};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ComputationFailed = 3,
    Panic = 4,
}

/// Opaque dataset handle.
pub struct HskDataset(Dataset);

/// Opaque test configuration handle.
pub struct HskConfig(TestConfig);

/// Flat test result.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HskOutcome {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    /// 1 when the null of a constant error scale is rejected, else 0.
    pub reject: i32,
    /// Number of complete cases the test ran on.
    pub n_used: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn guard<F: FnOnce() -> HskStatus>(f: F) -> HskStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            HskStatus::Panic
        }
    }
}

/// Copies the message of the most recent error on this thread into `buf`
/// (NUL-terminated, truncated to `cap` bytes) and returns the full
/// message length in bytes. With a null `buf` or zero `cap` only the
/// length is reported.
#[no_mangle]
pub extern "C" fn hsk_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Builds a dataset from row-major covariates `x` (`n * m` values), `n`
/// responses and an optional indicator array (`delta` may be null; values
/// must be 0 or 1, 0 marking a missing response). Returns null on error.
///
/// # Safety
/// `x` must point to `n * m` readable doubles, `y` to `n` doubles and
/// `delta`, when non-null, to `n` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn hsk_dataset_new(
    x: *const f64,
    n: usize,
    m: usize,
    y: *const f64,
    delta: *const u8,
) -> *mut HskDataset {
    if x.is_null() || y.is_null() {
        set_error("x and y must be non-null");
        return std::ptr::null_mut();
    }
    if n == 0 || m == 0 {
        set_error("n and m must be positive");
        return std::ptr::null_mut();
    }
    let xs = slice::from_raw_parts(x, n * m).to_vec();
    let ys = slice::from_raw_parts(y, n).to_vec();
    let ds = if delta.is_null() { None } else { Some(slice::from_raw_parts(delta, n).to_vec()) };
    match catch_unwind(|| Dataset::from_flat(xs, m, ys, ds)) {
        Ok(Ok(d)) => Box::into_raw(Box::new(HskDataset(d))),
        Ok(Err(e)) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Releases a dataset handle. Null is a no-op.
///
/// # Safety
/// `dataset` must be null or a pointer from [`hsk_dataset_new`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn hsk_dataset_free(dataset: *mut HskDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Creates a configuration: local polynomial degree `degree`,
/// cross-validated bandwidths, estimated-scale detection weights, level
/// 0.05 and the published asymptotic critical value.
#[no_mangle]
pub extern "C" fn hsk_config_new(degree: u32) -> *mut HskConfig {
    let smoother = SmootherConfig::new(degree);
    let mut cfg = TestConfig::new(smoother, DetectionFunction::EstimatedScale);
    cfg.quantile_source = match published_critical_value(cfg.alpha) {
        Ok(b) => QuantileSource::FixedCritical(b),
        Err(_) => QuantileSource::Asymptotic,
    };
    Box::into_raw(Box::new(HskConfig(cfg)))
}

/// Releases a configuration handle. Null is a no-op.
///
/// # Safety
/// `config` must be null or an unfreed pointer from [`hsk_config_new`].
#[no_mangle]
pub unsafe extern "C" fn hsk_config_free(config: *mut HskConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn config_mut<'a>(config: *mut HskConfig) -> Result<&'a mut TestConfig, HskStatus> {
    if config.is_null() {
        set_error("config must be non-null");
        return Err(HskStatus::NullPointer);
    }
    Ok(&mut (*config).0)
}

/// Sets the test level and keeps the critical-value policy consistent
/// with it.
///
/// # Safety
/// `config` must be a valid unfreed configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hsk_config_set_alpha(config: *mut HskConfig, alpha: f64) -> HskStatus {
    let cfg = match config_mut(config) {
        Ok(c) => c,
        Err(s) => return s,
    };
    guard(|| {
        if !(0.0 < alpha && alpha < 1.0) {
            set_error(format!("alpha must be in (0, 1), got {alpha}"));
            return HskStatus::InvalidArgument;
        }
        cfg.alpha = alpha;
        if let QuantileSource::FixedCritical(_) = cfg.quantile_source {
            match published_critical_value(alpha) {
                Ok(b) => cfg.quantile_source = QuantileSource::FixedCritical(b),
                Err(e) => {
                    set_error(e.to_string());
                    return HskStatus::InvalidArgument;
                }
            }
        }
        HskStatus::Ok
    })
}

/// Fixes the bandwidth proportionality constant instead of
/// cross-validating.
///
/// # Safety
/// `config` must be a valid unfreed configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hsk_config_set_fixed_bandwidth(
    config: *mut HskConfig,
    constant: f64,
) -> HskStatus {
    let cfg = match config_mut(config) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if !(constant > 0.0 && constant.is_finite()) {
        set_error(format!("bandwidth constant must be positive and finite, got {constant}"));
        return HskStatus::InvalidArgument;
    }
    cfg.smoother.bandwidth = BandwidthRule::Fixed(constant);
    cfg.scale_smoother = None;
    HskStatus::Ok
}

/// Supplies per-row detection function values (one per dataset row, in
/// row order) in place of the estimated scale.
///
/// # Safety
/// `config` must be a valid unfreed configuration handle and `values`
/// must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn hsk_config_set_omega_values(
    config: *mut HskConfig,
    values: *const f64,
    len: usize,
) -> HskStatus {
    let cfg = match config_mut(config) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if values.is_null() {
        set_error("values must be non-null");
        return HskStatus::NullPointer;
    }
    if len < 2 {
        set_error("need at least 2 detection values");
        return HskStatus::InvalidArgument;
    }
    cfg.detection = DetectionFunction::User(slice::from_raw_parts(values, len).to_vec());
    HskStatus::Ok
}

/// Switches the critical value to the exact quantile of `sup |B0|`.
///
/// # Safety
/// `config` must be a valid unfreed configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hsk_config_set_critical_exact(config: *mut HskConfig) -> HskStatus {
    let cfg = match config_mut(config) {
        Ok(c) => c,
        Err(s) => return s,
    };
    cfg.quantile_source = QuantileSource::Asymptotic;
    HskStatus::Ok
}

/// Switches the critical value to a caller-supplied threshold.
///
/// # Safety
/// `config` must be a valid unfreed configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hsk_config_set_critical_fixed(
    config: *mut HskConfig,
    critical: f64,
) -> HskStatus {
    let cfg = match config_mut(config) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if !(critical > 0.0 && critical.is_finite()) {
        set_error(format!("critical value must be positive and finite, got {critical}"));
        return HskStatus::InvalidArgument;
    }
    cfg.quantile_source = QuantileSource::FixedCritical(critical);
    HskStatus::Ok
}

/// Switches the critical value to the smooth residual bootstrap with
/// `replications` resamples driven by `seed`.
///
/// # Safety
/// `config` must be a valid unfreed configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hsk_config_set_bootstrap(
    config: *mut HskConfig,
    replications: usize,
    seed: u64,
) -> HskStatus {
    let cfg = match config_mut(config) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if replications < 100 {
        set_error(format!("bootstrap needs at least 100 replications, got {replications}"));
        return HskStatus::InvalidArgument;
    }
    cfg.quantile_source = QuantileSource::Bootstrap(BootstrapConfig::new(replications, seed));
    HskStatus::Ok
}

/// Runs the test and fills `out`.
///
/// # Safety
/// `dataset` and `config` must be valid unfreed handles and `out` must
/// point to writable memory for one [`HskOutcome`].
#[no_mangle]
pub unsafe extern "C" fn hsk_test_run(
    dataset: *const HskDataset,
    config: *const HskConfig,
    out: *mut HskOutcome,
) -> HskStatus {
    if dataset.is_null() || config.is_null() || out.is_null() {
        set_error("dataset, config and out must be non-null");
        return HskStatus::NullPointer;
    }
    let data = &(*dataset).0;
    let cfg = &(*config).0;
    guard(|| match run_test(data, cfg) {
        Ok(outcome) => {
            *out = HskOutcome {
                statistic: outcome.statistic,
                critical_value: outcome.critical_value,
                p_value: outcome.p_value,
                reject: i32::from(outcome.reject),
                n_used: outcome.n_used,
            };
            HskStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            HskStatus::ComputationFailed
        }
    })
}

/// Writes the published critical value `b_alpha` (series threshold,
/// 1.1779 at the 5% level) to `out`.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn hsk_published_critical_value(alpha: f64, out: *mut f64) -> HskStatus {
    if out.is_null() {
        set_error("out must be non-null");
        return HskStatus::NullPointer;
    }
    match published_critical_value(alpha) {
        Ok(b) => {
            *out = b;
            HskStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            HskStatus::InvalidArgument
        }
    }
}

/// Writes the exact `1 - alpha` quantile of `sup |B0|` to `out`.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn hsk_exact_critical_value(alpha: f64, out: *mut f64) -> HskStatus {
    if out.is_null() {
        set_error("out must be non-null");
        return HskStatus::NullPointer;
    }
    match nulldist::quantile_sup_bridge(alpha, SeriesPolicy::default()) {
        Ok(b) => {
            *out = b;
            HskStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            HskStatus::InvalidArgument
        }
    }
}
