//! C interface to the `selig` engine.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every entry point returns a
//! [`SeligStatus`]; on failure `selig_last_error` describes the problem.
//! Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use selig::estimators::{estimate, Estimand, EstimateReport, Method};
use selig::inference::{bootstrap, BootstrapSpec};
use selig::learners::FeatureMode;
use selig::nuisance::LearnerConfig;
use selig::oracle::{enumerate_truth, ExactPopulation};
use selig::panel::{CovariateSchema, PanelDataset};
use selig::simlab::{generate, CovariateMode, OutcomeKind, SimulationConfig};
use selig::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeligStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Input data or configuration rejected.
    Validation = 3,
    /// Estimation failed on valid input.
    Estimation = 4,
    IndexOutOfRange = 5,
    Panic = 6,
}

/// A validated panel dataset.
pub struct SeligDataset {
    inner: PanelDataset,
}

/// Estimates for a batch of (estimand, method) pairs.
pub struct SeligReport {
    rows: Vec<EstimateReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NUL stripped"));
}

struct Failure(SeligStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = if e.is_validation() {
            SeligStatus::Validation
        } else {
            SeligStatus::Estimation
        };
        Failure(status, e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn run(f: impl FnOnce() -> Outcome) -> SeligStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SeligStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SeligStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SeligStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SeligStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn dataset<'a>(p: *const SeligDataset) -> Result<&'a PanelDataset, Failure> {
    p.as_ref().map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Outcome {
    if out.is_null() {
        return Err(null(what));
    }
    *out = value;
    Ok(())
}

fn learner_config(features: Option<&str>) -> Result<LearnerConfig, Failure> {
    let mut cfg = LearnerConfig::default();
    if let Some(f) = features {
        cfg.features = f.parse::<FeatureMode>()?;
    }
    Ok(cfg)
}

fn parse_estimands(spec: &str) -> Result<Vec<Estimand>, Failure> {
    let mut out = Vec::new();
    for line in spec.lines().map(str::trim).filter(|l| !l.is_empty()) {
        out.extend(Estimand::parse_many(line)?);
    }
    if out.is_empty() {
        return Err(Failure(
            SeligStatus::InvalidArgument,
            "no estimands given".into(),
        ));
    }
    Ok(out)
}

fn parse_methods(spec: &str) -> Result<Vec<Method>, Failure> {
    spec.split(',')
        .map(|m| m.parse::<Method>().map_err(Failure::from))
        .collect()
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn selig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn selig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a panel CSV with its covariate schema JSON.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn selig_dataset_load(
    csv_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut SeligDataset,
) -> SeligStatus {
    run(|| {
        let csv_path = text(csv_path, "csv_path")?;
        let schema = CovariateSchema::load(text(schema_path, "schema_path")?)?;
        let inner = PanelDataset::load_csv(csv_path, &schema)?;
        put(out, Box::into_raw(Box::new(SeligDataset { inner })), "out")
    })
}

/// Parses a panel from in-memory CSV and schema JSON text.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn selig_dataset_from_text(
    csv_text: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut SeligDataset,
) -> SeligStatus {
    run(|| {
        let csv_text = text(csv_text, "csv_text")?;
        let schema = CovariateSchema::from_json(text(schema_json, "schema_json")?)?;
        let inner = PanelDataset::read_csv(csv_text.as_bytes(), &schema)?;
        put(out, Box::into_raw(Box::new(SeligDataset { inner })), "out")
    })
}

/// Draws one panel from the built-in simulation design.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn selig_dataset_simulate(
    n: usize,
    delta: f64,
    binary_outcome: bool,
    misspecified: bool,
    seed: u64,
    out: *mut *mut SeligDataset,
) -> SeligStatus {
    run(|| {
        let cfg = SimulationConfig {
            n,
            reps: 1,
            delta,
            outcome: if binary_outcome {
                OutcomeKind::Binary
            } else {
                OutcomeKind::Continuous
            },
            covariates: if misspecified {
                CovariateMode::Misspecified
            } else {
                CovariateMode::Correct
            },
            seed,
            ..SimulationConfig::default()
        };
        let (inner, _) = generate(&cfg)?;
        put(out, Box::into_raw(Box::new(SeligDataset { inner })), "out")
    })
}

/// Number of units; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn selig_dataset_units(ds: *const SeligDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Number of periods; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn selig_dataset_horizon(ds: *const SeligDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.horizon())
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn selig_dataset_free(ds: *mut SeligDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// One estimate. `features` may be NULL (main effects). `std_error`
/// receives the influence-function standard error for `dr`, NaN otherwise;
/// it may be NULL.
///
/// # Safety
/// `ds` must be a live handle; strings NUL-terminated; `estimate_out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn selig_estimate(
    ds: *const SeligDataset,
    estimand: *const c_char,
    method: *const c_char,
    features: *const c_char,
    estimate_out: *mut f64,
    std_error: *mut f64,
) -> SeligStatus {
    run(|| {
        let data = dataset(ds)?;
        let e = Estimand::parse(text(estimand, "estimand")?)?;
        let m: Method = text(method, "method")?.parse()?;
        let cfg = learner_config(optional_text(features, "features")?)?;
        let r = estimate(data, &cfg, &[e], &[m])?.remove(0);
        if !std_error.is_null() {
            *std_error = r.std_error.unwrap_or(f64::NAN);
        }
        put(estimate_out, r.estimate, "estimate_out")
    })
}

/// One estimate with a percentile bootstrap interval.
///
/// # Safety
/// As [`selig_estimate`]; `low` and `high` must be writable.
#[no_mangle]
pub unsafe extern "C" fn selig_estimate_ci(
    ds: *const SeligDataset,
    estimand: *const c_char,
    method: *const c_char,
    features: *const c_char,
    replicates: usize,
    level: f64,
    seed: u64,
    estimate_out: *mut f64,
    low: *mut f64,
    high: *mut f64,
) -> SeligStatus {
    run(|| {
        let data = dataset(ds)?;
        let e = Estimand::parse(text(estimand, "estimand")?)?;
        let m: Method = text(method, "method")?.parse()?;
        let cfg = learner_config(optional_text(features, "features")?)?;
        let spec = BootstrapSpec {
            replicates,
            level,
            seed,
            ..BootstrapSpec::default()
        };
        let r = bootstrap(data, &cfg, &[e], &[m], &spec)?.remove(0);
        let ci = r.interval.expect("bootstrap sets the interval");
        if low.is_null() || high.is_null() {
            return Err(null("interval output"));
        }
        *low = ci.low;
        *high = ci.high;
        put(estimate_out, r.estimate, "estimate_out")
    })
}

/// Estimates for newline-separated estimands and comma-separated methods,
/// stored in estimand-major order.
///
/// # Safety
/// As [`selig_estimate`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn selig_report_new(
    ds: *const SeligDataset,
    estimands: *const c_char,
    methods: *const c_char,
    features: *const c_char,
    out: *mut *mut SeligReport,
) -> SeligStatus {
    run(|| {
        let data = dataset(ds)?;
        let es = parse_estimands(text(estimands, "estimands")?)?;
        let ms = parse_methods(text(methods, "methods")?)?;
        let cfg = learner_config(optional_text(features, "features")?)?;
        let rows = estimate(data, &cfg, &es, &ms)?;
        put(out, Box::into_raw(Box::new(SeligReport { rows })), "out")
    })
}

/// Number of rows; 0 for NULL.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn selig_report_len(r: *const SeligReport) -> usize {
    r.as_ref().map_or(0, |r| r.rows.len())
}

/// Point estimate of row `i`.
///
/// # Safety
/// `r` must be a live handle; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn selig_report_estimate(
    r: *const SeligReport,
    i: usize,
    value: *mut f64,
) -> SeligStatus {
    run(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        let row = r.rows.get(i).ok_or_else(|| {
            Failure(
                SeligStatus::IndexOutOfRange,
                format!("row {i} of {}", r.rows.len()),
            )
        })?;
        put(value, row.estimate, "value")
    })
}

/// Label of row `i` as `estimand/method`; free with [`selig_string_free`].
///
/// # Safety
/// `r` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn selig_report_label(
    r: *const SeligReport,
    i: usize,
    out: *mut *mut c_char,
) -> SeligStatus {
    run(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        let row = r.rows.get(i).ok_or_else(|| {
            Failure(
                SeligStatus::IndexOutOfRange,
                format!("row {i} of {}", r.rows.len()),
            )
        })?;
        let label = format!("{}/{}", row.estimand, row.method).replace('\0', " ");
        put(
            out,
            CString::new(label).expect("NUL stripped").into_raw(),
            "out",
        )
    })
}

/// # Safety
/// `r` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn selig_report_free(r: *mut SeligReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn selig_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Exact truth of an estimand on a finite population (`d1`, `d2` or a
/// population file).
///
/// # Safety
/// Strings NUL-terminated; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn selig_oracle_truth(
    population: *const c_char,
    estimand: *const c_char,
    value: *mut f64,
) -> SeligStatus {
    run(|| {
        let pop = ExactPopulation::builtin_or_load(text(population, "population")?)?;
        let e = Estimand::parse(text(estimand, "estimand")?)?;
        put(value, enumerate_truth(&pop, &e)?.value, "value")
    })
}
