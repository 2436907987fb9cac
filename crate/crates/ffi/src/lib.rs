//! C ABI over `excursion_kit`.
//!
//! Panels and reports cross the boundary as opaque handles. Every fallible
//! call returns an [`EkStatus`]; on failure the message is kept per thread and
//! can be fetched with [`ek_last_error_message`]. Strings returned to the
//! caller are owned by the caller and must be released with [`ek_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use excursion_kit::analysis::analyze;
use excursion_kit::cli::{scenarios_from_str, EstimateOptions};
use excursion_kit::ingestion::{load_preset, preset_files, scenario_slices, Preset, ScenarioId};
use excursion_kit::report;
use excursion_kit::simulation::{run_scenario_traced, RunOptions};
use excursion_kit::{EstimateReport, Error, Method, PanelDataset};

static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    Numerical = 5,
    DegenerateArm = 6,
    DegenerateFold = 7,
    DegenerateCluster = 8,
    Schema = 9,
    Parse = 10,
    Io = 11,
    Json = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EkSeKind {
    Naive = 0,
    Corrected = 1,
    Cluster = 2,
}

/// Opaque panel handle.
pub struct EkPanel {
    inner: PanelDataset,
}

/// Opaque estimate handle.
pub struct EkReport {
    inner: EstimateReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> EkStatus {
    match e {
        Error::Config(_) => EkStatus::Config,
        Error::Data(_) => EkStatus::Data,
        Error::Numerical(_) => EkStatus::Numerical,
        Error::DegenerateArm { .. } => EkStatus::DegenerateArm,
        Error::DegenerateFold { .. } => EkStatus::DegenerateFold,
        Error::DegenerateCluster { .. } => EkStatus::DegenerateCluster,
        Error::Schema { .. } => EkStatus::Schema,
        Error::Parse { .. } => EkStatus::Parse,
        Error::Io { .. } => EkStatus::Io,
        Error::Json(_) => EkStatus::Json,
    }
}

enum Failure {
    Status(EkStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EkStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EkStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(EkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(EkStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::Status(EkStatus::InvalidUtf8, "output contains an interior NUL byte".into()))
}

fn write_out<T>(out: *mut *mut T, value: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    unsafe { *out = value };
    Ok(())
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn ek_version() -> *const c_char {
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Free with `ek_string_free`.
#[no_mangle]
pub extern "C" fn ek_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_deref() {
        Some(m) => CString::new(m.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ek_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a panel archive document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_panel_from_json(json: *const c_char, out: *mut *mut EkPanel) -> EkStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let panel = PanelDataset::from_json(text)?;
        panel.ensure_valid()?;
        write_out(out, Box::into_raw(Box::new(EkPanel { inner: panel })))
    })
}

/// Loads and derives a wearable dataset with a named recipe (`pamap2`, `mhealth`).
/// `scenario` may be NULL (full covariate set); `stride` 0 means 1.
///
/// # Safety
/// String arguments must be NULL or valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_panel_from_preset(
    dir: *const c_char,
    recipe: *const c_char,
    scenario: *const c_char,
    stride: usize,
    out: *mut *mut EkPanel,
) -> EkStatus {
    guard(|| {
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let preset = Preset::parse(str_arg(recipe, "recipe")?)?;
        let files = preset_files(&dir, preset)?;
        let mut panel = load_preset(&files, preset, stride.max(1))?;
        if let Some(s) = opt_str_arg(scenario, "scenario")? {
            panel = scenario_slices(&panel, ScenarioId::parse(s)?)?;
        }
        write_out(out, Box::into_raw(Box::new(EkPanel { inner: panel })))
    })
}

/// # Safety
/// `panel` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ek_panel_free(panel: *mut EkPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// # Safety
/// `panel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ek_panel_n_subjects(panel: *const EkPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_subjects())
}

/// # Safety
/// `panel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ek_panel_n_rows(panel: *const EkPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_rows())
}

/// Serializes the panel archive.
///
/// # Safety
/// `panel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_panel_to_json(panel: *const EkPanel, out: *mut *mut c_char) -> EkStatus {
    guard(|| {
        let p = panel.as_ref().ok_or_else(|| null("panel"))?;
        write_out(out, into_c_string(p.inner.to_json()?)?)
    })
}

/// Runs one estimator. `options_json` may be NULL or a JSON object with any of
/// `nuisance`, `scheme`, `trunc`, `critical`, `adjustment`, `se_basis`, `level`,
/// `seed`, `ridge_lambda`, `treatment_columns`, `outcome_columns`, `moderators`.
///
/// # Safety
/// `panel` must be a live handle; strings must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_estimate(
    panel: *const EkPanel,
    method: *const c_char,
    options_json: *const c_char,
    out: *mut *mut EkReport,
) -> EkStatus {
    guard(|| {
        let p = panel.as_ref().ok_or_else(|| null("panel"))?;
        let method = Method::parse(str_arg(method, "method")?)?;
        let opts: EstimateOptions = match opt_str_arg(options_json, "options_json")? {
            Some(s) => serde_json::from_str(s).map_err(Error::from)?,
            None => EstimateOptions::default(),
        };
        let mut cfg = opts.analysis_config()?;
        cfg.methods = vec![method];
        let mut rep = analyze(&p.inner, &cfg)?
            .reports
            .pop()
            .expect("one report per method");
        rep.config_echo = serde_json::json!({
            "nuisance": cfg.nuisance.label(),
            "scheme": cfg.scheme.to_string(),
            "trunc": cfg.trunc.label(),
        });
        write_out(out, Box::into_raw(Box::new(EkReport { inner: rep })))
    })
}

/// # Safety
/// `report` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ek_report_free(report: *mut EkReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Point estimate, or NaN for a NULL handle.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ek_report_tau(report: *const EkReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.tau_hat)
}

/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ek_report_n_clusters(report: *const EkReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.subject_scores.len())
}

/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_report_se(report: *const EkReport, kind: EkSeKind, out: *mut f64) -> EkStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let inf = r
            .inner
            .inference
            .as_ref()
            .ok_or_else(|| Failure::Status(EkStatus::Data, "report carries no inference".into()))?;
        let v = match kind {
            EkSeKind::Naive => inf.se_naive,
            EkSeKind::Corrected => inf.se_corrected,
            EkSeKind::Cluster => inf.se_cluster,
        };
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Primary confidence interval.
///
/// # Safety
/// `report` must be a live handle; `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_report_ci(report: *const EkReport, lo: *mut f64, hi: *mut f64) -> EkStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let inf = r
            .inner
            .inference
            .as_ref()
            .ok_or_else(|| Failure::Status(EkStatus::Data, "report carries no inference".into()))?;
        if lo.is_null() || hi.is_null() {
            return Err(null("interval output"));
        }
        *lo = inf.ci_lo;
        *hi = inf.ci_hi;
        Ok(())
    })
}

/// Report record as JSON; `include_influence` non-zero keeps the influence vector.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_report_to_json(
    report: *const EkReport,
    include_influence: i32,
    out: *mut *mut c_char,
) -> EkStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let rec = report::estimate_record(&r.inner, r.inner.subject_scores.len(), include_influence != 0);
        write_out(out, into_c_string(rec.to_string())?)
    })
}

/// Runs every scenario of a TOML simulation config and returns a JSON array of
/// per-(scenario, method) records. `workers` 0 uses available parallelism.
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ek_simulate(config_toml: *const c_char, workers: usize, out: *mut *mut c_char) -> EkStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        let (scenarios, methods) = scenarios_from_str(text)?;
        let opts = RunOptions {
            workers: (workers > 0).then_some(workers),
            trace: false,
        };
        let mut records = Vec::new();
        for s in &scenarios {
            let (res, _) = run_scenario_traced(s, &methods, opts)?;
            records.extend(report::scenario_records(&res));
        }
        write_out(out, into_c_string(serde_json::Value::Array(records).to_string())?)
    })
}
