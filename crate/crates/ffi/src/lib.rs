//! C ABI over `kgalign`.
//!
//! Handles are opaque and owned by the caller once returned; each has a
//! matching `*_free`. Every fallible call returns a [`KgaStatus`]; on
//! failure `kga_last_error` describes the error until the next call on the
//! same thread. Strings returned through `char **` must be released with
//! `kga_string_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use kgalign::em::{run_default, EmConfig, EmRun};
use kgalign::error::Error;
use kgalign::eval::MetricsReport;
use kgalign::explain::{explain, render_report, AnchorMode, AnchorSet, ExplainOptions, RuleWeights};
use kgalign::io::report::{evaluate_rows, write_predictions, SplitSizes};
use kgalign::io::{emit_report, load_config, load_dataset, prediction_rows, set_config_value, DatasetBundle, Manifest, PredictionRow, SplitOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Ingest = 4,
    Config = 5,
    Lookup = 6,
    Training = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgaAnchorMode {
    Hard = 0,
    Soft = 1,
}

/// Sizes of a loaded dataset.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KgaDatasetInfo {
    pub source_entities: usize,
    pub target_entities: usize,
    pub source_triples: usize,
    pub target_triples: usize,
    pub train_links: usize,
    pub validation_links: usize,
    pub test_links: usize,
}

pub struct KgaConfig {
    inner: EmConfig,
}

pub struct KgaDataset {
    bundle: Arc<DatasetBundle>,
}

pub struct KgaRun {
    bundle: Arc<DatasetBundle>,
    config: EmConfig,
    run: EmRun,
    rows: Vec<PredictionRow>,
    metrics: MetricsReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: KgaStatus,
    message: String,
}

impl Failure {
    fn new(status: KgaStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> KgaStatus {
    match e {
        Error::Ingest { .. } | Error::DanglingReference { .. } => KgaStatus::Ingest,
        Error::MissingFile(_) | Error::Io(_) | Error::State(_) => KgaStatus::Io,
        Error::Config(_) | Error::Seed(_) => KgaStatus::Config,
        Error::UnknownEntity(_) | Error::UnknownLabel(_) => KgaStatus::Lookup,
        Error::Training(_) | Error::Checkpoint(_) => KgaStatus::Training,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KgaStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".to_owned());
        Err(Failure::new(KgaStatus::Internal, format!("internal error: {msg}")))
    });
    match outcome {
        Ok(()) => {
            set_last_error("");
            KgaStatus::Ok
        }
        Err(Failure { status, message }) => {
            set_last_error(&message);
            status
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass pointers obtained from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| Failure::new(KgaStatus::NullPointer, format!("{what} is null")))
}

fn non_null_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: as for `non_null`; the caller guarantees exclusive access.
    unsafe { p.as_mut() }.ok_or_else(|| Failure::new(KgaStatus::NullPointer, format!("{what} is null")))
}

fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(KgaStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::new(KgaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out_ptr<'a, T>(p: *mut *mut T, what: &str) -> Result<&'a mut *mut T, Failure> {
    non_null_mut(p, what)
}

fn c_string(text: String) -> Result<*mut c_char, Failure> {
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(KgaStatus::Internal, "output contains a NUL byte".to_owned()))
}

/// Message of the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn kga_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kga_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn kga_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
#[no_mangle]
pub extern "C" fn kga_config_new() -> *mut KgaConfig {
    Box::into_raw(Box::new(KgaConfig {
        inner: EmConfig::default(),
    }))
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kga_config_load(path: *const c_char, out: *mut *mut KgaConfig) -> KgaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let inner = load_config(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(KgaConfig { inner }));
        Ok(())
    })
}

/// Sets one option, e.g. `delta` = `0.8` or `neural.dim` = `32`.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kga_config_set(config: *mut KgaConfig, key: *const c_char, value: *const c_char) -> KgaStatus {
    guard(|| {
        let config = non_null_mut(config, "config")?;
        config.inner = set_config_value(&config.inner, str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn kga_config_free(config: *mut KgaConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Loads a dataset directory. Without pre-split link files, `ent_links` is
/// split with the given ratios and seed.
///
/// # Safety
/// `dir` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kga_dataset_load(
    dir: *const c_char,
    train_ratio: f64,
    valid_ratio: f64,
    seed: u64,
    out: *mut *mut KgaDataset,
) -> KgaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let split = SplitOptions {
            train_ratio,
            valid_ratio,
            seed,
        };
        let bundle = load_dataset(Path::new(str_arg(dir, "dir")?), &split)?;
        *out = Box::into_raw(Box::new(KgaDataset {
            bundle: Arc::new(bundle),
        }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kga_dataset_info(dataset: *const KgaDataset, out: *mut KgaDatasetInfo) -> KgaStatus {
    guard(|| {
        let b = &non_null(dataset, "dataset")?.bundle;
        let out = non_null_mut(out, "out")?;
        *out = KgaDatasetInfo {
            source_entities: b.graphs.source.num_entities(),
            target_entities: b.graphs.target.num_entities(),
            source_triples: b.graphs.source.triples().len(),
            target_triples: b.graphs.target.triples().len(),
            train_links: b.train.len(),
            validation_links: b.validation.len(),
            test_links: b.test.len(),
        };
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library, freed once. Runs
/// created from it stay valid.
#[no_mangle]
pub unsafe extern "C" fn kga_dataset_free(dataset: *mut KgaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Runs EM alignment seeded with the dataset's training links and scores
/// the result against its test links.
///
/// # Safety
/// `dataset` and `config` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kga_align(dataset: *const KgaDataset, config: *const KgaConfig, out: *mut *mut KgaRun) -> KgaStatus {
    guard(|| {
        let bundle = Arc::clone(&non_null(dataset, "dataset")?.bundle);
        let config = non_null(config, "config")?.inner.clone();
        let out = out_ptr(out, "out")?;
        let pair = &bundle.graphs;
        let run = run_default(pair, bundle.train.pairs(), &config, None)?;
        let rows = prediction_rows(pair, &run.predictions);
        let gold: Vec<(String, String)> = bundle
            .test
            .pairs()
            .iter()
            .map(|&(s, t)| (pair.source.entity_label(s).to_owned(), pair.target.entity_label(t).to_owned()))
            .collect();
        let metrics = evaluate_rows(&rows, &gold, &[1, 10]);
        *out = Box::into_raw(Box::new(KgaRun {
            bundle,
            config,
            run,
            rows,
            metrics,
        }));
        Ok(())
    })
}

/// Reads a metric such as `hit@1`, `hit@10`, `mrr`, `precision`, `recall`
/// or `f1`.
///
/// # Safety
/// `run` must be a live handle, `name` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kga_run_metric(run: *const KgaRun, name: *const c_char, out: *mut f64) -> KgaStatus {
    guard(|| {
        let run = non_null(run, "run")?;
        let name = str_arg(name, "name")?;
        let out = non_null_mut(out, "out")?;
        *out = run
            .metrics
            .entries()
            .into_iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Failure::new(KgaStatus::Lookup, format!("unknown metric `{name}`")))?;
        Ok(())
    })
}

/// Number of completed EM iterations.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kga_run_iterations(run: *const KgaRun) -> usize {
    run.as_ref().map_or(0, |r| r.run.state.history.len())
}

/// Predictions in the `source<TAB>target<TAB>score<TAB>origin` format.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kga_run_predictions_tsv(run: *const KgaRun, out: *mut *mut c_char) -> KgaStatus {
    guard(|| {
        let run = non_null(run, "run")?;
        let out = out_ptr(out, "out")?;
        let mut buf = Vec::new();
        write_predictions(&mut buf, &run.rows)?;
        let text = String::from_utf8(buf).map_err(|_| Failure::new(KgaStatus::Internal, "non UTF-8 labels".to_owned()))?;
        *out = c_string(text)?;
        Ok(())
    })
}

/// Text report of the rules supporting `source` = `target`, by entity
/// label.
///
/// # Safety
/// `run` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kga_run_explain(
    run: *const KgaRun,
    source: *const c_char,
    target: *const c_char,
    mode: KgaAnchorMode,
    rule_length: usize,
    out: *mut *mut c_char,
) -> KgaStatus {
    guard(|| {
        let run = non_null(run, "run")?;
        let out = out_ptr(out, "out")?;
        let pair = &run.bundle.graphs;
        let source = str_arg(source, "source")?;
        let target = str_arg(target, "target")?;
        let s = pair
            .source
            .entity_id(source)
            .ok_or_else(|| Error::UnknownLabel(source.to_owned()))?;
        let t = pair
            .target
            .entity_id(target)
            .ok_or_else(|| Error::UnknownLabel(target.to_owned()))?;
        if rule_length == 0 {
            return Err(Failure::new(KgaStatus::Config, "rule length must be at least 1".to_owned()));
        }
        let mode = match mode {
            KgaAnchorMode::Hard => AnchorMode::Hard,
            KgaAnchorMode::Soft => AnchorMode::Soft,
        };
        let state = &run.run.state;
        let weights = RuleWeights {
            eta_source: &state.eta_source,
            eta_target: &state.eta_target,
            psub: &state.psub,
        };
        let anchors = AnchorSet::from_predictions(&run.run.predictions.alignments, mode);
        let options = ExplainOptions {
            rule_length,
            exhaustive: false,
        };
        let rules = explain(pair, weights, &anchors, (s, t), options)?;
        *out = c_string(render_report(pair, (s, t), &rules))?;
        Ok(())
    })
}

/// Writes the run's output directory under `out_root`; its path is
/// returned through `run_dir` when that is non-null.
///
/// # Safety
/// `run` must be a live handle; `out_root` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kga_run_write_report(run: *const KgaRun, out_root: *const c_char, run_dir: *mut *mut c_char) -> KgaStatus {
    guard(|| {
        let run = non_null(run, "run")?;
        let root = str_arg(out_root, "out_root")?;
        let b = &run.bundle;
        let sizes = SplitSizes {
            train: b.train.len(),
            validation: b.validation.len(),
            test: b.test.len(),
        };
        let manifest = Manifest::new(&b.graphs, &run.config, &run.run.state, b.provenance.clone(), sizes);
        let dir = emit_report(Path::new(root), &manifest, &run.rows, &run.metrics, &[])?;
        if let Some(slot) = run_dir.as_mut() {
            *slot = c_string(dir.display().to_string())?;
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn kga_run_free(run: *mut KgaRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
