//! C interface to dmseg.
//!
//! Every fallible function returns a [`DmsegStatus`]. On failure a message is
//! available from [`dmseg_last_error`] on the calling thread. Handles are
//! opaque and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use dmseg::config::RunConfig;
use dmseg::ingest::{AnalysisDataset, Scale};
use dmseg::pipeline::{analyze, load_dataset, with_threads};
use dmseg::report::{write_results, Provenance};
use dmseg::segment::{lrt_score, Mode};
use dmseg::significance::RegionResult;
use dmseg::DmsegError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmsegStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    InvalidConfig = 6,
    Numeric = 7,
    IndexOutOfRange = 8,
    Panic = 9,
}

pub const DMSEG_MODE_DMR: u32 = 0;
pub const DMSEG_MODE_VMR: u32 = 1;
pub const DMSEG_SCALE_BETA: u32 = 0;
pub const DMSEG_SCALE_MVALUE: u32 = 1;

/// Analysis settings. Fill with [`dmseg_params_default`] before changing fields.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmsegParams {
    pub max_gap_bp: u64,
    pub corr_min: f64,
    pub z_main: f64,
    pub z_bridge: f64,
    pub min_cpgs: u32,
    pub min_cluster_size: u32,
    pub permutations: u32,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: u32,
    /// `DMSEG_MODE_DMR` or `DMSEG_MODE_VMR`.
    pub mode: u32,
}

/// Numeric fields of one reported region.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmsegRegion {
    pub start_pos: u64,
    pub end_pos: u64,
    pub n_cpgs: usize,
    pub cluster_size: usize,
    pub segment_mean: f64,
    pub lrt: f64,
    pub p_value: f64,
    pub fwer: f64,
}

/// Aligned methylation data ready for analysis.
pub struct DmsegDataset {
    data: AnalysisDataset,
    source: RunConfig,
}

/// Ranked regions from one run.
pub struct DmsegResults {
    config: RunConfig,
    mode: Mode,
    regions: Vec<RegionResult>,
    // chromosome, start probe, end probe
    labels: Vec<[CString; 3]>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: DmsegStatus,
    message: String,
}

impl Failure {
    fn new(status: DmsegStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<DmsegError> for Failure {
    fn from(e: DmsegError) -> Self {
        use DmsegError::*;
        let status = match &e {
            Io { .. } => DmsegStatus::Io,
            Parse { .. } | MissingValue { .. } | OutOfRange { .. } | BetaOutOfRange(_) | MissingColumn { .. } => {
                DmsegStatus::Parse
            }
            RankDeficient(_) | ScaleMismatch | NonPositiveVariance(..) | EmptyPool => DmsegStatus::Numeric,
            InvalidPlan(_) | InvalidConfig(_) => DmsegStatus::InvalidConfig,
            _ => DmsegStatus::InvalidInput,
        };
        Failure::new(status, format!("{}: {e}", e.kind()))
    }
}

fn set_last_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DmsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            DmsegStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(Some(fail.message));
            fail.status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(Some(format!("internal error: {what}")));
            DmsegStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass pointers obtained from this library or valid C objects
    unsafe { p.as_ref() }.ok_or_else(|| Failure::new(DmsegStatus::NullArgument, format!("{name} is NULL")))
}

fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(DmsegStatus::NullArgument, format!("{name} is NULL")));
    }
    // SAFETY: non-null and documented as a NUL-terminated string
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::new(DmsegStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn optional_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(DmsegStatus::NullArgument, format!("{name} is NULL")));
    }
    // SAFETY: non-null and documented as writable
    unsafe { out.write(value) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dmseg_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Message for the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn dmseg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Writes the default settings to `out`.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one `DmsegParams`.
#[no_mangle]
pub unsafe extern "C" fn dmseg_params_default(out: *mut DmsegParams) -> DmsegStatus {
    guard(|| {
        let c = RunConfig::default();
        write_out(
            out,
            DmsegParams {
                max_gap_bp: c.max_gap_bp,
                corr_min: c.corr_min,
                z_main: c.z_main,
                z_bridge: c.z_bridge,
                min_cpgs: c.min_cpgs as u32,
                min_cluster_size: c.min_cluster_size as u32,
                permutations: c.permutations as u32,
                seed: c.seed,
                threads: 0,
                mode: DMSEG_MODE_DMR,
            },
            "out",
        )
    })
}

/// Loads and aligns a matrix, phenotype table and manifest.
///
/// `case_label` may be NULL. `scale` is `DMSEG_SCALE_BETA` or `DMSEG_SCALE_MVALUE`.
///
/// # Safety
/// String arguments must be NULL or NUL-terminated. `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn dmseg_dataset_load(
    matrix_path: *const c_char,
    phenotypes_path: *const c_char,
    manifest_path: *const c_char,
    group_column: *const c_char,
    case_label: *const c_char,
    scale: u32,
    out: *mut *mut DmsegDataset,
) -> DmsegStatus {
    guard(|| {
        let mut cfg = RunConfig {
            matrix: Some(PathBuf::from(text(matrix_path, "matrix_path")?)),
            phenotypes: Some(PathBuf::from(text(phenotypes_path, "phenotypes_path")?)),
            manifest: Some(PathBuf::from(text(manifest_path, "manifest_path")?)),
            group_column: text(group_column, "group_column")?.to_owned(),
            case_label: optional_text(case_label, "case_label")?.map(str::to_owned),
            ..RunConfig::default()
        };
        cfg.scale = match scale {
            DMSEG_SCALE_BETA => Scale::Beta,
            DMSEG_SCALE_MVALUE => Scale::MValue,
            other => return Err(Failure::new(DmsegStatus::InvalidConfig, format!("unknown scale {other}"))),
        };
        if out.is_null() {
            return Err(Failure::new(DmsegStatus::NullArgument, "out is NULL"));
        }
        let data = load_dataset(&cfg)?;
        let handle = Box::into_raw(Box::new(DmsegDataset { data, source: cfg }));
        write_out(out, handle, "out")
    })
}

/// Number of CpG rows, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle from [`dmseg_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn dmseg_dataset_n_cpgs(dataset: *const DmsegDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.n_cpgs())
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle from [`dmseg_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn dmseg_dataset_n_samples(dataset: *const DmsegDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.n_samples())
}

/// # Safety
/// `dataset` must be NULL or a handle from [`dmseg_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dmseg_dataset_free(dataset: *mut DmsegDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn run_config(source: &RunConfig, p: &DmsegParams) -> Result<(RunConfig, Mode), Failure> {
    let mode = match p.mode {
        DMSEG_MODE_DMR => Mode::Dmr,
        DMSEG_MODE_VMR => Mode::Vmr,
        other => return Err(Failure::new(DmsegStatus::InvalidConfig, format!("unknown mode {other}"))),
    };
    let cfg = RunConfig {
        max_gap_bp: p.max_gap_bp,
        corr_min: p.corr_min,
        z_main: p.z_main,
        z_bridge: p.z_bridge,
        min_cpgs: p.min_cpgs as usize,
        min_cluster_size: p.min_cluster_size as usize,
        permutations: p.permutations as usize,
        seed: p.seed,
        threads: (p.threads > 0).then_some(p.threads as usize),
        ..source.clone()
    };
    cfg.validate()?;
    Ok((cfg, mode))
}

/// Runs clustering, segment search and permutation testing.
///
/// # Safety
/// `dataset` and `params` must be live, `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn dmseg_run(
    dataset: *const DmsegDataset,
    params: *const DmsegParams,
    out: *mut *mut DmsegResults,
) -> DmsegStatus {
    guard(|| {
        let ds = non_null(dataset, "dataset")?;
        let (config, mode) = run_config(&ds.source, non_null(params, "params")?)?;
        if out.is_null() {
            return Err(Failure::new(DmsegStatus::NullArgument, "out is NULL"));
        }
        let analysis = with_threads(config.threads, || analyze(ds.data.clone(), &config, mode))?;
        let regions = analysis.significance.results;
        let labels = regions
            .iter()
            .map(|r| {
                [&r.chromosome, &r.start_probe, &r.end_probe]
                    .map(|s| CString::new(s.as_str()).unwrap_or_default())
            })
            .collect();
        let handle = Box::into_raw(Box::new(DmsegResults {
            config,
            mode,
            regions,
            labels,
        }));
        write_out(out, handle, "out")
    })
}

/// Number of regions, or 0 for NULL.
///
/// # Safety
/// `results` must be NULL or a live handle from [`dmseg_run`].
#[no_mangle]
pub unsafe extern "C" fn dmseg_results_len(results: *const DmsegResults) -> usize {
    results.as_ref().map_or(0, |r| r.regions.len())
}

/// Copies the numeric fields of region `index` (0 is the top-ranked) into `out`.
///
/// # Safety
/// `results` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dmseg_results_get(
    results: *const DmsegResults,
    index: usize,
    out: *mut DmsegRegion,
) -> DmsegStatus {
    guard(|| {
        let res = non_null(results, "results")?;
        let r = res.regions.get(index).ok_or_else(|| {
            Failure::new(
                DmsegStatus::IndexOutOfRange,
                format!("index {index} out of range for {} regions", res.regions.len()),
            )
        })?;
        write_out(
            out,
            DmsegRegion {
                start_pos: r.start_pos,
                end_pos: r.end_pos,
                n_cpgs: r.segment.n_cpgs,
                cluster_size: r.cluster_size,
                segment_mean: r.segment.segment_mean,
                lrt: r.segment.lrt,
                p_value: r.p_value,
                fwer: r.fwer,
            },
            "out",
        )
    })
}

unsafe fn label(results: *const DmsegResults, index: usize, which: usize) -> *const c_char {
    results
        .as_ref()
        .and_then(|r| r.labels.get(index))
        .map_or(ptr::null(), |l| l[which].as_ptr())
}

/// Chromosome of region `index`, owned by `results`; NULL when out of range.
///
/// # Safety
/// `results` must be NULL or a live handle from [`dmseg_run`].
#[no_mangle]
pub unsafe extern "C" fn dmseg_results_chromosome(results: *const DmsegResults, index: usize) -> *const c_char {
    label(results, index, 0)
}

/// First probe of region `index`, owned by `results`; NULL when out of range.
///
/// # Safety
/// `results` must be NULL or a live handle from [`dmseg_run`].
#[no_mangle]
pub unsafe extern "C" fn dmseg_results_start_probe(results: *const DmsegResults, index: usize) -> *const c_char {
    label(results, index, 1)
}

/// Last probe of region `index`, owned by `results`; NULL when out of range.
///
/// # Safety
/// `results` must be NULL or a live handle from [`dmseg_run`].
#[no_mangle]
pub unsafe extern "C" fn dmseg_results_end_probe(results: *const DmsegResults, index: usize) -> *const c_char {
    label(results, index, 2)
}

/// Writes the results table in the same format as the command-line tool.
///
/// # Safety
/// `results` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dmseg_results_write_tsv(results: *const DmsegResults, path: *const c_char) -> DmsegStatus {
    guard(|| {
        let res = non_null(results, "results")?;
        let path = text(path, "path")?;
        let prov = Provenance {
            command: res.mode.to_string(),
            config_hash: res.config.analysis_hash(),
            seed: res.config.seed,
        };
        write_results(Path::new(path), &prov, &res.regions, res.config.permutations)?;
        Ok(())
    })
}

/// # Safety
/// `results` must be NULL or a handle from [`dmseg_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dmseg_results_free(results: *mut DmsegResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Weighted-mean effect and likelihood-ratio statistic of one segment.
///
/// # Safety
/// `betas` and `variances` must each hold `len` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn dmseg_lrt_score(
    betas: *const f64,
    variances: *const f64,
    len: usize,
    out_mean: *mut f64,
    out_lrt: *mut f64,
) -> DmsegStatus {
    guard(|| {
        if betas.is_null() || variances.is_null() {
            return Err(Failure::new(DmsegStatus::NullArgument, "input array is NULL"));
        }
        let b = std::slice::from_raw_parts(betas, len);
        let v = std::slice::from_raw_parts(variances, len);
        let score = lrt_score(b, v)?;
        write_out(out_mean, score.segment_mean, "out_mean")?;
        write_out(out_lrt, score.lrt, "out_lrt")
    })
}
