//! C interface to `tlcsp`.
//!
//! Every function returns a [`TlcspStatus`]. On failure the message is kept
//! per thread and can be read with [`tlcsp_last_error`]. Objects cross the
//! boundary as opaque handles that must be released with their `_free`
//! function. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::DMatrix;
use tlcsp::bench::{run_benchmark, BenchConfig, Strategy};
use tlcsp::csp::{compute_csp, CspFilterBank};
use tlcsp::data::{
    load_corpus, load_subject, save_corpus, save_subject, Epoch, Label, LabeledEpoch, SpatialCovariance,
    SubjectDataset, SynthConfig, SyntheticCorpus,
};
use tlcsp::transfer::{cm2_lambda, kl_divergence_gaussian, kmm_weights, optimize_weights, Bandwidth, KmmConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlcspStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad configuration, mismatched dimensions or too little data.
    InvalidArgument = 2,
    /// Malformed file, or a file that cannot be read or written.
    Io = 3,
    /// Degenerate or ill-conditioned numerics.
    Numeric = 4,
    Panic = 5,
}

pub const TLCSP_STRATEGY_BL1: u32 = 1 << 0;
pub const TLCSP_STRATEGY_BL2: u32 = 1 << 1;
pub const TLCSP_STRATEGY_BL3: u32 = 1 << 2;
pub const TLCSP_STRATEGY_CM1: u32 = 1 << 3;
pub const TLCSP_STRATEGY_CM2: u32 = 1 << 4;
pub const TLCSP_STRATEGY_MA: u32 = 1 << 5;
pub const TLCSP_STRATEGY_IA: u32 = 1 << 6;
pub const TLCSP_STRATEGY_ALL: u32 = (1 << 7) - 1;

/// One subject's labeled epochs.
pub struct TlcspDataset(SubjectDataset);

/// An ordered list of subjects.
pub struct TlcspCorpus(Vec<SubjectDataset>);

/// CSP filters and their eigenvalues.
pub struct TlcspCspBank(CspFilterBank);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TlcspSynthConfig {
    pub num_subjects: usize,
    pub channels: usize,
    pub samples: usize,
    pub epochs_per_class: usize,
    pub sigma_hi: f64,
    pub sigma_lo: f64,
    pub divergence: f64,
    pub noise_floor: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TlcspBenchConfig {
    pub pool_size: usize,
    pub m_step: usize,
    pub m_max: usize,
    pub repetitions: usize,
    pub filters_per_class: usize,
    pub base_seed: u64,
    /// Bitwise OR of `TLCSP_STRATEGY_*`.
    pub strategies: u32,
    pub cm1_lambda: f64,
    /// 0 uses one worker per core.
    pub workers: usize,
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(tlcsp::Error),
}

impl From<tlcsp::Error> for Failure {
    fn from(e: tlcsp::Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Outcome) -> TlcspStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return TlcspStatus::Ok,
        Ok(Err(Failure::Null(what))) => (TlcspStatus::NullPointer, format!("{what} is null")),
        Ok(Err(Failure::Invalid(msg))) => (TlcspStatus::InvalidArgument, msg),
        Ok(Err(Failure::Core(e))) => {
            let status = match e.exit_code() {
                2 => TlcspStatus::InvalidArgument,
                3 => TlcspStatus::Io,
                _ => TlcspStatus::Numeric,
            };
            (status, e.to_string())
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (TlcspStatus::Panic, format!("internal error: {msg}"))
        }
    };
    set_error(msg);
    status
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(what))
}

unsafe fn string(ptr: *const c_char, what: &'static str) -> Result<String, Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn path(ptr: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    string(ptr, what).map(PathBuf::from)
}

fn checked_square(c: usize) -> Result<usize, Failure> {
    c.checked_mul(c).ok_or_else(|| Failure::Invalid(format!("dimension {c} is too large")))
}

unsafe fn covariance(c: usize, ptr: *const f64, what: &'static str) -> Result<SpatialCovariance, Failure> {
    let values = slice(ptr, checked_square(c)?, what)?;
    Ok(SpatialCovariance::new(DMatrix::from_row_slice(c, c, values), false)?)
}

unsafe fn rows(ptr: *const f64, count: usize, dim: usize, what: &'static str) -> Result<Vec<Vec<f64>>, Failure> {
    let len = count.checked_mul(dim).ok_or_else(|| Failure::Invalid(format!("{what} is too large")))?;
    let values = slice(ptr, len, what)?;
    Ok(values.chunks(dim.max(1)).take(count).map(<[f64]>::to_vec).collect())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn tlcsp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tlcsp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from `n_epochs` epochs of `channels × samples` values
/// each (row-major, epochs back to back) and one label byte (0 or 1) per epoch.
///
/// # Safety
/// `subject_id` must be a NUL-terminated string, `data` must hold
/// `n_epochs·channels·samples` values and `labels` `n_epochs` bytes.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_dataset_new(
    subject_id: *const c_char,
    channels: usize,
    samples: usize,
    n_epochs: usize,
    data: *const f64,
    labels: *const u8,
    out_dataset: *mut *mut TlcspDataset,
) -> TlcspStatus {
    guard(|| {
        let out_dataset = out(out_dataset, "out_dataset")?;
        let id = string(subject_id, "subject_id")?;
        let per = channels
            .checked_mul(samples)
            .ok_or_else(|| Failure::Invalid("epoch size overflows".into()))?;
        let total = per
            .checked_mul(n_epochs)
            .ok_or_else(|| Failure::Invalid("dataset size overflows".into()))?;
        let data = slice(data, total, "data")?;
        let labels = slice(labels, n_epochs, "labels")?;
        let mut epochs = Vec::with_capacity(n_epochs);
        for (k, (values, &l)) in data.chunks(per.max(1)).zip(labels).enumerate() {
            let label = Label::from_u8(l).ok_or_else(|| Failure::Invalid(format!("epoch {k} has label {l}")))?;
            epochs.push(LabeledEpoch::new(Epoch::from_row_major(channels, samples, values)?, label));
        }
        *out_dataset = Box::into_raw(Box::new(TlcspDataset(SubjectDataset::new(id, epochs)?)));
        Ok(())
    })
}

/// # Safety
/// `file` must be a NUL-terminated path and `out_dataset` writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_dataset_load(file: *const c_char, out_dataset: *mut *mut TlcspDataset) -> TlcspStatus {
    guard(|| {
        let out_dataset = out(out_dataset, "out_dataset")?;
        let ds = load_subject(path(file, "file")?)?;
        *out_dataset = Box::into_raw(Box::new(TlcspDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and `file` be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_dataset_save(dataset: *const TlcspDataset, file: *const c_char) -> TlcspStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        save_subject(&ds.0, path(file, "file")?)?;
        Ok(())
    })
}

/// Number of epochs, channels and samples per epoch. Any output may be null.
///
/// # Safety
/// `dataset` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_dataset_shape(
    dataset: *const TlcspDataset,
    out_epochs: *mut usize,
    out_channels: *mut usize,
    out_samples: *mut usize,
) -> TlcspStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        for (ptr, v) in [(out_epochs, ds.len()), (out_channels, ds.channels()), (out_samples, ds.samples())] {
            if let Some(p) = ptr.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_dataset_free(dataset: *mut TlcspDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fills `out_config` with the library's default synthetic corpus settings.
///
/// # Safety
/// `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_synth_config_default(out_config: *mut TlcspSynthConfig) -> TlcspStatus {
    guard(|| {
        let d = SynthConfig::default();
        *out(out_config, "out_config")? = TlcspSynthConfig {
            num_subjects: d.num_subjects,
            channels: d.channels,
            samples: d.samples,
            epochs_per_class: d.epochs_per_class,
            sigma_hi: d.sigma_hi,
            sigma_lo: d.sigma_lo,
            divergence: d.divergence,
            noise_floor: d.noise_floor,
            seed: d.seed,
        };
        Ok(())
    })
}

/// # Safety
/// `config` must be readable and `out_corpus` writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_synth_generate(
    config: *const TlcspSynthConfig,
    out_corpus: *mut *mut TlcspCorpus,
) -> TlcspStatus {
    guard(|| {
        let c = *handle(config, "config")?;
        let out_corpus = out(out_corpus, "out_corpus")?;
        let corpus = SyntheticCorpus::generate(&SynthConfig {
            num_subjects: c.num_subjects,
            channels: c.channels,
            samples: c.samples,
            epochs_per_class: c.epochs_per_class,
            sigma_hi: c.sigma_hi,
            sigma_lo: c.sigma_lo,
            divergence: c.divergence,
            noise_floor: c.noise_floor,
            seed: c.seed,
        })?;
        *out_corpus = Box::into_raw(Box::new(TlcspCorpus(corpus.subjects)));
        Ok(())
    })
}

/// Loads every `.eegx` file of a directory, ordered by file name.
///
/// # Safety
/// `dir` must be a NUL-terminated path and `out_corpus` writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_corpus_load(dir: *const c_char, out_corpus: *mut *mut TlcspCorpus) -> TlcspStatus {
    guard(|| {
        let out_corpus = out(out_corpus, "out_corpus")?;
        let subjects = load_corpus(path(dir, "dir")?)?;
        *out_corpus = Box::into_raw(Box::new(TlcspCorpus(subjects)));
        Ok(())
    })
}

/// Writes one `.eegx` file per subject into `dir`, creating it if needed.
///
/// # Safety
/// `corpus` must come from this library and `dir` be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_corpus_save(corpus: *const TlcspCorpus, dir: *const c_char) -> TlcspStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        save_corpus(&corpus.0, path(dir, "dir")?)?;
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from this library and `out_len` be writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_corpus_len(corpus: *const TlcspCorpus, out_len: *mut usize) -> TlcspStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(corpus, "corpus")?.0.len();
        Ok(())
    })
}

/// Copies subject `index` into a new dataset handle.
///
/// # Safety
/// `corpus` must come from this library and `out_dataset` be writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_corpus_subject(
    corpus: *const TlcspCorpus,
    index: usize,
    out_dataset: *mut *mut TlcspDataset,
) -> TlcspStatus {
    guard(|| {
        let corpus = &handle(corpus, "corpus")?.0;
        let out_dataset = out(out_dataset, "out_dataset")?;
        let ds = corpus
            .get(index)
            .ok_or_else(|| Failure::Invalid(format!("subject index {index} out of range ({})", corpus.len())))?;
        *out_dataset = Box::into_raw(Box::new(TlcspDataset(ds.clone())));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_corpus_free(corpus: *mut TlcspCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// CSP filters from two `c × c` class-mean covariances.
///
/// # Safety
/// `sigma0` and `sigma1` must hold `c·c` values and `out_bank` be writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_csp_compute(
    c: usize,
    sigma0: *const f64,
    sigma1: *const f64,
    filters_per_class: usize,
    out_bank: *mut *mut TlcspCspBank,
) -> TlcspStatus {
    guard(|| {
        let out_bank = out(out_bank, "out_bank")?;
        let s0 = covariance(c, sigma0, "sigma0")?;
        let s1 = covariance(c, sigma1, "sigma1")?;
        *out_bank = Box::into_raw(Box::new(TlcspCspBank(compute_csp(&s0, &s1, filters_per_class)?)));
        Ok(())
    })
}

/// Channel count and number of filters (`2F`). Either output may be null.
///
/// # Safety
/// `bank` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_csp_shape(
    bank: *const TlcspCspBank,
    out_channels: *mut usize,
    out_filters: *mut usize,
) -> TlcspStatus {
    guard(|| {
        let bank = &handle(bank, "bank")?.0;
        if let Some(p) = out_channels.as_mut() {
            *p = bank.channels();
        }
        if let Some(p) = out_filters.as_mut() {
            *p = bank.len();
        }
        Ok(())
    })
}

/// Copies the `channels × 2F` filter matrix (row-major) and the `2F`
/// eigenvalues. Either output may be null.
///
/// # Safety
/// `out_filters` must have room for `channels·2F` values and
/// `out_eigenvalues` for `2F`.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_csp_filters(
    bank: *const TlcspCspBank,
    out_filters: *mut f64,
    out_eigenvalues: *mut f64,
) -> TlcspStatus {
    guard(|| {
        let bank = &handle(bank, "bank")?.0;
        let w = bank.filters();
        if !out_filters.is_null() {
            let dst = slice_mut(out_filters, w.len(), "out_filters")?;
            for (k, v) in dst.iter_mut().enumerate() {
                *v = w[(k / w.ncols(), k % w.ncols())];
            }
        }
        if !out_eigenvalues.is_null() {
            slice_mut(out_eigenvalues, bank.len(), "out_eigenvalues")?.copy_from_slice(bank.eigenvalues());
        }
        Ok(())
    })
}

/// Log-variance features of one `channels × channels` covariance.
///
/// # Safety
/// `cov` must hold `channels²` values and `out_features` have room for `2F`.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_csp_features(
    bank: *const TlcspCspBank,
    cov: *const f64,
    out_features: *mut f64,
) -> TlcspStatus {
    guard(|| {
        let bank = &handle(bank, "bank")?.0;
        let cov = covariance(bank.channels(), cov, "cov")?;
        let f = bank.features(&cov)?;
        slice_mut(out_features, f.len(), "out_features")?.copy_from_slice(f.as_slice());
        Ok(())
    })
}

/// # Safety
/// `bank` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_csp_free(bank: *mut TlcspCspBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// KL divergence from `N(0, sigma_s)` to `N(0, sigma_t)`.
///
/// # Safety
/// Both matrices must hold `c·c` values and `out_kl` be writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_kl_divergence(
    c: usize,
    sigma_s: *const f64,
    sigma_t: *const f64,
    out_kl: *mut f64,
) -> TlcspStatus {
    guard(|| {
        let out_kl = out(out_kl, "out_kl")?;
        let s = covariance(c, sigma_s, "sigma_s")?;
        let t = covariance(c, sigma_t, "sigma_t")?;
        *out_kl = kl_divergence_gaussian(&s, &t)?;
        Ok(())
    })
}

/// Mixing weight of the selected sources given the target's leave-one-out
/// accuracy, the selected sources' accuracy and the chance level.
///
/// # Safety
/// `out_lambda` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_cm2_lambda(
    target_acc: f64,
    selected_acc: f64,
    rand_acc: f64,
    out_lambda: *mut f64,
) -> TlcspStatus {
    guard(|| {
        *out(out_lambda, "out_lambda")? = cm2_lambda(target_acc, selected_acc, rand_acc)?;
        Ok(())
    })
}

/// Kernel mean matching weights for `n` source vectors against `m` target
/// vectors of length `dim`. A NaN `epsilon` uses `(√n − 1)/√n`; a
/// nonpositive `bandwidth` uses the median pairwise distance.
///
/// # Safety
/// `source` must hold `n·dim` values, `target` `m·dim`, and `out_beta` have
/// room for `n`.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_kmm_weights(
    n: usize,
    m: usize,
    dim: usize,
    source: *const f64,
    target: *const f64,
    upper_bound: f64,
    epsilon: f64,
    bandwidth: f64,
    out_beta: *mut f64,
) -> TlcspStatus {
    guard(|| {
        let out_beta = slice_mut(out_beta, n, "out_beta")?;
        let src = rows(source, n, dim, "source")?;
        let tgt = rows(target, m, dim, "target")?;
        let cfg = KmmConfig {
            upper_bound,
            epsilon: (!epsilon.is_nan()).then_some(epsilon),
            bandwidth: if bandwidth > 0.0 {
                Bandwidth::Fixed(bandwidth)
            } else {
                Bandwidth::Median
            },
        };
        out_beta.copy_from_slice(kmm_weights(&src, &tgt, &cfg)?.as_slice());
        Ok(())
    })
}

/// Simplex weights for `z` source models from their `m × z` matrix of ±1
/// votes (row-major) and the ±1 labels.
///
/// # Safety
/// `votes` must hold `m·z` values, `labels` `m`, and `out_weights` have room
/// for `z`.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_ensemble_weights(
    m: usize,
    z: usize,
    votes: *const f64,
    labels: *const f64,
    out_weights: *mut f64,
) -> TlcspStatus {
    guard(|| {
        let out_weights = slice_mut(out_weights, z, "out_weights")?;
        let len = m.checked_mul(z).ok_or_else(|| Failure::Invalid("vote matrix is too large".into()))?;
        let p = DMatrix::from_row_slice(m, z, slice(votes, len, "votes")?);
        let y = slice(labels, m, "labels")?;
        out_weights.copy_from_slice(optimize_weights(&p, y)?.as_slice());
        Ok(())
    })
}

/// Fills `out_config` with the default benchmark protocol.
///
/// # Safety
/// `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_bench_config_default(out_config: *mut TlcspBenchConfig) -> TlcspStatus {
    guard(|| {
        let d = BenchConfig::default();
        *out(out_config, "out_config")? = TlcspBenchConfig {
            pool_size: d.pool_size,
            m_step: d.m_step,
            m_max: d.m_max,
            repetitions: d.repetitions,
            filters_per_class: d.filters_per_class,
            base_seed: d.base_seed,
            strategies: TLCSP_STRATEGY_ALL,
            cm1_lambda: d.cm1_lambda,
            workers: 0,
        };
        Ok(())
    })
}

fn strategies(mask: u32) -> Result<Vec<Strategy>, Failure> {
    if mask & !TLCSP_STRATEGY_ALL != 0 {
        return Err(Failure::Invalid(format!("unknown strategy bits {mask:#x}")));
    }
    Ok(Strategy::ALL
        .into_iter()
        .enumerate()
        .filter(|(k, _)| mask & (1 << k) != 0)
        .map(|(_, s)| s)
        .collect())
}

/// Runs the benchmark over every subject of `corpus` and writes the results
/// CSV to `out_csv`.
///
/// # Safety
/// `corpus` must come from this library, `config` be readable and `out_csv`
/// be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn tlcsp_benchmark_run(
    corpus: *const TlcspCorpus,
    config: *const TlcspBenchConfig,
    out_csv: *const c_char,
) -> TlcspStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        let c = *handle(config, "config")?;
        let file = path(out_csv, "out_csv")?;
        let cfg = BenchConfig {
            pool_size: c.pool_size,
            m_step: c.m_step,
            m_max: c.m_max,
            repetitions: c.repetitions,
            filters_per_class: c.filters_per_class,
            base_seed: c.base_seed,
            strategies: strategies(c.strategies)?,
            cm1_lambda: c.cm1_lambda,
            workers: (c.workers > 0).then_some(c.workers),
        };
        run_benchmark(&corpus.0, &cfg)?.save_csv(file)?;
        Ok(())
    })
}
