//! C ABI over `ratesel`.
//!
//! Conventions:
//! * every function returns a [`RsStatus`]; results go through out-pointers
//! * on failure [`rs_last_error`] describes the problem (per thread)
//! * matrices are dense, row-major `f64`; a feature matrix is `dim×n`
//!   with one sample per column
//! * handles are opaque and released with their `*_free` function; passing
//!   NULL to a `*_free` function is a no-op
//! * `gamma_fixed <= 0` selects the size-dependent scaling `d/(n·ε²)`

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use ratesel::coding_rate::{class_coding_rate, coding_rate, label_coding_rate, CodingRateParams, GramState};
use ratesel::label_compress::{
    compress_labels, decompress_labels, plan_rank_for_ratio, rpca_pcp, Budget, CompressOptions, CompressedLabels,
    CompressionMethod, RpcaConfig,
};
use ratesel::selector::{select, FeatureSet, SelectionConfig, SelectionMode, SelectionResult, SoftLabelStack};
use ratesel::{DenseMatrix, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    NotPositiveDefinite = 5,
    RankOutOfRange = 6,
    RatioInfeasible = 7,
    InsufficientSamples = 8,
    NoConvergence = 9,
    NumericalFailure = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsMethod {
    Rpca = 0,
    Svd = 1,
    Rsvd = 2,
    Cur = 3,
}

impl From<RsMethod> for CompressionMethod {
    fn from(m: RsMethod) -> Self {
        match m {
            RsMethod::Rpca => Self::Rpca,
            RsMethod::Svd => Self::Svd,
            RsMethod::Rsvd => Self::Rsvd,
            RsMethod::Cur => Self::Cur,
        }
    }
}

/// Selection settings. Obtain defaults from [`rs_selection_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RsSelectionConfig {
    pub ipc: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon_sq: f64,
    pub gamma_fixed: f64,
    pub candidate_batch: usize,
    /// 0 = per class, 1 = global with a per-class cap.
    pub global_capped: u8,
    pub seed: u64,
}

/// Incremental coding-rate state for a growing set of vectors.
pub struct RsGram(GramState);

/// Outcome of a selection run.
pub struct RsSelection(SelectionResult);

/// Compressed soft-label stack.
pub struct RsCompressed(CompressedLabels);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RsStatus {
    match e {
        Error::NonFinite => RsStatus::NonFinite,
        Error::NotPositiveDefinite { .. } | Error::NotSymmetric(_) => RsStatus::NotPositiveDefinite,
        Error::DimensionMismatch { .. } | Error::LabelOutOfRange { .. } => RsStatus::DimensionMismatch,
        Error::RankOutOfRange { .. } => RsStatus::RankOutOfRange,
        Error::RatioInfeasible { .. } => RsStatus::RatioInfeasible,
        Error::InsufficientSamples { .. } | Error::MissingClass(_) => RsStatus::InsufficientSamples,
        Error::NoConvergence { .. } => RsStatus::NoConvergence,
        Error::SvdFailure | Error::StaleFactorization => RsStatus::NumericalFailure,
        _ => RsStatus::InvalidArgument,
    }
}

enum Fail {
    Status(RsStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn null() -> Fail {
    Fail::Status(RsStatus::NullPointer, "null pointer argument".into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RsStatus::Ok
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_last_error(&msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            RsStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null());
    }
    p.write(v);
    Ok(())
}

fn checked_len(a: usize, b: usize) -> Result<usize, Fail> {
    a.checked_mul(b)
        .ok_or_else(|| Fail::Status(RsStatus::InvalidArgument, "size overflow".into()))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize) -> Result<DenseMatrix, Fail> {
    let data = input(p, checked_len(rows, cols)?)?;
    Ok(DenseMatrix::from_vec(rows, cols, data.to_vec())?)
}

fn params(epsilon_sq: f64, gamma_fixed: f64) -> CodingRateParams {
    if gamma_fixed > 0.0 {
        CodingRateParams::fixed(epsilon_sq, gamma_fixed)
    } else {
        CodingRateParams::adaptive(epsilon_sq)
    }
}

/// Message for the last failure on this thread; empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `½·log det(I + γ·Z·Zᵀ)` for a `dim×n` matrix `z`.
///
/// # Safety
/// `z` must point to `dim*n` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rs_coding_rate(
    z: *const f64,
    dim: usize,
    n: usize,
    epsilon_sq: f64,
    gamma_fixed: f64,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let m = matrix(z, dim, n)?;
        write(out, coding_rate(&m, &params(epsilon_sq, gamma_fixed))?)
    })
}

/// Class-conditional rate of a `dim×n` matrix with `labels[i] < num_classes`.
///
/// # Safety
/// `z` must hold `dim*n` doubles, `labels` `n` entries.
#[no_mangle]
pub unsafe extern "C" fn rs_class_coding_rate(
    z: *const f64,
    dim: usize,
    n: usize,
    labels: *const u32,
    num_classes: usize,
    epsilon_sq: f64,
    gamma_fixed: f64,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let m = matrix(z, dim, n)?;
        let labels: Vec<usize> = input(labels, n)?.iter().map(|&l| l as usize).collect();
        write(
            out,
            class_coding_rate(&m, &labels, num_classes, &params(epsilon_sq, gamma_fixed))?,
        )
    })
}

/// Rate of a `num_augs×num_classes` soft-label block.
///
/// # Safety
/// `y` must hold `num_augs*num_classes` doubles.
#[no_mangle]
pub unsafe extern "C" fn rs_label_coding_rate(
    y: *const f64,
    num_augs: usize,
    num_classes: usize,
    epsilon_sq: f64,
    gamma_fixed: f64,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let m = matrix(y, num_augs, num_classes)?;
        write(out, label_coding_rate(&m, &params(epsilon_sq, gamma_fixed))?)
    })
}

/// Largest rank whose factors fit a `rows×cols` block at `ratio`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_plan_rank(rows: usize, cols: usize, ratio: f64, bytes: u8, out: *mut usize) -> RsStatus {
    guard(|| write(out, plan_rank_for_ratio(rows, cols, ratio, bytes)?))
}

/// # Safety
/// `out` must be writable; the handle is owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn rs_gram_new(dim: usize, epsilon_sq: f64, gamma_fixed: f64, out: *mut *mut RsGram) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let g = GramState::new(dim, &params(epsilon_sq, gamma_fixed))?;
        write(out, Box::into_raw(Box::new(RsGram(g))))
    })
}

/// # Safety
/// `g` must come from [`rs_gram_new`] and `z` hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn rs_gram_insert(g: *mut RsGram, z: *const f64) -> RsStatus {
    guard(|| {
        let g = g.as_mut().ok_or_else(null)?;
        let z = input(z, g.0.dim())?;
        Ok(g.0.insert(z)?)
    })
}

/// Re-factors for a new `γ`; required after inserts under size-dependent
/// scaling.
///
/// # Safety
/// `g` must come from [`rs_gram_new`].
#[no_mangle]
pub unsafe extern "C" fn rs_gram_refresh(g: *mut RsGram, gamma: f64) -> RsStatus {
    guard(|| Ok(g.as_mut().ok_or_else(null)?.0.refresh(gamma)?))
}

/// Rate increase from adding `z` to the current set.
///
/// # Safety
/// `g` must come from [`rs_gram_new`] and `z` hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn rs_gram_marginal_gain(g: *const RsGram, z: *const f64, out: *mut f64) -> RsStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(null)?;
        let z = input(z, g.0.dim())?;
        write(out, g.0.marginal_gain(z)?)
    })
}

/// `½·log det(I + γ·G)` of the current set.
///
/// # Safety
/// `g` must come from [`rs_gram_new`].
#[no_mangle]
pub unsafe extern "C" fn rs_gram_rate(g: *const RsGram, out: *mut f64) -> RsStatus {
    guard(|| write(out, g.as_ref().ok_or_else(null)?.0.half_log_det()?))
}

/// # Safety
/// `g` must come from [`rs_gram_new`].
#[no_mangle]
pub unsafe extern "C" fn rs_gram_count(g: *const RsGram, out: *mut usize) -> RsStatus {
    guard(|| write(out, g.as_ref().ok_or_else(null)?.0.count()))
}

/// # Safety
/// `g` must come from [`rs_gram_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rs_gram_free(g: *mut RsGram) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

#[no_mangle]
pub extern "C" fn rs_selection_config_default() -> RsSelectionConfig {
    let d = SelectionConfig::default();
    RsSelectionConfig {
        ipc: d.ipc,
        alpha: d.alpha,
        beta: d.beta,
        epsilon_sq: d.params.epsilon_sq,
        gamma_fixed: 0.0,
        candidate_batch: d.candidate_batch,
        global_capped: 0,
        seed: d.seed,
    }
}

/// Greedy selection over `n` samples.
///
/// `features` is `dim×n`; `soft_labels` is `n×num_augs×num_classes` with
/// every row on the probability simplex. Sample ids are the positions
/// `0..n`.
///
/// # Safety
/// All arrays must have the stated lengths; `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_select(
    features: *const f64,
    dim: usize,
    n: usize,
    labels: *const u32,
    num_classes: usize,
    soft_labels: *const f64,
    num_augs: usize,
    config: *const RsSelectionConfig,
    out: *mut *mut RsSelection,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let cfg = config.as_ref().ok_or_else(null)?;
        let labels: Vec<usize> = input(labels, n)?.iter().map(|&l| l as usize).collect();
        let fs = FeatureSet::new(matrix(features, dim, n)?, labels, (0..n as u64).collect(), num_classes)?;
        let stack_len = checked_len(checked_len(n, num_augs)?, num_classes)?;
        let stack = SoftLabelStack::new(n, num_augs, num_classes, input(soft_labels, stack_len)?.to_vec())?;
        let config = SelectionConfig {
            ipc: cfg.ipc,
            alpha: cfg.alpha,
            beta: cfg.beta,
            params: params(cfg.epsilon_sq, cfg.gamma_fixed),
            candidate_batch: cfg.candidate_batch,
            mode: if cfg.global_capped != 0 {
                SelectionMode::GlobalCapped
            } else {
                SelectionMode::PerClass
            },
            seed: cfg.seed,
        };
        let result = select(&fs, &stack, &config)?;
        write(out, Box::into_raw(Box::new(RsSelection(result))))
    })
}

/// Number of selected samples.
///
/// # Safety
/// `s` must come from [`rs_select`].
#[no_mangle]
pub unsafe extern "C" fn rs_selection_len(s: *const RsSelection, out: *mut usize) -> RsStatus {
    guard(|| write(out, s.as_ref().ok_or_else(null)?.0.total_selected()))
}

/// Copies the selected ids in pick order and the matching round scores
/// (`scores` may be NULL). Both buffers need `capacity >= len`.
///
/// # Safety
/// `s` must come from [`rs_select`]; buffers must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn rs_selection_ids(
    s: *const RsSelection,
    ids: *mut u64,
    scores: *mut f64,
    capacity: usize,
) -> RsStatus {
    guard(|| {
        let s = &s.as_ref().ok_or_else(null)?.0;
        let n = s.total_selected();
        if capacity < n {
            return Err(Fail::Status(
                RsStatus::BufferTooSmall,
                format!("buffer holds {capacity}, need {n}"),
            ));
        }
        output(ids, n)?.copy_from_slice(&s.order);
        if !scores.is_null() {
            output(scores, n)?.copy_from_slice(&s.per_round_scores);
        }
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`rs_select`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rs_selection_free(s: *mut RsSelection) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Compresses an `n×num_augs×num_classes` stack. Pass `ratio > 0` for a
/// storage budget, or `ratio <= 0` with `rank >= 1` for a fixed rank.
///
/// # Safety
/// `labels` must hold `n*num_augs*num_classes` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rs_compress(
    labels: *const f64,
    n: usize,
    num_augs: usize,
    num_classes: usize,
    method: RsMethod,
    ratio: f64,
    rank: usize,
    bytes_per_scalar: u8,
    seed: u64,
    out: *mut *mut RsCompressed,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let len = checked_len(checked_len(n, num_augs)?, num_classes)?;
        let stack = SoftLabelStack::from_raw(n, num_augs, num_classes, input(labels, len)?.to_vec())?;
        let budget = if ratio > 0.0 {
            Budget::Ratio(ratio)
        } else {
            Budget::Rank(rank)
        };
        let opts = CompressOptions {
            bytes_per_scalar,
            seed,
            ..CompressOptions::new(method.into(), budget)
        };
        let c = compress_labels(&stack, &opts)?;
        write(out, Box::into_raw(Box::new(RsCompressed(c))))
    })
}

/// Original and stored byte counts of a compressed stack.
///
/// # Safety
/// `c` must come from [`rs_compress`]; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_compressed_bytes(c: *const RsCompressed, original: *mut u64, stored: *mut u64) -> RsStatus {
    guard(|| {
        let c = &c.as_ref().ok_or_else(null)?.0;
        write(original, c.original_bytes)?;
        write(stored, c.stored_bytes)
    })
}

/// Reconstructs the stack into `out` (`capacity >= n*num_augs*num_classes`).
/// With `renormalize != 0` rows are clamped at zero and rescaled to sum 1.
///
/// # Safety
/// `c` must come from [`rs_compress`]; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn rs_decompress(
    c: *const RsCompressed,
    renormalize: u8,
    out: *mut f64,
    capacity: usize,
) -> RsStatus {
    guard(|| {
        let c = &c.as_ref().ok_or_else(null)?.0;
        let stack = decompress_labels(c, renormalize != 0)?;
        let data = stack.as_slice();
        if capacity < data.len() {
            return Err(Fail::Status(
                RsStatus::BufferTooSmall,
                format!("buffer holds {capacity}, need {}", data.len()),
            ));
        }
        output(out, data.len())?.copy_from_slice(data);
        Ok(())
    })
}

/// # Safety
/// `c` must come from [`rs_compress`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rs_compressed_free(c: *mut RsCompressed) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Splits a `rows×cols` matrix into low-rank plus sparse parts with default
/// settings. `low_rank` and `sparse` receive dense `rows×cols` matrices.
/// Returns `NoConvergence` (with both outputs filled) if the iteration
/// limit is hit first.
///
/// # Safety
/// `m`, `low_rank`, `sparse` must hold `rows*cols` doubles; `iterations`
/// may be NULL.
#[no_mangle]
pub unsafe extern "C" fn rs_rpca(
    m: *const f64,
    rows: usize,
    cols: usize,
    low_rank: *mut f64,
    sparse: *mut f64,
    iterations: *mut usize,
) -> RsStatus {
    guard(|| {
        let input_m = matrix(m, rows, cols)?;
        let len = rows * cols;
        let (l_out, s_out) = (output(low_rank, len)?, output(sparse, len)?);
        let d = rpca_pcp(&input_m, &RpcaConfig::default())?;
        l_out.copy_from_slice(d.low_rank.as_slice());
        s_out.copy_from_slice(d.sparse_dense().as_slice());
        if !iterations.is_null() {
            iterations.write(d.iterations_used);
        }
        if d.converged {
            Ok(())
        } else {
            Err(Fail::Status(
                RsStatus::NoConvergence,
                format!("no convergence after {} iterations", d.iterations_used),
            ))
        }
    })
}
