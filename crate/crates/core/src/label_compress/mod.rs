//! Low-rank compression of per-sample soft-label blocks.
//!
//! Every `K×C` block is compressed on its own, by truncated SVD,
//! randomized SVD, CUR, or robust PCA (low-rank part truncated, largest
//! sparse spikes kept). Storage is accounted exactly; see [`budget`].

pub mod budget;
pub mod lowrank;
pub mod prox;
pub mod rpca;

pub use budget::{plan_cur_for_ratio, plan_rank_for_ratio, plan_rpca_for_ratio, RpcaPlan};
pub use lowrank::{
    cur_decompose, pinv, randomized_svd, singular_values, svd_truncate, thin_svd, CurFactors, CurSampling,
    LowRankFactors, Svd,
};
pub use prox::{shrink, svt, svt_factors};
pub use rpca::{densify, rpca_pcp, RpcaConfig, RpcaDecomposition, SparseEntry};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{relative_error, DenseMatrix};
use crate::selector::SoftLabelStack;

pub const DEFAULT_OVERSAMPLE: usize = 8;
pub const DEFAULT_POWER_ITERS: usize = 2;
pub const DEFAULT_RPCA_LOW_RANK_SHARE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMethod {
    Rpca,
    Svd,
    Rsvd,
    Cur,
}

impl CompressionMethod {
    pub const ALL: [CompressionMethod; 4] = [Self::Rpca, Self::Svd, Self::Rsvd, Self::Cur];

    pub fn code(self) -> u8 {
        match self {
            Self::Rpca => 0,
            Self::Svd => 1,
            Self::Rsvd => 2,
            Self::Cur => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rpca => "rpca",
            Self::Svd => "svd",
            Self::Rsvd => "rsvd",
            Self::Cur => "cur",
        }
    }
}

impl fmt::Display for CompressionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompressionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown compression method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Target `original/stored` ratio; sizes come from the planner.
    Ratio(f64),
    /// Explicit rank (CUR: number of columns and rows). RPCA keeps every
    /// sparse entry.
    Rank(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressOptions {
    pub method: CompressionMethod,
    pub budget: Budget,
    pub bytes_per_scalar: u8,
    pub seed: u64,
    pub rpca: RpcaConfig,
    pub rpca_low_rank_share: f64,
    pub oversample: usize,
    pub power_iters: usize,
    pub cur_sampling: CurSampling,
}

impl CompressOptions {
    pub fn new(method: CompressionMethod, budget: Budget) -> Self {
        Self {
            method,
            budget,
            bytes_per_scalar: 8,
            seed: 0,
            rpca: RpcaConfig::default(),
            rpca_low_rank_share: DEFAULT_RPCA_LOW_RANK_SHARE,
            oversample: DEFAULT_OVERSAMPLE,
            power_iters: DEFAULT_POWER_ITERS,
            cur_sampling: CurSampling::Leverage,
        }
    }
}

/// Factors for one sample's block.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleFactors {
    LowRank(LowRankFactors),
    Cur {
        c_block: DenseMatrix,
        core: DenseMatrix,
        r_block: DenseMatrix,
    },
    Rpca {
        low_rank: LowRankFactors,
        sparse: Vec<SparseEntry>,
    },
}

impl SampleFactors {
    pub fn reconstruct(&self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        self.check_shape(rows, cols)?;
        match self {
            Self::LowRank(f) => Ok(f.reconstruct()),
            Self::Cur { c_block, core, r_block } => c_block.matmul(core)?.matmul(r_block),
            Self::Rpca { low_rank, sparse } => {
                let mut m = low_rank.reconstruct();
                for e in sparse {
                    m[(e.row as usize, e.col as usize)] += e.value;
                }
                Ok(m)
            }
        }
    }

    pub fn stored_bytes(&self, rows: usize, cols: usize, bytes: u8) -> u64 {
        match self {
            Self::LowRank(f) => budget::low_rank_bytes(rows, cols, f.rank(), bytes),
            Self::Cur { c_block, r_block, .. } => budget::cur_bytes(rows, cols, c_block.cols(), r_block.rows(), bytes),
            Self::Rpca { low_rank, sparse } => {
                budget::low_rank_bytes(rows, cols, low_rank.rank(), bytes) + budget::triplet_bytes(sparse.len(), bytes)
            }
        }
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::MalformedFactors(what.to_string()));
        let low_rank_ok = |f: &LowRankFactors| {
            f.u.rows() == rows && f.v.rows() == cols && f.u.cols() == f.rank() && f.v.cols() == f.rank()
        };
        match self {
            Self::LowRank(f) if !low_rank_ok(f) => bad("low-rank factor shapes"),
            Self::Cur { c_block, core, r_block }
                if c_block.rows() != rows
                    || r_block.cols() != cols
                    || core.rows() != c_block.cols()
                    || core.cols() != r_block.rows() =>
            {
                bad("cur block shapes")
            }
            Self::Rpca { low_rank, sparse } => {
                if !low_rank_ok(low_rank) {
                    return bad("rpca low-rank shapes");
                }
                if sparse.iter().any(|e| e.row as usize >= rows || e.col as usize >= cols) {
                    return bad("sparse entry out of range");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn round_to_f32(&mut self) {
        let round = |m: &mut DenseMatrix| m.as_mut_slice().iter_mut().for_each(|v| *v = *v as f32 as f64);
        let round_lr = |f: &mut LowRankFactors| {
            round(&mut f.u);
            round(&mut f.v);
            f.sigma.iter_mut().for_each(|v| *v = *v as f32 as f64);
        };
        match self {
            Self::LowRank(f) => round_lr(f),
            Self::Cur { c_block, core, r_block } => {
                round(c_block);
                round(core);
                round(r_block);
            }
            Self::Rpca { low_rank, sparse } => {
                round_lr(low_rank);
                sparse.iter_mut().for_each(|e| e.value = e.value as f32 as f64);
            }
        }
    }
}

/// Per-sample solver diagnostics for RPCA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcaDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub sparse_found: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLabels {
    pub method: CompressionMethod,
    pub num_samples: usize,
    pub num_augs: usize,
    pub num_classes: usize,
    pub bytes_per_scalar: u8,
    pub samples: Vec<SampleFactors>,
    pub stored_bytes: u64,
    pub original_bytes: u64,
    /// Present for RPCA only; not serialized.
    pub rpca_diagnostics: Vec<RpcaDiagnostics>,
}

impl CompressedLabels {
    pub fn achieved_ratio(&self) -> f64 {
        self.original_bytes as f64 / self.stored_bytes as f64
    }

    /// Sum of per-sample stored bytes, recomputed from the factors.
    pub fn recount_bytes(&self) -> u64 {
        self.samples
            .iter()
            .map(|s| s.stored_bytes(self.num_augs, self.num_classes, self.bytes_per_scalar))
            .sum()
    }

    pub fn unconverged(&self) -> usize {
        self.rpca_diagnostics.iter().filter(|d| !d.converged).count()
    }
}

/// Upper bound on the stored bytes of one `rows×cols` block compressed by
/// `method` at `ratio`, from the planner alone. Reached exactly by SVD,
/// RSVD and CUR; RPCA stays at or below it.
pub fn planned_block_bytes(
    method: CompressionMethod,
    rows: usize,
    cols: usize,
    ratio: f64,
    bytes: u8,
    rpca_low_rank_share: f64,
) -> Result<u64> {
    Ok(match method {
        CompressionMethod::Svd | CompressionMethod::Rsvd => {
            budget::low_rank_bytes(rows, cols, plan_rank_for_ratio(rows, cols, ratio, bytes)?, bytes)
        }
        CompressionMethod::Cur => {
            let s = plan_cur_for_ratio(rows, cols, ratio, bytes)?;
            budget::cur_bytes(rows, cols, s, s, bytes)
        }
        CompressionMethod::Rpca => {
            let plan = plan_rpca_for_ratio(rows, cols, ratio, bytes, rpca_low_rank_share)?;
            budget::low_rank_bytes(rows, cols, plan.rank, bytes) + budget::triplet_bytes(plan.max_triplets, bytes)
        }
    })
}

fn compress_block(
    block: &DenseMatrix,
    opts: &CompressOptions,
    seed: u64,
) -> Result<(SampleFactors, Option<RpcaDiagnostics>)> {
    let (rows, cols) = block.shape();
    let full = rows.min(cols);
    let bytes = opts.bytes_per_scalar;
    let factors = match (opts.method, opts.budget) {
        (CompressionMethod::Svd, budget) => {
            let rank = match budget {
                Budget::Ratio(r) => plan_rank_for_ratio(rows, cols, r, bytes)?,
                Budget::Rank(r) => r,
            };
            SampleFactors::LowRank(svd_truncate(block, rank)?)
        }
        (CompressionMethod::Rsvd, budget) => {
            let rank = match budget {
                Budget::Ratio(r) => plan_rank_for_ratio(rows, cols, r, bytes)?,
                Budget::Rank(r) => r,
            };
            if rank == 0 || rank > full {
                return Err(Error::RankOutOfRange { rank, max: full });
            }
            let oversample = opts.oversample.min(full - rank);
            SampleFactors::LowRank(randomized_svd(block, rank, oversample, opts.power_iters, seed)?)
        }
        (CompressionMethod::Cur, budget) => {
            let size = match budget {
                Budget::Ratio(r) => plan_cur_for_ratio(rows, cols, r, bytes)?,
                Budget::Rank(r) => r,
            };
            let f = cur_decompose(block, size, size, seed, opts.cur_sampling)?;
            SampleFactors::Cur {
                c_block: f.c_block,
                core: f.core,
                r_block: f.r_block,
            }
        }
        (CompressionMethod::Rpca, budget) => {
            let (rank, max_triplets) = match budget {
                Budget::Ratio(r) => {
                    let plan = plan_rpca_for_ratio(rows, cols, r, bytes, opts.rpca_low_rank_share)?;
                    (plan.rank, Some(plan.max_triplets))
                }
                Budget::Rank(r) => {
                    if r == 0 || r > full {
                        return Err(Error::RankOutOfRange { rank: r, max: full });
                    }
                    (r, None)
                }
            };
            let d = rpca_pcp(block, &opts.rpca)?;
            let diag = RpcaDiagnostics {
                iterations: d.iterations_used,
                residual: d.final_residual,
                converged: d.converged,
                sparse_found: d.sparse.len(),
            };
            let low_rank = if d.low_rank.frobenius_norm() == 0.0 {
                LowRankFactors {
                    u: DenseMatrix::zeros(rows, 0),
                    sigma: Vec::new(),
                    v: DenseMatrix::zeros(cols, 0),
                }
            } else {
                svd_truncate(&d.low_rank, rank)?.trim(1e-12)
            };
            let mut sparse = d.sparse;
            if let Some(t) = max_triplets {
                sparse.sort_by(|a, b| {
                    b.value
                        .abs()
                        .total_cmp(&a.value.abs())
                        .then((a.row, a.col).cmp(&(b.row, b.col)))
                });
                sparse.truncate(t);
                sparse.sort_by_key(|e| (e.row, e.col));
            }
            return Ok((SampleFactors::Rpca { low_rank, sparse }, Some(diag)));
        }
    };
    Ok((factors, None))
}

/// Compress each sample's block independently. Sample `i` uses seed
/// `seed ^ i`. RPCA non-convergence is reported in the diagnostics, not as
/// an error.
pub fn compress_labels(stack: &SoftLabelStack, opts: &CompressOptions) -> Result<CompressedLabels> {
    budget::check_bytes_per_scalar(opts.bytes_per_scalar)?;
    if let Budget::Ratio(r) = opts.budget {
        budget::check_ratio(r)?;
    }
    if opts.method == CompressionMethod::Rpca {
        opts.rpca.validate()?;
    }
    let (k, c) = (stack.num_augs(), stack.num_classes());
    let results = (0..stack.num_samples())
        .into_par_iter()
        .map(|i| {
            let (mut f, diag) = compress_block(&stack.sample(i), opts, opts.seed ^ i as u64)?;
            if opts.bytes_per_scalar == 4 {
                f.round_to_f32();
            }
            Ok((f, diag))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::new();
    for (f, d) in results {
        samples.push(f);
        diagnostics.extend(d);
    }
    let mut out = CompressedLabels {
        method: opts.method,
        num_samples: stack.num_samples(),
        num_augs: k,
        num_classes: c,
        bytes_per_scalar: opts.bytes_per_scalar,
        samples,
        stored_bytes: 0,
        original_bytes: budget::dense_bytes(k, c, opts.bytes_per_scalar) * stack.num_samples() as u64,
        rpca_diagnostics: diagnostics,
    };
    out.stored_bytes = out.recount_bytes();
    Ok(out)
}

/// Rebuild every block. With `renormalize`, rows are clamped at zero and
/// rescaled onto the probability simplex (uniform if a row vanishes).
pub fn decompress_labels(c: &CompressedLabels, renormalize: bool) -> Result<SoftLabelStack> {
    if c.samples.len() != c.num_samples {
        return Err(Error::MalformedFactors(format!(
            "{} factor blocks for {} samples",
            c.samples.len(),
            c.num_samples
        )));
    }
    let mut data = Vec::with_capacity(c.num_samples * c.num_augs * c.num_classes);
    for s in &c.samples {
        let mut m = s.reconstruct(c.num_augs, c.num_classes)?;
        if renormalize {
            for i in 0..m.rows() {
                project_row_to_simplex(m.row_mut(i));
            }
        }
        data.extend_from_slice(m.as_slice());
    }
    SoftLabelStack::from_raw(c.num_samples, c.num_augs, c.num_classes, data)
}

fn project_row_to_simplex(row: &mut [f64]) {
    row.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|v| *v /= sum);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|v| *v = u);
    }
}

/// Relative Frobenius error per sample between two aligned stacks.
pub fn reconstruction_errors(reconstructed: &SoftLabelStack, original: &SoftLabelStack) -> Result<Vec<f64>> {
    if reconstructed.num_samples() != original.num_samples()
        || reconstructed.num_augs() != original.num_augs()
        || reconstructed.num_classes() != original.num_classes()
    {
        return Err(Error::DimensionMismatch {
            expected: original.as_slice().len(),
            found: reconstructed.as_slice().len(),
        });
    }
    Ok((0..original.num_samples())
        .map(|i| relative_error(&reconstructed.sample(i), &original.sample(i)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack() -> SoftLabelStack {
        let rows = [
            [0.7, 0.2, 0.1, 0.0],
            [0.6, 0.3, 0.05, 0.05],
            [0.7, 0.2, 0.1, 0.0],
            [0.1, 0.1, 0.4, 0.4],
        ];
        let data: Vec<f64> = rows.iter().chain(rows.iter().rev()).flatten().copied().collect();
        SoftLabelStack::new(2, 4, 4, data).unwrap()
    }

    #[test]
    fn full_rank_roundtrip() {
        let s = stack();
        for method in CompressionMethod::ALL {
            let mut opts = CompressOptions::new(method, Budget::Rank(4));
            opts.oversample = 0;
            // the PCP residual, not the truncation, bounds the RPCA error
            opts.rpca.tol = 1e-10;
            let c = compress_labels(&s, &opts).unwrap();
            let back = decompress_labels(&c, false).unwrap();
            let errs = reconstruction_errors(&back, &s).unwrap();
            assert!(errs.iter().all(|&e| e <= 1e-8), "{method}: {errs:?}");
        }
    }

    #[test]
    fn renormalized_rows_on_simplex() {
        let s = stack();
        let c = compress_labels(&s, &CompressOptions::new(CompressionMethod::Svd, Budget::Rank(1))).unwrap();
        let back = decompress_labels(&c, true).unwrap();
        for row in back.as_slice().chunks(4) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn infeasible_ratio() {
        let s = stack();
        let r = compress_labels(&s, &CompressOptions::new(CompressionMethod::Svd, Budget::Ratio(30.0)));
        assert!(matches!(r, Err(Error::RatioInfeasible { .. })));
    }

    #[test]
    fn four_byte_scalars_halve_storage() {
        let s = stack();
        let mut opts = CompressOptions::new(CompressionMethod::Svd, Budget::Rank(2));
        let eight = compress_labels(&s, &opts).unwrap();
        opts.bytes_per_scalar = 4;
        let four = compress_labels(&s, &opts).unwrap();
        assert_eq!(four.stored_bytes * 2, eight.stored_bytes);
        assert_eq!(four.original_bytes * 2, eight.original_bytes);
    }

    #[test]
    fn malformed_factors_rejected() {
        let s = stack();
        let mut c = compress_labels(&s, &CompressOptions::new(CompressionMethod::Svd, Budget::Rank(2))).unwrap();
        c.num_classes = 5;
        assert!(matches!(decompress_labels(&c, false), Err(Error::MalformedFactors(_))));
    }

    #[test]
    fn method_names_roundtrip() {
        for m in CompressionMethod::ALL {
            assert_eq!(m.name().parse::<CompressionMethod>().unwrap(), m);
            assert_eq!(CompressionMethod::from_code(m.code()), Some(m));
        }
    }
}
