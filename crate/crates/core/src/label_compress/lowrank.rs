//! Truncated, randomized and CUR low-rank factorizations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Thin SVD `m = U·diag(σ)·Vᵀ` with `σ` sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

fn to_faer(m: &DenseMatrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

pub fn thin_svd(m: &DenseMatrix) -> Result<Svd> {
    m.ensure_finite()?;
    if m.is_empty() {
        return Err(Error::SvdFailure);
    }
    let svd = to_faer(m).thin_svd().map_err(|_| Error::SvdFailure)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    Ok(Svd {
        u: DenseMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]),
        sigma: order.iter().map(|&k| s[k]).collect(),
        v: DenseMatrix::from_fn(v.nrows(), order.len(), |i, j| v[(i, order[j])]),
    })
}

pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    m.ensure_finite()?;
    if m.is_empty() {
        return Err(Error::SvdFailure);
    }
    let mut s = to_faer(m).singular_values().map_err(|_| Error::SvdFailure)?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Rank-`r` factors `U_r·diag(σ_r)·V_rᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl LowRankFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let (rows, cols) = self.shape();
        let mut out = DenseMatrix::zeros(rows, cols);
        for k in 0..self.rank() {
            let s = self.sigma[k];
            for i in 0..rows {
                let a = s * self.u[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o += a * self.v[(j, k)];
                }
            }
        }
        out
    }

    fn from_svd(svd: &Svd, rank: usize) -> Self {
        let keep: Vec<usize> = (0..rank).collect();
        Self {
            u: svd.u.select_columns(&keep),
            sigma: svd.sigma[..rank].to_vec(),
            v: svd.v.select_columns(&keep),
        }
    }

    /// Drop trailing components whose singular value is at most
    /// `rel_tol·σ₁`.
    pub fn trim(self, rel_tol: f64) -> Self {
        let cutoff = self.sigma.first().map_or(0.0, |s| s * rel_tol);
        let keep = self.sigma.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
        if keep == self.rank() {
            return self;
        }
        let idx: Vec<usize> = (0..keep).collect();
        Self {
            u: self.u.select_columns(&idx),
            sigma: self.sigma[..keep].to_vec(),
            v: self.v.select_columns(&idx),
        }
    }
}

fn check_rank(rank: usize, max: usize) -> Result<()> {
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    Ok(())
}

/// Best rank-`rank` approximation (Eckart–Young).
pub fn svd_truncate(m: &DenseMatrix, rank: usize) -> Result<LowRankFactors> {
    check_rank(rank, m.rows().min(m.cols()))?;
    Ok(LowRankFactors::from_svd(&thin_svd(m)?, rank))
}

fn orthonormal_basis(y: &DenseMatrix) -> DenseMatrix {
    let q: DMatrix<f64> = y.to_nalgebra().qr().q();
    DenseMatrix::from_nalgebra(&q)
}

/// Randomized range-finder SVD with a seeded Gaussian test matrix and
/// `power_iters` re-orthonormalized power iterations.
pub fn randomized_svd(
    m: &DenseMatrix,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<LowRankFactors> {
    let max = m.rows().min(m.cols());
    check_rank(rank, max)?;
    if rank + oversample > max {
        return Err(Error::RankOutOfRange {
            rank: rank + oversample,
            max,
        });
    }
    m.ensure_finite()?;
    let width = rank + oversample;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DenseMatrix::from_fn(m.cols(), width, |_, _| rng.sample(StandardNormal));
    let mt = m.transpose();
    let mut q = orthonormal_basis(&m.matmul(&omega)?);
    for _ in 0..power_iters {
        let w = orthonormal_basis(&mt.matmul(&q)?);
        q = orthonormal_basis(&m.matmul(&w)?);
    }
    let b = q.transpose().matmul(m)?;
    let small = thin_svd(&b)?;
    let u = q.matmul(&small.u)?;
    Ok(LowRankFactors::from_svd(
        &Svd {
            u,
            sigma: small.sigma,
            v: small.v,
        },
        rank,
    ))
}

/// Moore–Penrose pseudoinverse with a relative singular-value cutoff.
pub fn pinv(m: &DenseMatrix) -> Result<DenseMatrix> {
    let svd = thin_svd(m)?;
    let cutoff = svd.sigma.first().copied().unwrap_or(0.0) * f64::EPSILON * m.rows().max(m.cols()) as f64;
    let mut out = DenseMatrix::zeros(m.cols(), m.rows());
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..m.cols() {
            let a = svd.v[(i, k)] * inv;
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += a * svd.u[(j, k)];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurSampling {
    #[default]
    Leverage,
    Uniform,
}

/// `m ≈ C·U·R` with `C` a subset of columns and `R` a subset of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CurFactors {
    pub col_indices: Vec<usize>,
    pub row_indices: Vec<usize>,
    pub c_block: DenseMatrix,
    pub core: DenseMatrix,
    pub r_block: DenseMatrix,
}

impl CurFactors {
    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.c_block.matmul(&self.core)?.matmul(&self.r_block)
    }
}

/// Weighted sampling of `amount` distinct indices (Efraimidis–Spirakis keys).
/// Zero-weight indices are only used once the positive ones run out.
fn weighted_without_replacement(weights: &[f64], amount: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random::<f64>();
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut picked: Vec<usize> = keyed[..amount].iter().map(|&(_, i)| i).collect();
    picked.sort_unstable();
    picked
}

/// Leverage scores of the rows of an orthonormal block, over its first `k`
/// columns, normalized to sum to 1.
fn leverage(basis: &DenseMatrix, k: usize) -> Vec<f64> {
    (0..basis.rows())
        .map(|i| (0..k).map(|j| basis[(i, j)].powi(2)).sum::<f64>() / k as f64)
        .collect()
}

pub fn cur_decompose(
    m: &DenseMatrix,
    num_cols: usize,
    num_rows: usize,
    seed: u64,
    sampling: CurSampling,
) -> Result<CurFactors> {
    check_rank(num_cols, m.cols())?;
    check_rank(num_rows, m.rows())?;
    m.ensure_finite()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (col_w, row_w) = match sampling {
        CurSampling::Leverage => {
            let k = num_cols.min(num_rows).min(m.rows().min(m.cols()));
            let svd = thin_svd(m)?;
            (leverage(&svd.v, k), leverage(&svd.u, k))
        }
        CurSampling::Uniform => (vec![1.0; m.cols()], vec![1.0; m.rows()]),
    };
    let col_indices = weighted_without_replacement(&col_w, num_cols, &mut rng);
    let row_indices = weighted_without_replacement(&row_w, num_rows, &mut rng);
    let c_block = m.select_columns(&col_indices);
    let r_block = m.select_rows(&row_indices);
    let core = pinv(&c_block)?.matmul(m)?.matmul(&pinv(&r_block)?)?;
    Ok(CurFactors {
        col_indices,
        row_indices,
        c_block,
        core,
        r_block,
    })
}
