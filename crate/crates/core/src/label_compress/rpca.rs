//! Robust PCA by principal component pursuit, solved with inexact
//! augmented-Lagrangian iterations.
//!
//! Splits `M = L + S` into a low-rank `L` and sparse `S` by minimizing
//! `‖L‖_* + λ‖S‖₁` subject to the equality constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::lowrank::singular_values;
use super::prox::{shrink, svt_factors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcaConfig {
    /// Sparsity weight; `None` uses `1/√max(rows, cols)`.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    /// Initial penalty; `None` uses `1.25/σ₁(M)`.
    pub mu0: Option<f64>,
    pub rho: f64,
    /// The penalty stops growing at `mu0·mu_max_factor`.
    pub mu_max_factor: f64,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            tol: 1e-7,
            max_iters: 500,
            mu0: None,
            rho: 1.5,
            mu_max_factor: 1e7,
        }
    }
}

impl RpcaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be positive, got {v}")))
            }
        };
        if let Some(l) = self.lambda {
            positive("lambda", l)?;
        }
        if let Some(m) = self.mu0 {
            positive("mu0", m)?;
        }
        positive("tol", self.tol)?;
        if !(self.rho > 1.0) {
            return Err(Error::InvalidParams(format!("rho must exceed 1, got {}", self.rho)));
        }
        if !(self.mu_max_factor >= 1.0) {
            return Err(Error::InvalidParams("mu_max_factor must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lambda_for(&self, rows: usize, cols: usize) -> f64 {
        self.lambda.unwrap_or_else(|| 1.0 / (rows.max(cols) as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpcaDecomposition {
    pub low_rank: DenseMatrix,
    pub sparse: Vec<SparseEntry>,
    pub iterations_used: usize,
    /// `‖M − L − S‖_F / ‖M‖_F` at exit.
    pub final_residual: f64,
    pub converged: bool,
}

impl RpcaDecomposition {
    pub fn sparse_dense(&self) -> DenseMatrix {
        densify(self.low_rank.rows(), self.low_rank.cols(), &self.sparse)
    }

    /// `Err(NoConvergence)` when the residual never reached the tolerance.
    pub fn ensure_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                iterations: self.iterations_used,
                residual: self.final_residual,
            })
        }
    }
}

pub fn densify(rows: usize, cols: usize, entries: &[SparseEntry]) -> DenseMatrix {
    let mut s = DenseMatrix::zeros(rows, cols);
    for e in entries {
        s[(e.row as usize, e.col as usize)] += e.value;
    }
    s
}

pub fn sparse_entries(s: &DenseMatrix) -> Vec<SparseEntry> {
    let mut out = Vec::new();
    for i in 0..s.rows() {
        for (j, &v) in s.row(i).iter().enumerate() {
            if v != 0.0 {
                out.push(SparseEntry {
                    row: i as u32,
                    col: j as u32,
                    value: v,
                });
            }
        }
    }
    out
}

/// Inexact ALM for principal component pursuit. A run that hits
/// `max_iters` still returns its iterate with `converged = false`.
pub fn rpca_pcp(m: &DenseMatrix, config: &RpcaConfig) -> Result<RpcaDecomposition> {
    config.validate()?;
    m.ensure_finite()?;
    if m.is_empty() {
        return Err(Error::InvalidParams("rpca needs a non-empty matrix".into()));
    }
    let (rows, cols) = m.shape();
    let norm_m = m.frobenius_norm();
    if norm_m == 0.0 {
        return Ok(RpcaDecomposition {
            low_rank: DenseMatrix::zeros(rows, cols),
            sparse: Vec::new(),
            iterations_used: 1,
            final_residual: 0.0,
            converged: true,
        });
    }
    let lambda = config.lambda_for(rows, cols);
    let sigma1 = singular_values(m)?[0];
    let dual_norm = sigma1.max(m.max_abs() / lambda);
    let mut dual = m.scale(1.0 / dual_norm);
    let mut mu = config.mu0.unwrap_or(1.25 / sigma1);
    let mu_max = mu * config.mu_max_factor;

    let mut sparse = DenseMatrix::zeros(rows, cols);
    let mut low_rank = DenseMatrix::zeros(rows, cols);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let inv_mu = 1.0 / mu;
        let target = DenseMatrix::from_fn(rows, cols, |i, j| m[(i, j)] - sparse[(i, j)] + inv_mu * dual[(i, j)]);
        low_rank = svt_factors(&target, inv_mu)?.reconstruct();
        let target = DenseMatrix::from_fn(rows, cols, |i, j| m[(i, j)] - low_rank[(i, j)] + inv_mu * dual[(i, j)]);
        sparse = shrink(&target, lambda * inv_mu)?;
        let gap = DenseMatrix::from_fn(rows, cols, |i, j| m[(i, j)] - low_rank[(i, j)] - sparse[(i, j)]);
        for (d, g) in dual.as_mut_slice().iter_mut().zip(gap.as_slice()) {
            *d += mu * g;
        }
        mu = (mu * config.rho).min(mu_max);
        residual = gap.frobenius_norm() / norm_m;
        if residual <= config.tol {
            break;
        }
    }
    Ok(RpcaDecomposition {
        low_rank,
        sparse: sparse_entries(&sparse),
        iterations_used: iterations,
        final_residual: residual,
        converged: residual <= config.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::relative_error;

    #[test]
    fn zero_matrix_is_trivial() {
        let d = rpca_pcp(&DenseMatrix::zeros(4, 3), &RpcaConfig::default()).unwrap();
        assert_eq!(d.iterations_used, 1);
        assert!(d.converged && d.sparse.is_empty());
        assert_eq!(d.low_rank, DenseMatrix::zeros(4, 3));
    }

    #[test]
    fn clean_rank_one() {
        let u: Vec<f64> = (0..12).map(|i| 1.0 + 0.1 * i as f64).collect();
        let v: Vec<f64> = (0..9).map(|j| (j as f64 * 0.7).cos()).collect();
        let m = DenseMatrix::from_fn(12, 9, |i, j| u[i] * v[j]);
        let d = rpca_pcp(&m, &RpcaConfig::default()).unwrap();
        assert!(d.converged);
        assert!(relative_error(&d.low_rank, &m) <= 1e-6);
        assert!(d.sparse_dense().frobenius_norm() <= 1e-6 * m.frobenius_norm());
    }

    #[test]
    fn hitting_max_iters_is_flagged() {
        let m = DenseMatrix::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let cfg = RpcaConfig {
            max_iters: 1,
            ..Default::default()
        };
        let d = rpca_pcp(&m, &cfg).unwrap();
        assert!(!d.converged);
        assert!(matches!(
            d.ensure_converged(),
            Err(Error::NoConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = RpcaConfig {
            rho: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RpcaConfig {
            lambda: Some(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
