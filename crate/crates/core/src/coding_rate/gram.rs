use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::{Cholesky, CodingRateParams};

/// Running Gram matrix `G = Σ z·zᵀ` of a selected set together with a
/// Cholesky factor of `I + γ·G` for the current round's `γ`.
///
/// With fixed scaling the factor is kept current by rank-one updates.
/// With adaptive scaling `γ` changes with the set size, so inserts leave the
/// factor stale until [`GramState::refresh`] is called for the next round.
#[derive(Debug, Clone)]
pub struct GramState {
    dim: usize,
    gram: DenseMatrix,
    chol: Cholesky,
    round_gamma: f64,
    count: usize,
    incremental: bool,
    stale: bool,
}

impl GramState {
    /// Empty state. Under adaptive scaling the initial `γ` is the one for a
    /// single-element set, which is what the first round scores against.
    pub fn new(dim: usize, params: &CodingRateParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            dim,
            gram: DenseMatrix::zeros(dim, dim),
            chol: Cholesky::identity(dim),
            round_gamma: params.gamma(dim, 1),
            count: 0,
            incremental: params.is_fixed(),
            stale: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &DenseMatrix {
        &self.gram
    }

    pub fn chol(&self) -> &Cholesky {
        &self.chol
    }

    pub fn round_gamma(&self) -> f64 {
        self.round_gamma
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }

    fn check_vector(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn insert(&mut self, z: &[f64]) -> Result<()> {
        self.check_vector(z)?;
        for i in 0..self.dim {
            let row = self.gram.row_mut(i);
            for (g, &zj) in row.iter_mut().zip(z) {
                *g += z[i] * zj;
            }
        }
        self.count += 1;
        if self.incremental && !self.stale {
            let s = self.round_gamma.sqrt();
            let mut v: Vec<f64> = z.iter().map(|x| s * x).collect();
            self.chol.rank_one_update(&mut v);
        } else {
            self.stale = true;
        }
        Ok(())
    }

    /// Refactor `I + γ·G` at a new `γ`. O(d³).
    pub fn refresh(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must be positive, got {gamma}")));
        }
        let mut a = self.gram.scale(gamma);
        for i in 0..self.dim {
            a[(i, i)] += 1.0;
        }
        self.chol = Cholesky::factor(&a)?;
        self.round_gamma = gamma;
        self.stale = false;
        Ok(())
    }

    /// `½·ln(1 + γ·zᵀ(I + γG)⁻¹z)`, the increase in `½·ln det(I + γG)` from
    /// adding `z`. Read-only.
    pub fn marginal_gain(&self, z: &[f64]) -> Result<f64> {
        if self.stale {
            return Err(Error::StaleFactorization);
        }
        self.check_vector(z)?;
        let s = self.round_gamma.sqrt();
        let scaled: Vec<f64> = z.iter().map(|x| s * x).collect();
        let w = self.chol.forward_solve(&scaled);
        let q: f64 = w.iter().map(|v| v * v).sum();
        Ok(0.5 * q.ln_1p())
    }

    /// `½·ln det(I + γG)` at the current round's `γ`.
    pub fn half_log_det(&self) -> Result<f64> {
        if self.stale {
            return Err(Error::StaleFactorization);
        }
        Ok(0.5 * self.chol.log_det())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_state_gain() {
        let s = GramState::new(3, &CodingRateParams::fixed(0.5, 2.0)).unwrap();
        let z = [1.0, 2.0, -1.0];
        let g = s.marginal_gain(&z).unwrap();
        assert!((g - 0.5 * (1.0f64 + 2.0 * 6.0).ln()).abs() < 1e-14);
        assert_eq!(s.chol().lower(), &DenseMatrix::identity(3));
    }

    #[test]
    fn insert_into_empty_is_outer_product() {
        let mut s = GramState::new(2, &CodingRateParams::default()).unwrap();
        s.insert(&[3.0, -2.0]).unwrap();
        assert_eq!(s.gram().as_slice(), &[9.0, -6.0, -6.0, 4.0]);
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn adaptive_insert_marks_stale() {
        let mut s = GramState::new(2, &CodingRateParams::default()).unwrap();
        s.insert(&[1.0, 0.0]).unwrap();
        assert!(s.is_stale());
        assert!(matches!(s.marginal_gain(&[0.0, 1.0]), Err(Error::StaleFactorization)));
        s.refresh(1.0).unwrap();
        assert!(s.marginal_gain(&[0.0, 1.0]).is_ok());
    }

    #[test]
    fn rejects_bad_vectors() {
        let mut s = GramState::new(2, &CodingRateParams::default()).unwrap();
        assert!(matches!(s.insert(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(s.insert(&[1.0, f64::INFINITY]), Err(Error::NonFinite)));
        assert!(s.refresh(0.0).is_err());
    }

    #[test]
    fn orthogonal_gain_is_set_independent() {
        let mut s = GramState::new(3, &CodingRateParams::fixed(0.5, 1.5)).unwrap();
        s.insert(&[1.0, 2.0, 0.0]).unwrap();
        s.insert(&[-1.0, 0.5, 0.0]).unwrap();
        let z = [0.0, 0.0, 2.0];
        let g = s.marginal_gain(&z).unwrap();
        assert!((g - 0.5 * (1.0f64 + 1.5 * 4.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn refresh_is_deterministic() {
        let mut s = GramState::new(2, &CodingRateParams::default()).unwrap();
        s.insert(&[0.3, 0.7]).unwrap();
        s.refresh(2.5).unwrap();
        let a = s.chol().clone();
        s.refresh(2.5).unwrap();
        assert_eq!(&a, s.chol());
    }
}
