//! Log-det coding-rate kernels.
//!
//! The coding rate of a feature matrix `Z ∈ R^{d×n}` at distortion `ε` is
//! `½·ln det(I + γ·Z·Zᵀ)` with `γ = d/(n·ε²)`. All logarithms are natural.
//! Determinants are evaluated through a Cholesky factor, and
//! [`GramState`] keeps one around so that the gain of adding a single
//! column costs a triangular solve instead of a refactorization.

mod cholesky;
mod gram;

pub use cholesky::Cholesky;
pub use gram::GramState;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const DEFAULT_EPSILON_SQ: f64 = 0.5;

/// How the scale `γ` in front of the Gram matrix is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Scaling {
    /// `γ = d/(n·ε²)`, with `n` the size of the set being evaluated.
    Adaptive,
    /// A single `γ` for the whole run.
    Fixed { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingRateParams {
    pub epsilon_sq: f64,
    pub scaling: Scaling,
}

impl Default for CodingRateParams {
    fn default() -> Self {
        Self::adaptive(DEFAULT_EPSILON_SQ)
    }
}

impl CodingRateParams {
    pub fn adaptive(epsilon_sq: f64) -> Self {
        Self {
            epsilon_sq,
            scaling: Scaling::Adaptive,
        }
    }

    pub fn fixed(epsilon_sq: f64, gamma: f64) -> Self {
        Self {
            epsilon_sq,
            scaling: Scaling::Fixed { gamma },
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self.scaling, Scaling::Fixed { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_sq > 0.0) || !self.epsilon_sq.is_finite() {
            return Err(Error::InvalidParams(format!(
                "epsilon_sq must be positive, got {}",
                self.epsilon_sq
            )));
        }
        if let Scaling::Fixed { gamma } = self.scaling {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "fixed gamma must be positive, got {gamma}"
                )));
            }
        }
        Ok(())
    }

    /// Effective `γ` for a set of `count` vectors in `dim` dimensions.
    pub fn gamma(&self, dim: usize, count: usize) -> f64 {
        match self.scaling {
            Scaling::Adaptive => dim as f64 / (count as f64 * self.epsilon_sq),
            Scaling::Fixed { gamma } => gamma,
        }
    }
}

/// `ln det(a)` for a symmetric positive-definite `a`.
pub fn logdet_psd(a: &DenseMatrix) -> Result<f64> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    a.ensure_finite()?;
    let asym = a.max_asymmetry();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(Cholesky::factor(a)?.log_det())
}

/// `ln det(I + γ·x·xᵀ)`, factored on whichever Gram side is smaller.
pub(crate) fn logdet_shifted_gram(x: &DenseMatrix, gamma: f64) -> Result<f64> {
    if x.is_empty() {
        return Ok(0.0);
    }
    let mut a = if x.rows() <= x.cols() {
        x.outer_gram()
    } else {
        x.inner_gram()
    };
    for v in a.as_mut_slice() {
        *v *= gamma;
    }
    for i in 0..a.rows() {
        a[(i, i)] += 1.0;
    }
    Ok(Cholesky::factor(&a)?.log_det())
}

/// `R(Z) = ½·ln det(I + γ·Z·Zᵀ)`. A matrix with no columns has rate 0.
pub fn coding_rate(z: &DenseMatrix, params: &CodingRateParams) -> Result<f64> {
    params.validate()?;
    z.ensure_finite()?;
    if z.is_empty() {
        return Ok(0.0);
    }
    let gamma = params.gamma(z.rows(), z.cols());
    Ok(0.5 * logdet_shifted_gram(z, gamma)?)
}

/// Class-conditional rate `Σ_j (n_j/2n)·ln det(I + d/(n_j ε²)·Z Π_j Zᵀ)`.
/// Classes without samples contribute nothing.
pub fn class_coding_rate(
    z: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    params: &CodingRateParams,
) -> Result<f64> {
    params.validate()?;
    z.ensure_finite()?;
    let n = z.cols();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParams(
            "class coding rate needs at least one sample".into(),
        ));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::LabelOutOfRange { label: l, num_classes });
        }
        members[l].push(i);
    }
    let mut total = 0.0;
    for idx in members.iter().filter(|m| !m.is_empty()) {
        let zj = z.select_columns(idx);
        let gamma = params.gamma(z.rows(), idx.len());
        total += idx.len() as f64 / (2.0 * n as f64) * logdet_shifted_gram(&zj, gamma)?;
    }
    Ok(total)
}

/// Rate of one sample's `K×C` soft-label block, treating its `K` rows as
/// vectors in `C` dimensions: `½·ln det(I_C + γ·Yᵀ·Y)` with `γ = C/(K ε²)`
/// under adaptive scaling.
pub fn label_coding_rate(y: &DenseMatrix, params: &CodingRateParams) -> Result<f64> {
    params.validate()?;
    y.ensure_finite()?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let gamma = params.gamma(y.cols(), y.rows());
    Ok(0.5 * logdet_shifted_gram(y, gamma)?)
}
