//! Proximal operators of the ℓ₁ and nuclear norms.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::lowrank::{thin_svd, LowRankFactors};

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParams(format!("threshold must be >= 0, got {tau}")));
    }
    Ok(())
}

#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Elementwise `sign(x)·max(|x| − τ, 0)`.
pub fn shrink(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    check_tau(tau)?;
    m.ensure_finite()?;
    Ok(m.map(|x| if x == 0.0 { 0.0 } else { soft_threshold(x, tau) }))
}

/// Singular value thresholding, returned in factored form with zeroed
/// components dropped.
pub fn svt_factors(m: &DenseMatrix, tau: f64) -> Result<LowRankFactors> {
    check_tau(tau)?;
    let svd = thin_svd(m)?;
    let keep: Vec<usize> = (0..svd.sigma.len()).filter(|&k| svd.sigma[k] > tau).collect();
    Ok(LowRankFactors {
        u: svd.u.select_columns(&keep),
        sigma: keep.iter().map(|&k| svd.sigma[k] - tau).collect(),
        v: svd.v.select_columns(&keep),
    })
}

/// `U·shrink(Σ, τ)·Vᵀ`, the proximal operator of `τ‖·‖_*` at `m`.
pub fn svt(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    Ok(svt_factors(m, tau)?.reconstruct())
}
