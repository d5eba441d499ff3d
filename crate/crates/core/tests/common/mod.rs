#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ratesel::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Eigenvalues of a symmetric matrix from nalgebra's Jacobi-free QR solver.
pub fn sym_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    SymmetricEigen::new(to_na(m)).eigenvalues.iter().copied().collect()
}

/// `½·Σ ln(1 + γ·μ_i)` over eigenvalues of `z·zᵀ`.
pub fn rate_oracle(z: &DenseMatrix, gamma: f64) -> f64 {
    let zz = to_na(z) * to_na(z).transpose();
    SymmetricEigen::new(zz)
        .eigenvalues
        .iter()
        .map(|&mu| 0.5 * (1.0 + gamma * mu.max(0.0)).ln())
        .sum()
}

/// Singular values, descending, from nalgebra's SVD.
pub fn na_singular_values(m: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
