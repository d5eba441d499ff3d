//! Dense lower-triangular Cholesky factor with rank-one update and
//! forward substitution.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    /// Factor the lower triangle of `a`. The upper triangle is not read.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.cols(),
            });
        }
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                let (ri, rj) = (l.row(i), l.row(j));
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            l: DenseMatrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    /// `ln det(L·Lᵀ)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// In-place update so that `L'·L'ᵀ = L·Lᵀ + v·vᵀ`. `v` is consumed as
    /// workspace.
    pub fn rank_one_update(&mut self, v: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        for j in 0..n {
            let ljj = self.l[(j, j)];
            let vj = v[j];
            let r = ljj.hypot(vj);
            let c = r / ljj;
            let s = vj / ljj;
            self.l[(j, j)] = r;
            for i in (j + 1)..n {
                let lij = (self.l[(i, j)] + s * v[i]) / c;
                self.l[(i, j)] = lij;
                v[i] = c * v[i] - s * lij;
            }
        }
    }

    /// Solve `L·w = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut w = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = w[i];
            for k in 0..i {
                s -= row[k] * w[k];
            }
            w[i] = s / row[i];
        }
        w
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.l.outer_gram()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::relative_error;

    fn spd(n: usize) -> DenseMatrix {
        let b = DenseMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let mut a = b.outer_gram();
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    }

    #[test]
    fn factor_reconstructs() {
        let a = spd(6);
        let c = Cholesky::factor(&a).unwrap();
        assert!(relative_error(&c.reconstruct(), &a) < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let a = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            Cholesky::factor(&a),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn rank_one_update_matches_refactor() {
        let a = spd(5);
        let v = [0.3, -1.2, 0.5, 2.0, -0.1];
        let mut c = Cholesky::factor(&a).unwrap();
        c.rank_one_update(&mut v.clone());
        let mut b = a.clone();
        for i in 0..5 {
            for j in 0..5 {
                b[(i, j)] += v[i] * v[j];
            }
        }
        let fresh = Cholesky::factor(&b).unwrap();
        assert!(relative_error(c.lower(), fresh.lower()) < 1e-12);
    }

    #[test]
    fn forward_solve_inverts() {
        let c = Cholesky::factor(&spd(4)).unwrap();
        let b = [1.0, 2.0, -3.0, 0.5];
        let w = c.forward_solve(&b);
        for i in 0..4 {
            let lw: f64 = (0..=i).map(|k| c.lower()[(i, k)] * w[k]).sum();
            assert!((lw - b[i]).abs() < 1e-12);
        }
    }
}
