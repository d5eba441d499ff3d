use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const SIMPLEX_TOL: f64 = 1e-6;

/// Feature matrix `Z ∈ R^{d×n}` with one class label and one id per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: DenseMatrix,
    labels: Vec<usize>,
    sample_ids: Vec<u64>,
    num_classes: usize,
}

impl FeatureSet {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, sample_ids: Vec<u64>, num_classes: usize) -> Result<Self> {
        let n = features.cols();
        for len in [labels.len(), sample_ids.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        features.ensure_finite()?;
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = sample_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidSpec(format!("duplicate sample id {dup}")));
        }
        Ok(Self {
            features,
            labels,
            sample_ids,
            num_classes,
        })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    pub fn len(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature(&self, i: usize) -> Vec<f64> {
        self.features.column(i)
    }

    /// Sample positions grouped by class, in ascending position order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.sample_ids.iter().position(|&s| s == id)
    }

    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            features: self.features.select_columns(positions),
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
            sample_ids: positions.iter().map(|&p| self.sample_ids[p]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Per-sample `K×C` soft-label blocks, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelStack {
    num_samples: usize,
    num_augs: usize,
    num_classes: usize,
    data: Vec<f64>,
}

impl SoftLabelStack {
    /// Validates that every row is a probability vector within `1e-6`.
    pub fn new(num_samples: usize, num_augs: usize, num_classes: usize, data: Vec<f64>) -> Result<Self> {
        let stack = Self::from_raw(num_samples, num_augs, num_classes, data)?;
        for (r, row) in stack.data.chunks(num_classes.max(1)).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| v < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidSpec(format!(
                    "soft-label row {} of sample {} is not on the simplex (sum {sum})",
                    r % num_augs.max(1),
                    r / num_augs.max(1)
                )));
            }
        }
        Ok(stack)
    }

    /// Same layout without the simplex check, for reconstructions.
    pub fn from_raw(num_samples: usize, num_augs: usize, num_classes: usize, data: Vec<f64>) -> Result<Self> {
        let expected = num_samples * num_augs * num_classes;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            num_samples,
            num_augs,
            num_classes,
            data,
        })
    }

    pub fn from_samples(samples: &[DenseMatrix]) -> Result<Self> {
        let (k, c) = samples.first().map_or((0, 0), DenseMatrix::shape);
        let mut data = Vec::with_capacity(samples.len() * k * c);
        for s in samples {
            if s.shape() != (k, c) {
                return Err(Error::DimensionMismatch {
                    expected: k * c,
                    found: s.rows() * s.cols(),
                });
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::from_raw(samples.len(), k, c, data)
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_augs(&self) -> usize {
        self.num_augs
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sample_slice(&self, i: usize) -> &[f64] {
        let block = self.num_augs * self.num_classes;
        &self.data[i * block..(i + 1) * block]
    }

    pub fn sample(&self, i: usize) -> DenseMatrix {
        DenseMatrix::from_vec(self.num_augs, self.num_classes, self.sample_slice(i).to_vec())
            .expect("block size matches shape")
    }

    pub fn samples(&self) -> Vec<DenseMatrix> {
        (0..self.num_samples).map(|i| self.sample(i)).collect()
    }

    pub fn subset(&self, positions: &[usize]) -> Self {
        let mut data = Vec::with_capacity(positions.len() * self.num_augs * self.num_classes);
        for &p in positions {
            data.extend_from_slice(self.sample_slice(p));
        }
        Self {
            num_samples: positions.len(),
            num_augs: self.num_augs,
            num_classes: self.num_classes,
            data,
        }
    }
}
