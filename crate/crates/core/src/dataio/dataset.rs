use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{file_checksum, load_tensor, save_matrix, save_tensor, write_canonical_json, Dtype};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::selector::{FeatureSet, SoftLabelStack};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

const FEATURES_FILE: &str = "features.bin";
const LABELS_FILE: &str = "labels.bin";
const SOFT_LABELS_FILE: &str = "soft_labels.bin";
pub(crate) const MANIFEST_FILE: &str = "manifest.json";

/// A file next to its manifest, with the FNV-1a checksum of its bytes as 16
/// lowercase hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub checksum: String,
}

impl FileRef {
    pub fn new(path: &str, checksum: u64) -> Self {
        Self {
            path: path.to_string(),
            checksum: format!("{checksum:016x}"),
        }
    }

    pub fn resolve(&self, base: &Path) -> PathBuf {
        base.join(&self.path)
    }

    /// Fails with `ChecksumMismatch` unless the file under `base` matches.
    pub fn verify(&self, base: &Path) -> Result<PathBuf> {
        let path = self.resolve(base);
        let actual = format!("{:016x}", file_checksum(&path)?);
        if actual != self.checksum {
            return Err(Error::ChecksumMismatch(path));
        }
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    /// `d×n` feature matrix.
    pub features: FileRef,
    /// `n×1` class labels stored as floats.
    pub labels: FileRef,
    /// `n×K×C` soft-label tensor; absent for evaluation splits.
    pub soft_labels: Option<FileRef>,
    pub num_classes: usize,
    pub sample_ids: Vec<u64>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub features: FeatureSet,
    pub soft_labels: Option<SoftLabelStack>,
}

/// Writes features, labels and optional soft labels into `dir` together
/// with `manifest.json`.
pub fn save_dataset(
    dir: &Path,
    features: &FeatureSet,
    soft_labels: Option<&SoftLabelStack>,
    provenance: &str,
) -> Result<DatasetManifest> {
    if let Some(stack) = soft_labels {
        if stack.num_samples() != features.len() || stack.num_classes() != features.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: stack.num_samples(),
            });
        }
    }
    fs::create_dir_all(dir)?;
    let feat = save_matrix(&dir.join(FEATURES_FILE), features.features(), Dtype::F64)?;
    let labels: Vec<f64> = features.labels().iter().map(|&l| l as f64).collect();
    let lab = save_matrix(
        &dir.join(LABELS_FILE),
        &DenseMatrix::from_vec(labels.len(), 1, labels)?,
        Dtype::F64,
    )?;
    let soft = soft_labels
        .map(|s| {
            save_tensor(
                &dir.join(SOFT_LABELS_FILE),
                &[s.num_samples(), s.num_augs(), s.num_classes()],
                s.as_slice(),
                Dtype::F64,
            )
            .map(|c| FileRef::new(SOFT_LABELS_FILE, c))
        })
        .transpose()?;
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        features: FileRef::new(FEATURES_FILE, feat),
        labels: FileRef::new(LABELS_FILE, lab),
        soft_labels: soft,
        num_classes: features.num_classes(),
        sample_ids: features.sample_ids().to_vec(),
        provenance: provenance.to_string(),
    };
    write_canonical_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub(crate) fn read_manifest<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))
}

/// Loads a dataset from its manifest (a file, or a directory holding
/// `manifest.json`), verifying every checksum.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest_path = if manifest_path.is_dir() {
        manifest_path.join(MANIFEST_FILE)
    } else {
        manifest_path.to_path_buf()
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest: DatasetManifest = read_manifest(&manifest_path)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "dataset schema version {} (expected {DATASET_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let features = load_tensor(&manifest.features.verify(base)?)?.into_matrix()?;
    let n = manifest.sample_ids.len();
    if features.cols() != n {
        return Err(Error::SchemaMismatch(format!(
            "features hold {} samples, manifest lists {n}",
            features.cols()
        )));
    }
    let raw = load_tensor(&manifest.labels.verify(base)?)?.into_matrix()?;
    if raw.shape() != (n, 1) {
        return Err(Error::SchemaMismatch(format!(
            "labels have shape {:?}, expected ({n}, 1)",
            raw.shape()
        )));
    }
    let labels = raw
        .as_slice()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < manifest.num_classes as f64 {
                Ok(v as usize)
            } else {
                Err(Error::SchemaMismatch(format!("invalid class label {v}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let features = FeatureSet::new(features, labels, manifest.sample_ids.clone(), manifest.num_classes)?;
    let soft_labels = match &manifest.soft_labels {
        None => None,
        Some(r) => {
            let t = load_tensor(&r.verify(base)?)?;
            let dims = t.dims();
            if dims.len() != 3 || dims[0] != n || dims[2] != manifest.num_classes {
                return Err(Error::SchemaMismatch(format!("soft labels have dims {dims:?}")));
            }
            Some(SoftLabelStack::new(dims[0], dims[1], dims[2], t.data)?)
        }
    };
    Ok(Dataset {
        manifest,
        features,
        soft_labels,
    })
}
