use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{read_manifest, FileRef, MANIFEST_FILE};
use super::{fnv1a, load_tensor, put_scalar, save_tensor, write_canonical_json, DatasetManifest, Dtype, Reader};
use crate::error::{Error, Result};
use crate::label_compress::{CompressedLabels, CompressionMethod, LowRankFactors, SampleFactors, SparseEntry};
use crate::matrix::DenseMatrix;
use crate::selector::{SelectionConfig, SelectionResult, SoftLabelStack};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
pub const FACTORS_MAGIC: &[u8; 4] = b"SCRC";
pub const FACTORS_VERSION: u16 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const SELECTION_FILE: &str = "selection.json";
const LABELS_FILE: &str = "labels.bin";
const FACTORS_FILE: &str = "factors.bin";

/// A condensed dataset: which real samples were kept, their soft labels and,
/// once compressed, the label factors.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedArtifact {
    /// Source dataset manifest, as referenced by the caller.
    pub dataset: FileRef,
    pub selection: SelectionResult,
    /// Soft labels of the selected samples, in pick order.
    pub labels: SoftLabelStack,
    pub compressed: Option<CompressedLabels>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub dataset: FileRef,
    pub selection: FileRef,
    pub labels: FileRef,
    pub factors: Option<FileRef>,
    pub method: Option<CompressionMethod>,
    pub total_selected: usize,
    pub num_augs: usize,
    pub num_classes: usize,
    pub config: SelectionConfig,
}

impl CondensedArtifact {
    /// Fails unless every selected id appears in the source dataset.
    pub fn check_against(&self, dataset: &DatasetManifest) -> Result<()> {
        let known: HashSet<u64> = dataset.sample_ids.iter().copied().collect();
        match self.selection.order.iter().find(|id| !known.contains(id)) {
            Some(id) => Err(Error::SchemaMismatch(format!("selected id {id} not in dataset"))),
            None => Ok(()),
        }
    }

    fn check_consistency(&self) -> Result<()> {
        let total = self.selection.total_selected();
        if self.labels.num_samples() != total {
            return Err(Error::SchemaMismatch(format!(
                "label container holds {} samples, {total} selected",
                self.labels.num_samples()
            )));
        }
        if let Some(c) = &self.compressed {
            if c.num_samples != total
                || c.num_augs != self.labels.num_augs()
                || c.num_classes != self.labels.num_classes()
            {
                return Err(Error::SchemaMismatch(format!(
                    "factor container is {}x{}x{}, labels are {}x{}x{}",
                    c.num_samples,
                    c.num_augs,
                    c.num_classes,
                    total,
                    self.labels.num_augs(),
                    self.labels.num_classes()
                )));
            }
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::MalformedFactors(format!("count {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix, dtype: Dtype) {
    m.as_slice().iter().for_each(|&v| put_scalar(out, v, dtype));
}

fn put_low_rank(out: &mut Vec<u8>, f: &LowRankFactors, dtype: Dtype) -> Result<()> {
    put_u32(out, f.rank())?;
    f.sigma.iter().for_each(|&v| put_scalar(out, v, dtype));
    put_matrix(out, &f.u, dtype);
    put_matrix(out, &f.v, dtype);
    Ok(())
}

/// Serializes a factor container to the `SCRC` layout.
pub fn encode_factors(c: &CompressedLabels) -> Result<Vec<u8>> {
    let dtype = Dtype::from_size(c.bytes_per_scalar)?;
    if c.samples.len() != c.num_samples {
        return Err(Error::MalformedFactors(format!(
            "{} factor sets for {} samples",
            c.samples.len(),
            c.num_samples
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(FACTORS_MAGIC);
    out.extend_from_slice(&FACTORS_VERSION.to_le_bytes());
    out.push(c.method.code());
    out.push(c.bytes_per_scalar);
    for v in [
        c.num_samples as u64,
        c.num_augs as u64,
        c.num_classes as u64,
        c.original_bytes,
        c.stored_bytes,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &c.samples {
        match (c.method, s) {
            (CompressionMethod::Svd | CompressionMethod::Rsvd, SampleFactors::LowRank(f)) => {
                put_low_rank(&mut out, f, dtype)?
            }
            (CompressionMethod::Cur, SampleFactors::Cur { c_block, core, r_block }) => {
                put_u32(&mut out, c_block.cols())?;
                put_u32(&mut out, r_block.rows())?;
                put_matrix(&mut out, c_block, dtype);
                put_matrix(&mut out, core, dtype);
                put_matrix(&mut out, r_block, dtype);
            }
            (CompressionMethod::Rpca, SampleFactors::Rpca { low_rank, sparse }) => {
                put_low_rank(&mut out, low_rank, dtype)?;
                put_u32(&mut out, sparse.len())?;
                for e in sparse {
                    out.extend_from_slice(&e.row.to_le_bytes());
                    out.extend_from_slice(&e.col.to_le_bytes());
                    put_scalar(&mut out, e.value, dtype);
                }
            }
            _ => {
                return Err(Error::MalformedFactors(format!(
                    "factor kind does not match method {}",
                    c.method
                )))
            }
        }
    }
    Ok(out)
}

fn read_matrix(r: &mut Reader, rows: usize, cols: usize, dtype: Dtype) -> Result<DenseMatrix> {
    DenseMatrix::from_vec(rows, cols, r.scalars(rows * cols, dtype)?)
}

fn read_low_rank(r: &mut Reader, rows: usize, cols: usize, dtype: Dtype) -> Result<LowRankFactors> {
    let rank = r.u32()? as usize;
    if rank > rows.min(cols) {
        return Err(Error::MalformedFactors(format!("rank {rank} exceeds block size")));
    }
    let sigma = r.scalars(rank, dtype)?;
    Ok(LowRankFactors {
        sigma,
        u: read_matrix(r, rows, rank, dtype)?,
        v: read_matrix(r, cols, rank, dtype)?,
    })
}

pub fn decode_factors(bytes: &[u8], path: &Path) -> Result<CompressedLabels> {
    let mut r = Reader::new(bytes);
    if r.take(4).ok() != Some(&FACTORS_MAGIC[..]) {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let version = r.u16()?;
    if version != FACTORS_VERSION {
        return Err(Error::BadVersion(version));
    }
    let code = r.u8()?;
    let method = CompressionMethod::from_code(code)
        .ok_or_else(|| Error::MalformedFactors(format!("unknown method code {code}")))?;
    let bytes_per_scalar = r.u8()?;
    let dtype = Dtype::from_size(bytes_per_scalar).map_err(|_| Error::BadDtype(bytes_per_scalar))?;
    let num_samples = r.u64()? as usize;
    let (k, c) = (r.u64()? as usize, r.u64()? as usize);
    let original_bytes = r.u64()?;
    let stored_bytes = r.u64()?;
    let mut samples = Vec::new();
    for _ in 0..num_samples {
        let s = match method {
            CompressionMethod::Svd | CompressionMethod::Rsvd => {
                SampleFactors::LowRank(read_low_rank(&mut r, k, c, dtype)?)
            }
            CompressionMethod::Cur => {
                let (nc, nr) = (r.u32()? as usize, r.u32()? as usize);
                if nc > c || nr > k {
                    return Err(Error::MalformedFactors(format!("cur sizes {nc}, {nr} exceed block")));
                }
                SampleFactors::Cur {
                    c_block: read_matrix(&mut r, k, nc, dtype)?,
                    core: read_matrix(&mut r, nc, nr, dtype)?,
                    r_block: read_matrix(&mut r, nr, c, dtype)?,
                }
            }
            CompressionMethod::Rpca => {
                let low_rank = read_low_rank(&mut r, k, c, dtype)?;
                let t = r.u32()? as usize;
                let mut sparse = Vec::new();
                for _ in 0..t {
                    let (row, col) = (r.u32()?, r.u32()?);
                    if row as usize >= k || col as usize >= c {
                        return Err(Error::MalformedFactors(format!(
                            "sparse entry ({row}, {col}) out of range"
                        )));
                    }
                    sparse.push(SparseEntry {
                        row,
                        col,
                        value: r.scalar(dtype)?,
                    });
                }
                SampleFactors::Rpca { low_rank, sparse }
            }
        };
        samples.push(s);
    }
    r.finish()?;
    let out = CompressedLabels {
        method,
        num_samples,
        num_augs: k,
        num_classes: c,
        bytes_per_scalar,
        samples,
        stored_bytes,
        original_bytes,
        rpca_diagnostics: Vec::new(),
    };
    if out.recount_bytes() != stored_bytes {
        return Err(Error::MalformedFactors(format!(
            "header claims {stored_bytes} stored bytes, factors hold {}",
            out.recount_bytes()
        )));
    }
    Ok(out)
}

/// Writes `manifest.json`, `selection.json`, `labels.bin` and, when labels
/// are compressed, `factors.bin` into `dir`.
pub fn save_artifact(a: &CondensedArtifact, dir: &Path) -> Result<ArtifactManifest> {
    a.check_consistency()?;
    fs::create_dir_all(dir)?;
    let selection = write_canonical_json(&dir.join(SELECTION_FILE), &a.selection)?;
    let l = &a.labels;
    let labels = save_tensor(
        &dir.join(LABELS_FILE),
        &[l.num_samples(), l.num_augs(), l.num_classes()],
        l.as_slice(),
        Dtype::F64,
    )?;
    let factors_path = dir.join(FACTORS_FILE);
    let factors = match &a.compressed {
        Some(c) => {
            let bytes = encode_factors(c)?;
            fs::write(&factors_path, &bytes)?;
            Some(FileRef::new(FACTORS_FILE, fnv1a(&bytes)))
        }
        None => {
            if factors_path.exists() {
                fs::remove_file(&factors_path)?;
            }
            None
        }
    };
    let manifest = ArtifactManifest {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        tool_version: a.tool_version.clone(),
        dataset: a.dataset.clone(),
        selection: FileRef::new(SELECTION_FILE, selection),
        labels: FileRef::new(LABELS_FILE, labels),
        factors,
        method: a.compressed.as_ref().map(|c| c.method),
        total_selected: a.selection.total_selected(),
        num_augs: l.num_augs(),
        num_classes: l.num_classes(),
        config: a.selection.config.clone(),
    };
    write_canonical_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_artifact(dir: &Path) -> Result<CondensedArtifact> {
    let manifest: ArtifactManifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    if manifest.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "artifact schema version {} (expected {ARTIFACT_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let selection: SelectionResult = read_manifest(&manifest.selection.verify(dir)?)?;
    if selection.config != manifest.config {
        return Err(Error::SchemaMismatch(
            "selection config differs from manifest echo".into(),
        ));
    }
    let t = load_tensor(&manifest.labels.verify(dir)?)?;
    let dims = t.dims();
    if dims.len() != 3 || dims[1] != manifest.num_augs || dims[2] != manifest.num_classes {
        return Err(Error::SchemaMismatch(format!("labels have dims {dims:?}")));
    }
    let labels = SoftLabelStack::new(dims[0], dims[1], dims[2], t.data)?;
    let compressed = match &manifest.factors {
        Some(f) => {
            let path = f.verify(dir)?;
            let c = decode_factors(&fs::read(&path)?, &path)?;
            if Some(c.method) != manifest.method {
                return Err(Error::SchemaMismatch("factor method differs from manifest".into()));
            }
            Some(c)
        }
        None => None,
    };
    let artifact = CondensedArtifact {
        dataset: manifest.dataset,
        selection,
        labels,
        compressed,
        tool_version: manifest.tool_version,
    };
    if artifact.selection.total_selected() != manifest.total_selected {
        return Err(Error::SchemaMismatch("selected count differs from manifest".into()));
    }
    artifact.check_consistency()?;
    Ok(artifact)
}
