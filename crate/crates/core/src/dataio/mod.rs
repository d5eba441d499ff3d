//! On-disk formats: `SCRM` matrix files, canonical JSON sidecars, dataset
//! manifests and condensed-dataset artifact directories.
//!
//! All multi-byte values are little-endian and assembled byte by byte, so
//! files are portable across hosts. Layouts are described in `docs/FORMAT.md`.

mod artifact;
mod dataset;
mod json;

pub use artifact::{
    decode_factors, encode_factors, load_artifact, save_artifact, ArtifactManifest, CondensedArtifact,
    ARTIFACT_SCHEMA_VERSION, FACTORS_MAGIC, TOOL_VERSION,
};
pub use dataset::{load_dataset, save_dataset, Dataset, DatasetManifest, FileRef, DATASET_SCHEMA_VERSION};
pub use json::{canonical_json, to_canonical_json, write_canonical_json};

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"SCRM";
pub const MATRIX_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64 = 0,
    F32 = 1,
}

impl Dtype {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Self::F64),
            1 => Ok(Self::F32),
            other => Err(Error::BadDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::F64 => 8,
            Self::F32 => 4,
        }
    }

    /// Dtype with the given scalar width in bytes.
    pub fn from_size(bytes: u8) -> Result<Self> {
        match bytes {
            8 => Ok(Self::F64),
            4 => Ok(Self::F32),
            other => Err(Error::InvalidParams(format!(
                "bytes per scalar must be 4 or 8, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixHeader {
    pub version: u16,
    pub dtype: Dtype,
    pub dims: Vec<u64>,
}

impl MatrixHeader {
    pub fn len(&self) -> usize {
        self.dims.iter().product::<u64>() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A 2-d or 3-d row-major array as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub header: MatrixHeader,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn dims(&self) -> Vec<usize> {
        self.header.dims.iter().map(|&d| d as usize).collect()
    }

    pub fn into_matrix(self) -> Result<DenseMatrix> {
        match self.dims()[..] {
            [rows, cols] => DenseMatrix::from_vec(rows, cols, self.data),
            _ => Err(Error::SchemaMismatch(format!(
                "expected a 2-d matrix, got dims {:?}",
                self.header.dims
            ))),
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn file_checksum(path: &Path) -> Result<u64> {
    Ok(fnv1a(&fs::read(path)?))
}

pub(crate) fn put_scalar(out: &mut Vec<u8>, v: f64, dtype: Dtype) {
    match dtype {
        Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
    }
}

/// Bounds-checked little-endian reader.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::TruncatedPayload {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from(b[0]) | u16::from(b[1]) << 8)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(b.iter().rev().fold(0u32, |acc, &x| acc << 8 | u32::from(x)))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(b.iter().rev().fold(0u64, |acc, &x| acc << 8 | u64::from(x)))
    }

    pub(crate) fn scalar(&mut self, dtype: Dtype) -> Result<f64> {
        Ok(match dtype {
            Dtype::F64 => f64::from_bits(self.u64()?),
            Dtype::F32 => f32::from_bits(self.u32()?) as f64,
        })
    }

    pub(crate) fn scalars(&mut self, n: usize, dtype: Dtype) -> Result<Vec<f64>> {
        let need = n.checked_mul(dtype.size()).ok_or(Error::TruncatedPayload {
            expected: usize::MAX,
            found: self.bytes.len(),
        })?;
        if self.bytes.len() - self.pos < need {
            return Err(Error::TruncatedPayload {
                expected: self.pos + need,
                found: self.bytes.len(),
            });
        }
        (0..n).map(|_| self.scalar(dtype)).collect()
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )))
        }
    }
}

pub fn encode_tensor(dims: &[usize], data: &[f64], dtype: Dtype) -> Result<Vec<u8>> {
    if !(2..=3).contains(&dims.len()) {
        return Err(Error::InvalidParams(format!("ndim must be 2 or 3, got {}", dims.len())));
    }
    let n: usize = dims.iter().product();
    if n != data.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: data.len(),
        });
    }
    let mut out = Vec::with_capacity(8 + 8 * dims.len() + n * dtype.size());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        put_scalar(&mut out, v, dtype);
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    if r.take(4).ok() != Some(&MATRIX_MAGIC[..]) {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let version = r.u16()?;
    if version != MATRIX_VERSION {
        return Err(Error::BadVersion(version));
    }
    let dtype = Dtype::from_code(r.u8()?)?;
    let ndim = r.u8()?;
    if !(2..=3).contains(&ndim) {
        return Err(Error::SchemaMismatch(format!("ndim must be 2 or 3, got {ndim}")));
    }
    let dims = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let n = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= usize::MAX as u64)
        .ok_or_else(|| Error::SchemaMismatch(format!("dims {dims:?} overflow")))? as usize;
    let data = r.scalars(n, dtype)?;
    r.finish()?;
    Ok(Tensor {
        header: MatrixHeader { version, dtype, dims },
        data,
    })
}

/// Writes a 2-d or 3-d tensor and returns the FNV-1a checksum of the file.
pub fn save_tensor(path: &Path, dims: &[usize], data: &[f64], dtype: Dtype) -> Result<u64> {
    let bytes = encode_tensor(dims, data, dtype)?;
    fs::write(path, &bytes)?;
    Ok(fnv1a(&bytes))
}

pub fn save_matrix(path: &Path, m: &DenseMatrix, dtype: Dtype) -> Result<u64> {
    save_tensor(path, &[m.rows(), m.cols()], m.as_slice(), dtype)
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?, path)
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    load_tensor(path)?.into_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_tensor(&[1, 2], &[1.0, 2.0], Dtype::F32).unwrap();
        assert_eq!(&bytes[..4], b"SCRM");
        assert_eq!(&bytes[4..8], &[1, 0, 1, 2]);
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
        assert_eq!(bytes.len(), 8 + 16 + 8);
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
    }

    #[test]
    fn decode_rejects_bad_inputs() {
        let p = Path::new("x");
        let good = encode_tensor(&[2, 2], &[1.0; 4], Dtype::F64).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor(&bad, p), Err(Error::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_tensor(&bad, p), Err(Error::BadVersion(9))));
        let mut bad = good.clone();
        bad[6] = 7;
        assert!(matches!(decode_tensor(&bad, p), Err(Error::BadDtype(7))));
        assert!(matches!(
            decode_tensor(&good[..good.len() - 3], p),
            Err(Error::TruncatedPayload { .. })
        ));
        assert!(matches!(
            decode_tensor(&good[..10], p),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_tensor(&long, p), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn rejects_bad_ndim() {
        assert!(encode_tensor(&[4], &[0.0; 4], Dtype::F64).is_err());
        assert!(encode_tensor(&[2, 2], &[0.0; 3], Dtype::F64).is_err());
    }

    #[test]
    fn reader_is_little_endian() {
        let mut r = Reader::new(&[0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08]);
        assert_eq!(r.u64().unwrap(), 0x0807060504030201);
        let mut r = Reader::new(&[0x01, 0x02, 0x03, 0x04]);
        assert_eq!(r.u32().unwrap(), 0x04030201);
    }
}
