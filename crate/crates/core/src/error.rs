use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cholesky factor is stale; call round_refresh first")]
    StaleFactorization,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("class {class} has {available} selectable samples, {required} required")]
    InsufficientSamples {
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular value decomposition failed")]
    SvdFailure,
    #[error("rank {rank} out of range (allowed 1..={max})")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("compression ratio {ratio} infeasible for {rows}x{cols} labels")]
    RatioInfeasible { rows: usize, cols: usize, ratio: f64 },
    #[error("malformed factors: {0}")]
    MalformedFactors(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("unsupported dtype code {0}")]
    BadDtype(u8),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(PathBuf),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
