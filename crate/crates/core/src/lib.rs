//! Coding-rate subset selection and low-rank soft-label compression.
//!
//! Greedy selection scores each candidate by the gain in feature coding rate,
//! minus weighted class-conditional and soft-label coding rates. The chosen
//! samples' soft labels are then compressed per sample by one of several
//! low-rank methods under an explicit storage budget.

pub mod cli;
pub mod coding_rate;
pub mod dataio;
pub mod error;
pub mod label_compress;
pub mod matrix;
pub mod selector;
pub mod synthbench;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
