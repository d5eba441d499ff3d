//! Storage accounting for compressed label blocks.
//!
//! For one `K×C` block at `b` bytes per scalar:
//!
//! | representation               | stored bytes                       |
//! |------------------------------|------------------------------------|
//! | dense original               | `K·C·b`                            |
//! | rank-`r` SVD / RSVD factors  | `r·(K + C + 1)·b`                  |
//! | CUR, `c` columns, `s` rows   | `(K·c + c·s + s·C)·b`              |
//! | RPCA: rank-`r` L, `t` spikes | `r·(K + C + 1)·b + t·(8 + b)`      |
//!
//! A sparse triplet stores its row and column as two `u32` plus one scalar.

use crate::error::{Error, Result};

pub const TRIPLET_INDEX_BYTES: u64 = 8;

pub fn check_bytes_per_scalar(bytes: u8) -> Result<()> {
    if bytes == 4 || bytes == 8 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "bytes per scalar must be 4 or 8, got {bytes}"
        )))
    }
}

pub fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 1.0 && ratio.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "compression ratio must exceed 1, got {ratio}"
        )))
    }
}

pub fn dense_bytes(rows: usize, cols: usize, bytes: u8) -> u64 {
    (rows * cols) as u64 * bytes as u64
}

pub fn low_rank_bytes(rows: usize, cols: usize, rank: usize, bytes: u8) -> u64 {
    (rank * (rows + cols + 1)) as u64 * bytes as u64
}

pub fn cur_bytes(rows: usize, cols: usize, num_cols: usize, num_rows: usize, bytes: u8) -> u64 {
    (rows * num_cols + num_cols * num_rows + num_rows * cols) as u64 * bytes as u64
}

pub fn triplet_bytes(count: usize, bytes: u8) -> u64 {
    count as u64 * (TRIPLET_INDEX_BYTES + bytes as u64)
}

/// `stored·ratio ≤ original`.
pub fn within_ratio(stored: u64, original: u64, ratio: f64) -> bool {
    stored as f64 * ratio <= original as f64
}

/// Largest `n` for which `fits(n)` holds, starting from an estimate.
fn largest_fitting(estimate: f64, fits: impl Fn(usize) -> bool) -> usize {
    let mut n = if estimate.is_finite() && estimate > 0.0 {
        estimate.floor() as usize
    } else {
        0
    };
    while n > 0 && !fits(n) {
        n -= 1;
    }
    while fits(n + 1) {
        n += 1;
    }
    n
}

/// Largest rank `r ≥ 1` whose SVD-family factors fit in `K·C·b/ratio` bytes.
pub fn plan_rank_for_ratio(rows: usize, cols: usize, ratio: f64, bytes: u8) -> Result<usize> {
    check_ratio(ratio)?;
    check_bytes_per_scalar(bytes)?;
    let original = dense_bytes(rows, cols, bytes);
    let max = rows.min(cols);
    let estimate = (rows * cols) as f64 / (ratio * (rows + cols + 1) as f64);
    let r = largest_fitting(estimate, |r| {
        r <= max && within_ratio(low_rank_bytes(rows, cols, r, bytes), original, ratio)
    });
    if r == 0 {
        return Err(Error::RatioInfeasible { rows, cols, ratio });
    }
    Ok(r)
}

/// Largest square CUR size `c = s ≥ 1` that fits the same budget.
pub fn plan_cur_for_ratio(rows: usize, cols: usize, ratio: f64, bytes: u8) -> Result<usize> {
    check_ratio(ratio)?;
    check_bytes_per_scalar(bytes)?;
    let original = dense_bytes(rows, cols, bytes);
    let max = rows.min(cols);
    let estimate = (rows * cols) as f64 / (ratio * (rows + cols) as f64);
    let s = largest_fitting(estimate, |s| {
        s <= max && within_ratio(cur_bytes(rows, cols, s, s, bytes), original, ratio)
    });
    if s == 0 {
        return Err(Error::RatioInfeasible { rows, cols, ratio });
    }
    Ok(s)
}

/// RPCA budget split: rank of the low-rank part and the number of sparse
/// triplets that can be kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RpcaPlan {
    pub rank: usize,
    pub max_triplets: usize,
}

/// `low_rank_share` of the byte budget goes to the low-rank factors (at least
/// rank 1), the remainder to sparse triplets.
pub fn plan_rpca_for_ratio(rows: usize, cols: usize, ratio: f64, bytes: u8, low_rank_share: f64) -> Result<RpcaPlan> {
    check_ratio(ratio)?;
    check_bytes_per_scalar(bytes)?;
    if !(low_rank_share > 0.0 && low_rank_share <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "low-rank share must be in (0, 1], got {low_rank_share}"
        )));
    }
    let original = dense_bytes(rows, cols, bytes);
    let max = rows.min(cols);
    let budget = original as f64 / ratio;
    let per_rank = low_rank_bytes(rows, cols, 1, bytes) as f64;
    let share = budget * low_rank_share;
    let rank = largest_fitting(share / per_rank, |r| {
        r <= max && low_rank_bytes(rows, cols, r, bytes) as f64 <= share
    })
    .max(1);
    let base = low_rank_bytes(rows, cols, rank, bytes);
    if !within_ratio(base, original, ratio) {
        return Err(Error::RatioInfeasible { rows, cols, ratio });
    }
    let per_triplet = triplet_bytes(1, bytes) as f64;
    let max_triplets = largest_fitting((budget - base as f64) / per_triplet, |t| {
        within_ratio(base + triplet_bytes(t, bytes), original, ratio)
    });
    Ok(RpcaPlan { rank, max_triplets })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planner_values() {
        assert_eq!(plan_rank_for_ratio(300, 1000, 10.0, 8).unwrap(), 23);
        assert_eq!(plan_rank_for_ratio(300, 1000, 30.0, 8).unwrap(), 7);
        assert_eq!(plan_rank_for_ratio(300, 1000, 20.0, 4).unwrap(), 11);
        assert!(matches!(
            plan_rank_for_ratio(4, 4, 30.0, 8),
            Err(Error::RatioInfeasible { .. })
        ));
    }

    #[test]
    fn planner_rejects_bad_inputs() {
        assert!(plan_rank_for_ratio(300, 1000, 1.0, 8).is_err());
        assert!(plan_rank_for_ratio(300, 1000, 10.0, 2).is_err());
    }

    #[test]
    fn cur_plan_fits() {
        let s = plan_cur_for_ratio(300, 1000, 10.0, 8).unwrap();
        assert_eq!(s, 22);
        assert!(within_ratio(
            cur_bytes(300, 1000, s, s, 8),
            dense_bytes(300, 1000, 8),
            10.0
        ));
        assert!(!within_ratio(
            cur_bytes(300, 1000, s + 1, s + 1, 8),
            dense_bytes(300, 1000, 8),
            10.0
        ));
    }

    #[test]
    fn rpca_plan_fits() {
        let p = plan_rpca_for_ratio(300, 1000, 10.0, 8, 0.8).unwrap();
        assert_eq!(p.rank, 18);
        let stored = low_rank_bytes(300, 1000, p.rank, 8) + triplet_bytes(p.max_triplets, 8);
        assert!(within_ratio(stored, dense_bytes(300, 1000, 8), 10.0));
        let over = stored + triplet_bytes(1, 8);
        assert!(!within_ratio(over, dense_bytes(300, 1000, 8), 10.0));
    }
}
