//! Two-sample Wilcoxon rank-sum test.
//!
//! Ties get midranks. Midranks are kept doubled so they stay integers,
//! which makes the exact null distribution comparison exact too.

use alloc::vec::Vec;

use serde::Serialize;
use thiserror::Error;

use crate::mathfn::normal_sf;

/// Largest pooled sample size handled by full enumeration.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankSumError {
    #[error("E_EMPTY: both samples must be non-empty")]
    Empty,
    #[error("E_NOT_FINITE: samples must be finite")]
    NotFinite,
}

impl RankSumError {
    pub fn code(&self) -> &'static str {
        match self {
            RankSumError::Empty => "E_EMPTY",
            RankSumError::NotFinite => "E_NOT_FINITE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RankSumResult {
    /// Rank sum of the first sample.
    pub w: f64,
    pub p_two_sided: f64,
    pub exact: bool,
    pub n_a: usize,
    pub n_b: usize,
}

/// Doubled midranks of the pooled sample, in input order (a then b).
pub fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = alloc::vec![0u64; pooled.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        // 1-based positions i+1 ..= j+1, midrank doubled
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumResult, RankSumError> {
    if a.is_empty() || b.is_empty() {
        return Err(RankSumError::Empty);
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(RankSumError::NotFinite);
    }
    let (n, m) = (a.len(), b.len());
    let total = n + m;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let w2: u64 = ranks[..n].iter().sum();
    let w = w2 as f64 / 2.0;
    // twice the null mean
    let e2 = (n * (total + 1)) as i64;
    let p = if total <= EXACT_MAX_N {
        let observed = (w2 as i64 - e2).abs();
        let mut hits = 0u64;
        let mut count = 0u64;
        for mask in 0u32..(1u32 << total) {
            if mask.count_ones() as usize != n {
                continue;
            }
            let s: u64 = (0..total).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            count += 1;
            if (s as i64 - e2).abs() >= observed {
                hits += 1;
            }
        }
        hits as f64 / count as f64
    } else {
        let (nf, mf, tf) = (n as f64, m as f64, total as f64);
        let mut ties = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        for group in sorted.chunk_by(|x, y| x == y) {
            let t = group.len() as f64;
            ties += t * t * t - t;
        }
        let var = nf * mf / 12.0 * ((tf + 1.0) - ties / (tf * (tf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let mean = nf * (tf + 1.0) / 2.0;
            let z = ((w - mean).abs() - 0.5).max(0.0) / libm::sqrt(var);
            (2.0 * normal_sf(z)).min(1.0)
        }
    };
    Ok(RankSumResult { w, p_two_sided: p, exact: total <= EXACT_MAX_N, n_a: n, n_b: m })
}
