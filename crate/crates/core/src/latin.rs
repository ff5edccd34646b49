//! Latin squares and the per-block assignment ledger.
//!
//! A pool hands each starting participant the next row of the current
//! square. Rejected or timed-out rows go back to the head of the queue so
//! the next participant picks them up; when the queue runs dry a fresh,
//! independently relabeled square is appended.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub type Row = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("E_BAD_ORDER: a Latin square needs order >= 1")]
    BadOrder,
    #[error("E_DOUBLE_ASSIGN: participant `{0}` already holds or completed a row")]
    DoubleAssign(String),
    #[error("E_NOT_ASSIGNED: participant `{0}` holds no row")]
    NotAssigned(String),
    #[error("E_BAD_TIMEOUT: timeout must be positive")]
    BadTimeout,
}

impl PoolError {
    pub fn code(&self) -> &'static str {
        match self {
            PoolError::BadOrder => "E_BAD_ORDER",
            PoolError::DoubleAssign(_) => "E_DOUBLE_ASSIGN",
            PoolError::NotAssigned(_) => "E_NOT_ASSIGNED",
            PoolError::BadTimeout => "E_BAD_TIMEOUT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatinSquare {
    pub n: usize,
    pub rows: Vec<Row>,
}

impl LatinSquare {
    /// Row `i` is `[i, i+1, ..., i+n-1] mod n`.
    pub fn cyclic(n: usize) -> Result<Self, PoolError> {
        if n == 0 {
            return Err(PoolError::BadOrder);
        }
        let rows = (0..n).map(|i| (0..n).map(|j| (i + j) % n).collect()).collect();
        Ok(LatinSquare { n, rows })
    }

    /// Cyclic square with its rows, then its columns, reordered by two
    /// seeded permutations.
    pub fn build(n: usize, seed: u64) -> Result<Self, PoolError> {
        let base = Self::cyclic(n)?;
        let mut rng = seed::stream(seed);
        let row_perm = seed::permutation(&mut rng, n);
        let col_perm = seed::permutation(&mut rng, n);
        Ok(base.permuted(&row_perm, &col_perm))
    }

    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let rows = row_perm
            .iter()
            .map(|&r| col_perm.iter().map(|&c| self.rows[r][c]).collect())
            .collect();
        LatinSquare { n: self.n, rows }
    }

    pub fn is_latin(&self) -> bool {
        let n = self.n;
        if self.rows.len() != n || self.rows.iter().any(|r| r.len() != n) {
            return false;
        }
        for i in 0..n {
            let mut in_row = vec![false; n];
            let mut in_col = vec![false; n];
            for j in 0..n {
                let (r, c) = (self.rows[i][j], self.rows[j][i]);
                if r >= n || c >= n || in_row[r] || in_col[c] {
                    return false;
                }
                in_row[r] = true;
                in_col[c] = true;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Assignment {
    pub row: Row,
    pub assigned_at: u64,
    /// Monotone counter; orders assignments made in the same millisecond.
    pub serial: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rejection {
    pub participant_id: String,
    pub row: Row,
    pub reason: String,
}

pub const REASON_TIMEOUT: &str = "timeout";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatinPool {
    pub block_path: String,
    pub order: usize,
    pub queue: Vec<Row>,
    pub assigned: BTreeMap<String, Assignment>,
    pub completed: BTreeMap<String, Row>,
    pub rejected: Vec<Rejection>,
    pub seed: u64,
    pub squares_issued: u64,
    pub next_serial: u64,
}

impl LatinPool {
    /// New pool holding the first square's rows.
    pub fn new(block_path: impl Into<String>, order: usize, seed: u64) -> Result<Self, PoolError> {
        let mut pool = LatinPool {
            block_path: block_path.into(),
            order,
            queue: Vec::new(),
            assigned: BTreeMap::new(),
            completed: BTreeMap::new(),
            rejected: Vec::new(),
            seed,
            squares_issued: 0,
            next_serial: 0,
        };
        pool.replenish()?;
        Ok(pool)
    }

    fn square_seed(&self, k: u64) -> u64 {
        seed::derive_seed(self.seed, &self.block_path, k)
    }

    fn replenish(&mut self) -> Result<(), PoolError> {
        let square = LatinSquare::build(self.order, self.square_seed(self.squares_issued))?;
        self.queue.extend(square.rows);
        self.squares_issued += 1;
        Ok(())
    }

    pub fn assign(&mut self, participant: &str, now: u64) -> Result<Row, PoolError> {
        if self.assigned.contains_key(participant) || self.completed.contains_key(participant) {
            return Err(PoolError::DoubleAssign(participant.into()));
        }
        if self.queue.is_empty() {
            self.replenish()?;
        }
        let row = self.queue.remove(0);
        let serial = self.next_serial;
        self.next_serial += 1;
        self.assigned.insert(participant.into(), Assignment { row: row.clone(), assigned_at: now, serial });
        Ok(row)
    }

    pub fn complete(&mut self, participant: &str) -> Result<(), PoolError> {
        let a = self
            .assigned
            .remove(participant)
            .ok_or_else(|| PoolError::NotAssigned(participant.into()))?;
        self.completed.insert(participant.into(), a.row);
        Ok(())
    }

    pub fn reject(&mut self, participant: &str, reason: &str) -> Result<(), PoolError> {
        let a = self
            .assigned
            .remove(participant)
            .ok_or_else(|| PoolError::NotAssigned(participant.into()))?;
        self.queue.insert(0, a.row.clone());
        self.rejected.push(Rejection { participant_id: participant.into(), row: a.row, reason: reason.into() });
        Ok(())
    }

    /// Rejects every assignment strictly older than `timeout`; returns the
    /// reclaimed participants in assignment order.
    pub fn reclaim_expired(&mut self, now: u64, timeout: u64) -> Result<Vec<String>, PoolError> {
        if timeout == 0 {
            return Err(PoolError::BadTimeout);
        }
        let mut expired: Vec<(u64, u64, String)> = self
            .assigned
            .iter()
            .filter(|(_, a)| now.saturating_sub(a.assigned_at) > timeout)
            .map(|(p, a)| (a.assigned_at, a.serial, p.clone()))
            .collect();
        expired.sort();
        let ids: Vec<String> = expired.into_iter().map(|(_, _, p)| p).collect();
        for p in &ids {
            self.reject(p, REASON_TIMEOUT)?;
        }
        Ok(ids)
    }

    /// `counts[condition][position]` over completed rows.
    pub fn balance_report(&self) -> Vec<Vec<u64>> {
        balance_of(self.order, self.completed.values())
    }

    pub fn conserved(&self) -> bool {
        let rows = self.queue.len() + self.assigned.len() + self.completed.len();
        rows as u64 == self.squares_issued * self.order as u64
            && self.assigned.keys().all(|p| !self.completed.contains_key(p))
    }
}

/// Condition-by-position counts for a set of (possibly truncated) rows.
pub fn balance_of<'a>(n: usize, rows: impl IntoIterator<Item = &'a Row>) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; n]; n];
    for row in rows {
        for (pos, &cond) in row.iter().enumerate() {
            if cond < n && pos < n {
                counts[cond][pos] += 1;
            }
        }
    }
    counts
}
