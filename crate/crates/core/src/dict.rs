//! Behaviour shared by the one-access dictionary and the cuckoo baseline.

use crate::error::Result;
use crate::store::{AccessStats, Location};
use crate::{Key, Value};

/// Result of one insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InsertOutcome {
    /// The new key went straight into an empty cell on the first iteration.
    pub placed_immediately: bool,
    pub iterations_used: usize,
    /// Stash size when the insertion returned.
    pub stash_residue_after: usize,
    /// The stash overflowed; the dictionary no longer accepts insertions.
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub occupied: usize,
    pub capacity: usize,
    pub load_factor: f64,
    pub stash_len: usize,
    pub stash_watermark: usize,
    /// Table-resident elements stored at their first bucket.
    pub via_h1: usize,
    pub via_h2: usize,
    pub cbbf_max_counter: u32,
    pub access: AccessStats,
}

impl Metrics {
    pub fn h1_fraction(&self) -> f64 {
        if self.occupied == 0 {
            0.0
        } else {
            self.via_h1 as f64 / self.occupied as f64
        }
    }

    pub fn h2_fraction(&self) -> f64 {
        if self.occupied == 0 {
            0.0
        } else {
            self.via_h2 as f64 / self.occupied as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Stored at its first bucket but the filter answers positive.
    H1PlacedButPositive(Key),
    /// Stored at its second bucket but the filter answers negative.
    H2PlacedButNegative(Key),
    IllegalLocation {
        key: Key,
        location: Location,
    },
    /// Filter state differs from one rebuilt from the second-bucket residents.
    FilterMismatch,
    DuplicateKey(Key),
    OccupancyMismatch {
        tracked: usize,
        scanned: usize,
    },
    RecordedMismatch {
        tracked: usize,
        scanned: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub trait Dictionary {
    fn insert(&mut self, key: Key, value: Value) -> Result<InsertOutcome>;

    fn search(&self, key: Key) -> Option<Value>;

    fn remove(&mut self, key: Key) -> bool;

    fn metrics(&self) -> Metrics;

    fn verify_invariants(&self) -> InvariantReport;

    fn access_stats(&self) -> AccessStats;

    /// Elements held in the table, stash excluded.
    fn table_len(&self) -> usize;

    fn capacity(&self) -> usize;

    fn stash_len(&self) -> usize;

    fn stash_watermark(&self) -> usize;

    fn reset_stash_watermark(&mut self);

    fn is_failed(&self) -> bool;

    /// Changes the iteration budget for later insertions.
    fn set_max_iterations(&mut self, t: usize);

    fn len(&self) -> usize {
        self.table_len() + self.stash_len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
