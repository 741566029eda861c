use crate::error::{EmomaError, Result};
use crate::hash::{Mode, MAX_BLOCK_BITS, MAX_K};
use crate::stash::DEFAULT_STASH_CAPACITY;
use crate::store::CELLS_PER_BUCKET;

/// Tunables for one dictionary instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmomaConfig {
    pub mode: Mode,
    /// Total bucket count across both subtables; a power of two.
    pub total_buckets: usize,
    pub cells_per_bucket: usize,
    /// Bit selection functions per key in the filter.
    pub k: usize,
    /// Probability of picking a victim among the cheapest to move.
    pub p: f64,
    /// Maximum placement iterations per insertion.
    pub t: usize,
    /// On-chip filter bits per table cell.
    pub bpe: usize,
    pub stash_capacity: usize,
    pub seed: u64,
}

impl EmomaConfig {
    /// Defaults for the given layout: k = 3 for a single table, 4 for two.
    pub fn new(mode: Mode, total_buckets: usize) -> Self {
        EmomaConfig {
            mode,
            total_buckets,
            cells_per_bucket: CELLS_PER_BUCKET,
            k: match mode {
                Mode::Single => 3,
                Mode::Double => 4,
            },
            p: 0.99,
            t: 100,
            bpe: 4,
            stash_capacity: DEFAULT_STASH_CAPACITY,
            seed: 0,
        }
    }

    pub fn single(total_buckets: usize) -> Self {
        Self::new(Mode::Single, total_buckets)
    }

    pub fn double(total_buckets: usize) -> Self {
        Self::new(Mode::Double, total_buckets)
    }

    /// Sized by element capacity instead of bucket count.
    pub fn with_capacity(mode: Mode, capacity: usize) -> Self {
        Self::new(mode, capacity / CELLS_PER_BUCKET)
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn capacity(&self) -> usize {
        self.total_buckets * self.cells_per_bucket
    }

    /// Number of filter blocks: one per bucket reachable through `h1`.
    pub fn num_blocks(&self) -> usize {
        match self.mode {
            Mode::Single => self.total_buckets,
            Mode::Double => self.total_buckets / 2,
        }
    }

    /// Filter block width, chosen so the whole bit array holds `bpe` bits
    /// per table cell.
    pub fn block_bits(&self) -> usize {
        self.bpe * self.cells_per_bucket * self.total_buckets / self.num_blocks().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(EmomaError::InvalidConfig(m));
        if !self.total_buckets.is_power_of_two() {
            return fail(format!(
                "total_buckets {} is not a power of two",
                self.total_buckets
            ));
        }
        if self.mode == Mode::Double && self.total_buckets < 2 {
            return fail("double mode needs at least two buckets".into());
        }
        if self.cells_per_bucket != CELLS_PER_BUCKET {
            return fail(format!("buckets hold exactly {CELLS_PER_BUCKET} cells"));
        }
        if self.k == 0 || self.k > MAX_K {
            return fail(format!("k must be in 1..={MAX_K}"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return fail(format!("p = {} is not a probability", self.p));
        }
        if self.t == 0 {
            return fail("t must be at least 1".into());
        }
        let bits = self.block_bits();
        if bits == 0 || bits > MAX_BLOCK_BITS {
            return fail(format!(
                "bpe {} gives {bits}-bit blocks; blocks must be 1..={MAX_BLOCK_BITS} bits",
                self.bpe
            ));
        }
        if self.stash_capacity == 0 {
            return fail("stash capacity must be positive".into());
        }
        Ok(())
    }
}
