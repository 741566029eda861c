//! Standard two-choice cuckoo dictionary used as the reference point in
//! experiments. Same store and stash, no filter: a search reads `h1(x)` and,
//! on a miss, `h2(x)`.

use std::collections::HashSet;

use arrayvec::ArrayVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::EmomaConfig;
use crate::dict::{Dictionary, InsertOutcome, InvariantReport, Metrics, Violation};
use crate::error::{EmomaError, Result};
use crate::hash::{splitmix64, HasherSet};
use crate::stash::Stash;
use crate::store::{AccessStats, CuckooStore, Entry, Location, Side, CELLS_PER_BUCKET};
use crate::{Key, Value};

const RNG_TAG: u64 = 0xba5e;

#[derive(Debug, Clone)]
pub struct CuckooBaseline {
    config: EmomaConfig,
    hashers: HasherSet,
    store: CuckooStore,
    stash: Stash,
    rng: ChaCha8Rng,
    poisoned: bool,
}

impl CuckooBaseline {
    /// Uses the layout, `t`, stash capacity and seed of `config`; the filter
    /// parameters are ignored.
    pub fn new(config: EmomaConfig) -> Result<Self> {
        config.validate()?;
        Ok(CuckooBaseline {
            hashers: HasherSet::new(config.seed, config.mode, config.total_buckets, 1, 1)?,
            store: CuckooStore::new(config.mode, config.total_buckets)?,
            stash: Stash::new(config.stash_capacity),
            rng: ChaCha8Rng::seed_from_u64(splitmix64(config.seed, RNG_TAG)),
            config,
            poisoned: false,
        })
    }

    pub fn store(&self) -> &CuckooStore {
        &self.store
    }

    pub fn stash(&self) -> &Stash {
        &self.stash
    }

    fn locations(&self, key: Key) -> (Location, Location, bool) {
        let (h1, h2) = self.hashers.bucket_hashes(key);
        let a = Location::new(Side::First, h1);
        let b = Location::new(Side::Second, h2);
        let same = self.store.physical(a).ok() == self.store.physical(b).ok();
        (a, b, same)
    }

    fn find(&self, key: Key) -> Option<(Location, usize, Value)> {
        let (a, b, same) = self.locations(key);
        let first = self.store.read_bucket(a).expect("hash in range");
        if let Some((cell, v)) = first.find(key) {
            return Some((a, cell, v));
        }
        if same {
            return None;
        }
        let second = self.store.read_bucket(b).expect("hash in range");
        second.find(key).map(|(cell, v)| (b, cell, v))
    }

    pub fn search(&self, key: Key) -> Option<Value> {
        if let Some(v) = self.stash.lookup(key) {
            return Some(v);
        }
        self.find(key).map(|(_, _, v)| v)
    }

    fn place(&mut self, e: Entry) -> Result<bool> {
        let (a, b, same) = self.locations(e.key);
        let first = self.store.read_bucket(a)?;
        let second = if same {
            first
        } else {
            self.store.read_bucket(b)?
        };

        let mut empties: ArrayVec<(Location, usize), { 2 * CELLS_PER_BUCKET }> =
            first.empty_cells().map(|c| (a, c)).collect();
        if !same {
            empties.extend(second.empty_cells().map(|c| (b, c)));
        }
        if !empties.is_empty() {
            let (loc, cell) = empties[self.rng.gen_range(0..empties.len())];
            self.store.write_cell(loc, cell, Some(e))?;
            return Ok(false);
        }

        let use_first = same || self.rng.gen_bool(0.5);
        let (loc, bucket) = if use_first { (a, first) } else { (b, second) };
        let cell = self.rng.gen_range(0..CELLS_PER_BUCKET);
        let victim = bucket.cells[cell].expect("full bucket");
        self.store.write_cell(loc, cell, Some(e))?;
        self.stash.put(victim.key, victim.value)?;
        Ok(true)
    }

    pub fn insert(&mut self, key: Key, value: Value) -> Result<InsertOutcome> {
        if self.poisoned {
            return Err(EmomaError::Poisoned);
        }
        if self.search(key).is_some() {
            return Err(EmomaError::DuplicateKey(key));
        }
        let mut outcome = InsertOutcome::default();
        if self.stash.put(key, value).is_err() {
            return Ok(self.fail(outcome));
        }
        let mut next = self.stash.take(key);
        while let Some(entry) = next {
            let placed = self.place(entry);
            outcome.iterations_used += 1;
            match placed {
                Ok(displaced) => {
                    if outcome.iterations_used == 1 {
                        outcome.placed_immediately = !displaced;
                    }
                }
                Err(EmomaError::StashOverflow { .. }) => return Ok(self.fail(outcome)),
                Err(other) => return Err(other),
            }
            if outcome.iterations_used >= self.config.t {
                break;
            }
            next = self.stash.take_random(&mut self.rng);
        }
        outcome.stash_residue_after = self.stash.len();
        Ok(outcome)
    }

    fn fail(&mut self, mut outcome: InsertOutcome) -> InsertOutcome {
        self.poisoned = true;
        outcome.failed = true;
        outcome.stash_residue_after = self.stash.len();
        outcome
    }

    pub fn remove(&mut self, key: Key) -> bool {
        if self.stash.remove(key) {
            return true;
        }
        match self.find(key) {
            Some((loc, cell, _)) => {
                self.store
                    .write_cell(loc, cell, None)
                    .expect("cell in range");
                true
            }
            None => false,
        }
    }

    pub fn reset_access_stats(&mut self) {
        self.store.reset_access_stats();
    }
}

impl Dictionary for CuckooBaseline {
    fn insert(&mut self, key: Key, value: Value) -> Result<InsertOutcome> {
        CuckooBaseline::insert(self, key, value)
    }

    fn search(&self, key: Key) -> Option<Value> {
        CuckooBaseline::search(self, key)
    }

    fn remove(&mut self, key: Key) -> bool {
        CuckooBaseline::remove(self, key)
    }

    /// Placement split is not tracked for the baseline; everything in the
    /// table is reported under `via_h1`.
    fn metrics(&self) -> Metrics {
        let occupied = self.store.occupied();
        Metrics {
            occupied,
            capacity: self.store.capacity(),
            load_factor: occupied as f64 / self.store.capacity() as f64,
            stash_len: self.stash.len(),
            stash_watermark: self.stash.watermark(),
            via_h1: occupied,
            via_h2: 0,
            cbbf_max_counter: 0,
            access: self.store.access_stats(),
        }
    }

    fn verify_invariants(&self) -> InvariantReport {
        let mut violations = Vec::new();
        let mut seen = HashSet::new();
        let mut scanned = 0;
        for loc in self.store.locations() {
            let bucket = self.store.read_bucket(loc).expect("location in range");
            for entry in bucket.cells.iter().flatten() {
                scanned += 1;
                if !seen.insert(entry.key) {
                    violations.push(Violation::DuplicateKey(entry.key));
                }
                let (a, b, _) = self.locations(entry.key);
                let here = self.store.physical(loc).ok();
                if here != self.store.physical(a).ok() && here != self.store.physical(b).ok() {
                    violations.push(Violation::IllegalLocation {
                        key: entry.key,
                        location: loc,
                    });
                }
            }
        }
        for entry in self.stash.iter() {
            if !seen.insert(entry.key) {
                violations.push(Violation::DuplicateKey(entry.key));
            }
        }
        if scanned != self.store.occupied() {
            violations.push(Violation::OccupancyMismatch {
                tracked: self.store.occupied(),
                scanned,
            });
        }
        InvariantReport { violations }
    }

    fn access_stats(&self) -> AccessStats {
        self.store.access_stats()
    }

    fn table_len(&self) -> usize {
        self.store.occupied()
    }

    fn capacity(&self) -> usize {
        self.store.capacity()
    }

    fn stash_len(&self) -> usize {
        self.stash.len()
    }

    fn stash_watermark(&self) -> usize {
        self.stash.watermark()
    }

    fn reset_stash_watermark(&mut self) {
        self.stash.reset_watermark();
    }

    fn is_failed(&self) -> bool {
        self.poisoned
    }

    fn set_max_iterations(&mut self, t: usize) {
        self.config.t = t;
    }
}
