//! The one-access dictionary.
//!
//! A key lives in bucket `h1(x)` or bucket `h2(x)`. The filter records the
//! keys living at `h2`, so a search asks the filter first and then reads
//! exactly one bucket. The filter has no false negatives. A key that the
//! filter would report as a false positive is forced into its `h2` bucket
//! and recorded there, which makes it a true positive. Searches are
//! therefore never misdirected. Because the filter block is picked by `h1`,
//! the only keys that a new filter entry can disturb sit in one known
//! bucket, and the insertion loop evicts them through the stash.
//!
//! A key evicted from its first bucket is on the move: when it is drawn
//! again and case 4 would send it straight back, it goes to its second
//! bucket instead and the keys it turns positive are evicted in turn. Without
//! this, a full first bucket whose residents would all disturb each other
//! traps any key that visits it, and the stash never drains.
//!
//! Random draws come from one seeded generator in a fixed order per
//! iteration: stash draw (from the second iteration on), the case 5 coin,
//! the `P` coin (full buckets only), then the cell index.

use std::collections::HashSet;
use std::sync::Arc;

use arrayvec::ArrayVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cbbf::Cbbf;
use crate::config::EmomaConfig;
use crate::dict::{Dictionary, InsertOutcome, InvariantReport, Metrics, Violation};
use crate::error::{EmomaError, Result};
use crate::hash::{splitmix64, HasherSet, KeyHashes, Mode};
use crate::stash::Stash;
use crate::store::{
    AccessStats, Bucket, CuckooStore, Entry, Location, Placement, Side, CELLS_PER_BUCKET,
};
use crate::{Key, Value};

const RNG_TAG: u64 = 0x5eed;

/// The three questions asked before choosing a bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conditions {
    pub empty_in_h1: bool,
    pub empty_in_h2: bool,
    /// The key itself queries positive.
    pub positive: bool,
    /// Recording the key would turn a first-bucket resident of `h1(x)` positive.
    pub creates_positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketChoice {
    /// Row of the selection table, 1 to 5.
    pub case_id: u8,
    pub side: Side,
}

/// Maps the conditions to a bucket. `coin` is only consulted in case 5 and
/// picks the first bucket when it returns true.
pub fn classify(c: Conditions, coin: impl FnOnce() -> bool) -> BucketChoice {
    let (case_id, side) = if c.positive {
        (1, Side::Second)
    } else if c.empty_in_h1 {
        (2, Side::First)
    } else if c.creates_positive {
        (4, Side::First)
    } else if c.empty_in_h2 {
        (3, Side::Second)
    } else if coin() {
        (5, Side::First)
    } else {
        (5, Side::Second)
    };
    BucketChoice { case_id, side }
}

#[derive(Debug, Clone)]
pub struct Emoma {
    config: EmomaConfig,
    hashers: Arc<HasherSet>,
    store: CuckooStore,
    cbbf: Cbbf,
    stash: Stash,
    rng: ChaCha8Rng,
    poisoned: bool,
    /// Stashed keys that were evicted from their first bucket.
    moving: Vec<Key>,
}

/// An occupied cell together with its key's hashes and placement.
#[derive(Clone)]
struct Resident {
    entry: Entry,
    hashes: KeyHashes,
    placement: Placement,
}

type Residents = [Option<Resident>; CELLS_PER_BUCKET];

const EMPTY_RESIDENTS: Residents = [None, None, None, None];

impl Emoma {
    pub fn new(config: EmomaConfig) -> Result<Self> {
        config.validate()?;
        let hashers = Arc::new(HasherSet::new(
            config.seed,
            config.mode,
            config.total_buckets,
            config.k,
            config.block_bits(),
        )?);
        Ok(Emoma {
            store: CuckooStore::new(config.mode, config.total_buckets)?,
            cbbf: Cbbf::new(Arc::clone(&hashers)),
            stash: Stash::new(config.stash_capacity),
            rng: ChaCha8Rng::seed_from_u64(splitmix64(config.seed, RNG_TAG)),
            hashers,
            config,
            poisoned: false,
            moving: Vec::new(),
        })
    }

    pub fn config(&self) -> &EmomaConfig {
        &self.config
    }

    pub fn hashers(&self) -> &Arc<HasherSet> {
        &self.hashers
    }

    pub fn cbbf(&self) -> &Cbbf {
        &self.cbbf
    }

    pub fn store(&self) -> &CuckooStore {
        &self.store
    }

    pub fn stash(&self) -> &Stash {
        &self.stash
    }

    pub fn reset_access_stats(&mut self) {
        self.store.reset_access_stats();
    }

    fn first_location(&self, kh: &KeyHashes) -> Location {
        Location::new(Side::First, kh.h1)
    }

    fn second_location(&self, kh: &KeyHashes) -> Location {
        Location::new(Side::Second, kh.h2)
    }

    fn same_bucket(&self, a: Location, b: Location) -> bool {
        self.store.physical(a).ok() == self.store.physical(b).ok()
    }

    /// How a key found at `loc` got there. A single-table key whose two
    /// hashes agree is treated as second-bucket exactly when it queries
    /// positive.
    #[inline]
    fn placement_at(&self, kh: &KeyHashes, loc: Location) -> Placement {
        match self.config.mode {
            Mode::Double => match loc.side {
                Side::First => Placement::ViaH1,
                Side::Second => Placement::ViaH2,
            },
            Mode::Single => {
                if kh.h1 != kh.h2 {
                    if loc.index == kh.h1 {
                        Placement::ViaH1
                    } else {
                        Placement::ViaH2
                    }
                } else if self.cbbf.query_hashed(kh) {
                    Placement::ViaH2
                } else {
                    Placement::ViaH1
                }
            }
        }
    }

    /// Placement of a key stored at `loc`. Reads the bucket to confirm the
    /// key is there.
    pub fn placement_of(&self, key: Key, loc: Location) -> Result<Placement> {
        let kh = self.hashers.hashes(key);
        let legal = self.same_bucket(loc, self.first_location(&kh))
            || self.same_bucket(loc, self.second_location(&kh));
        if !legal || self.store.read_bucket(loc)?.find(key).is_none() {
            return Err(EmomaError::NotAtLocation(key));
        }
        Ok(self.placement_at(&kh, loc))
    }

    pub fn search(&self, key: Key) -> Option<Value> {
        if let Some(v) = self.stash.lookup(key) {
            return Some(v);
        }
        let kh = self.hashers.hashes(key);
        let loc = if self.cbbf.query_hashed(&kh) {
            self.second_location(&kh)
        } else {
            self.first_location(&kh)
        };
        let bucket = self.store.read_bucket(loc).expect("hash in range");
        bucket.find(key).map(|(_, v)| v)
    }

    /// Hashes and placement of every occupied cell of a bucket read at `loc`.
    fn residents(&self, bucket: &Bucket, loc: Location) -> Residents {
        bucket.cells.map(|c| {
            c.map(|entry| {
                let hashes = self.hashers.hashes(entry.key);
                let placement = self.placement_at(&hashes, loc);
                Resident {
                    entry,
                    hashes,
                    placement,
                }
            })
        })
    }

    fn creates_positive(&self, xh: &KeyHashes, residents1: &Residents) -> bool {
        residents1.iter().flatten().any(|z| {
            z.placement == Placement::ViaH1 && self.cbbf.would_create_positive_hashed(xh, &z.hashes)
        })
    }

    fn conditions(
        &self,
        xh: &KeyHashes,
        bucket1: &Bucket,
        bucket2: &Bucket,
        residents1: &mut Option<Residents>,
    ) -> Conditions {
        let positive = self.cbbf.query_hashed(xh);
        let empty_in_h1 = !bucket1.is_full();
        // Only consulted when the first bucket is full and x is negative.
        let creates_positive = !positive
            && !empty_in_h1
            && self.creates_positive(
                xh,
                residents1.get_or_insert_with(|| self.residents(bucket1, self.first_location(xh))),
            );
        Conditions {
            empty_in_h1,
            empty_in_h2: !bucket2.is_full(),
            positive,
            creates_positive,
        }
    }

    /// Picks the bucket for `key` given the current contents of its two
    /// buckets.
    pub fn select_bucket(&mut self, key: Key, bucket1: &Bucket, bucket2: &Bucket) -> BucketChoice {
        let kh = self.hashers.hashes(key);
        let c = self.conditions(&kh, bucket1, bucket2, &mut None);
        let rng = &mut self.rng;
        classify(c, || rng.gen_bool(0.5))
    }

    /// Picks the cell in the chosen bucket of `key`.
    pub fn select_cell(&mut self, key: Key, choice: BucketChoice, bucket: &Bucket) -> usize {
        let kh = self.hashers.hashes(key);
        let loc = match choice.side {
            Side::First => self.first_location(&kh),
            Side::Second => self.second_location(&kh),
        };
        let residents = self.residents(bucket, loc);
        self.select_cell_at(&kh, bucket, loc, &residents)
    }

    /// Lock state and move cost of each resident of a full bucket.
    /// Returns `(locked, cost)` per cell.
    ///
    /// The cost of a first-bucket resident `y` is the number of other
    /// first-bucket keys of this bucket that recording `y` would turn
    /// positive. `incoming` is the key about to take a cell here through its
    /// first hash; it counts as one of those keys.
    pub fn lock_costs(
        &self,
        bucket: &Bucket,
        loc: Location,
        incoming: Option<&KeyHashes>,
    ) -> [(bool, usize); CELLS_PER_BUCKET] {
        assert!(bucket.is_full(), "lock costs are defined for full buckets");
        self.lock_costs_of(&self.residents(bucket, loc), incoming)
    }

    fn lock_costs_of(
        &self,
        residents: &Residents,
        incoming: Option<&KeyHashes>,
    ) -> [(bool, usize); CELLS_PER_BUCKET] {
        let mut out = [(false, 0); CELLS_PER_BUCKET];
        for (i, y) in residents.iter().enumerate() {
            let y = y.as_ref().expect("full bucket");
            out[i] = match y.placement {
                Placement::ViaH2 => {
                    let locked = self
                        .cbbf
                        .residual_positive_hashed(&y.hashes)
                        .expect("second-bucket resident missing from filter");
                    (locked, 0)
                }
                // A first-bucket resident sits in bucket h1(y), which is this
                // bucket, so the keys it could disturb are its neighbours.
                Placement::ViaH1 => {
                    let cost = residents
                        .iter()
                        .enumerate()
                        .filter_map(|(j, z)| z.as_ref().filter(|_| j != i))
                        .filter(|z| {
                            z.placement == Placement::ViaH1
                                && self.cbbf.would_create_positive_hashed(&y.hashes, &z.hashes)
                        })
                        .count();
                    let incoming_cost = incoming
                        .filter(|x| self.cbbf.would_create_positive_hashed(&y.hashes, x))
                        .is_some();
                    (false, cost + incoming_cost as usize)
                }
            };
        }
        out
    }

    fn select_cell_at(
        &mut self,
        xh: &KeyHashes,
        bucket: &Bucket,
        loc: Location,
        residents: &Residents,
    ) -> usize {
        let empties: ArrayVec<usize, CELLS_PER_BUCKET> = bucket.empty_cells().collect();
        if !empties.is_empty() {
            return empties[self.rng.gen_range(0..empties.len())];
        }
        let incoming = (self.placement_at(xh, loc) == Placement::ViaH1).then_some(xh);
        let costs = self.lock_costs_of(residents, incoming);
        let greedy = self.rng.gen_bool(self.config.p);
        let unlocked: ArrayVec<usize, CELLS_PER_BUCKET> =
            (0..CELLS_PER_BUCKET).filter(|&i| !costs[i].0).collect();
        let pool: ArrayVec<usize, CELLS_PER_BUCKET> = if unlocked.is_empty() {
            (0..CELLS_PER_BUCKET).collect()
        } else if greedy {
            let best = unlocked.iter().map(|&i| costs[i].1).min().unwrap();
            unlocked
                .into_iter()
                .filter(|&i| costs[i].1 == best)
                .collect()
        } else {
            unlocked
        };
        pool[self.rng.gen_range(0..pool.len())]
    }

    /// One placement iteration for an element already taken out of the
    /// stash. Displaced elements go back to the stash.
    fn place(&mut self, e: Entry) -> Result<()> {
        let xh = self.hashers.hashes(e.key);
        let loc1 = self.first_location(&xh);
        let loc2 = self.second_location(&xh);
        let same = self.same_bucket(loc1, loc2);
        let bucket1 = self.store.read_bucket(loc1)?;
        let bucket2 = if same {
            bucket1
        } else {
            self.store.read_bucket(loc2)?
        };

        let moving = match self.moving.iter().position(|&k| k == e.key) {
            Some(i) => {
                self.moving.swap_remove(i);
                true
            }
            None => false,
        };
        let mut residents1 = None;
        let c = self.conditions(&xh, &bucket1, &bucket2, &mut residents1);
        let rng = &mut self.rng;
        let mut choice = classify(c, || rng.gen_bool(0.5));
        if moving && choice.case_id == 4 {
            choice = BucketChoice {
                case_id: if bucket2.is_full() { 5 } else { 3 },
                side: Side::Second,
            };
        }
        let (loc, mut target) = match choice.side {
            Side::First => (loc1, bucket1),
            Side::Second => (loc2, bucket2),
        };
        let cell = if target.is_full() {
            let residents = match (choice.side, &residents1) {
                (Side::First, Some(r)) => r.clone(),
                (Side::Second, Some(r)) if same => r.clone(),
                _ => self.residents(&target, loc),
            };
            self.select_cell_at(&xh, &target, loc, &residents)
        } else {
            self.select_cell_at(&xh, &target, loc, &EMPTY_RESIDENTS)
        };

        let mut displaced: ArrayVec<Entry, { CELLS_PER_BUCKET + 1 }> = ArrayVec::new();
        if let Some(victim) = target.cells[cell].take() {
            let vh = self.hashers.hashes(victim.key);
            if self.placement_at(&vh, loc) == Placement::ViaH2 {
                self.cbbf.remove_hashed(&vh)?;
            } else {
                self.moving.push(victim.key);
            }
            displaced.push(victim);
        }

        if choice.side == Side::Second {
            // The victim is gone from this bucket already when it is the
            // same physical bucket as h1.
            let h1_bucket = if same { target } else { bucket1 };
            let residents1 = match residents1 {
                Some(r) if !same => r,
                _ => self.residents(&h1_bucket, loc1),
            };
            let watch: ArrayVec<(usize, &Resident), CELLS_PER_BUCKET> = residents1
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
                .filter(|(_, r)| r.placement == Placement::ViaH1)
                .collect();
            self.cbbf.add_hashed(&xh)?;
            for (i, z) in watch {
                if self.cbbf.query_hashed(&z.hashes) {
                    self.store.write_cell(loc1, i, None)?;
                    displaced.push(z.entry);
                }
            }
        }

        self.store.write_cell(loc, cell, Some(e))?;
        for d in displaced {
            self.stash.put(d.key, d.value)?;
        }
        Ok(())
    }

    pub fn insert(&mut self, key: Key, value: Value) -> Result<InsertOutcome> {
        if self.poisoned {
            return Err(EmomaError::Poisoned);
        }
        if self.search(key).is_some() {
            return Err(EmomaError::DuplicateKey(key));
        }
        let mut outcome = InsertOutcome::default();
        if let Err(e) = self.stash.put(key, value) {
            return self.fail(e, outcome);
        }
        let mut next = self.stash.take(key);
        while let Some(entry) = next {
            let before = self.stash.len();
            let placed = self.place(entry);
            outcome.iterations_used += 1;
            if let Err(e) = placed {
                return self.fail(e, outcome);
            }
            if outcome.iterations_used == 1 {
                outcome.placed_immediately = self.stash.len() == before;
            }
            if outcome.iterations_used >= self.config.t {
                break;
            }
            next = self.stash.take_random(&mut self.rng);
        }
        outcome.stash_residue_after = self.stash.len();
        Ok(outcome)
    }

    fn fail(&mut self, err: EmomaError, mut outcome: InsertOutcome) -> Result<InsertOutcome> {
        match err {
            EmomaError::StashOverflow { .. } => {
                self.poisoned = true;
                outcome.failed = true;
                outcome.stash_residue_after = self.stash.len();
                Ok(outcome)
            }
            other => Err(other),
        }
    }

    pub fn remove(&mut self, key: Key) -> bool {
        if self.stash.remove(key) {
            self.moving.retain(|&k| k != key);
            return true;
        }
        let kh = self.hashers.hashes(key);
        let positive = self.cbbf.query_hashed(&kh);
        let loc = if positive {
            self.second_location(&kh)
        } else {
            self.first_location(&kh)
        };
        let bucket = self.store.read_bucket(loc).expect("hash in range");
        let Some((cell, _)) = bucket.find(key) else {
            return false;
        };
        if positive {
            self.cbbf
                .remove_hashed(&kh)
                .expect("filter bookkeeping corrupted");
        }
        self.store
            .write_cell(loc, cell, None)
            .expect("cell in range");
        true
    }

    pub fn metrics(&self) -> Metrics {
        let occupied = self.store.occupied();
        let via_h2 = self.cbbf.recorded();
        Metrics {
            occupied,
            capacity: self.store.capacity(),
            load_factor: occupied as f64 / self.store.capacity() as f64,
            stash_len: self.stash.len(),
            stash_watermark: self.stash.watermark(),
            via_h1: occupied - via_h2,
            via_h2,
            cbbf_max_counter: self.cbbf.max_counter(),
            access: self.access_stats(),
        }
    }

    pub fn access_stats(&self) -> AccessStats {
        AccessStats {
            cbbf_counter_accesses: self.cbbf.counter_accesses(),
            ..self.store.access_stats()
        }
    }

    /// Full scan of the table, stash and filter.
    pub fn verify_invariants(&self) -> InvariantReport {
        let mut violations = Vec::new();
        let mut seen = HashSet::new();
        let mut rebuilt = Cbbf::new(Arc::clone(&self.hashers));
        let mut scanned = 0;
        let mut via_h2 = 0;
        for loc in self.store.locations() {
            let bucket = self.store.read_bucket(loc).expect("location in range");
            for entry in bucket.cells.iter().flatten() {
                scanned += 1;
                if !seen.insert(entry.key) {
                    violations.push(Violation::DuplicateKey(entry.key));
                }
                let kh = self.hashers.hashes(entry.key);
                if !self.same_bucket(loc, self.first_location(&kh))
                    && !self.same_bucket(loc, self.second_location(&kh))
                {
                    violations.push(Violation::IllegalLocation {
                        key: entry.key,
                        location: loc,
                    });
                    continue;
                }
                let positive = self.cbbf.query_hashed(&kh);
                match self.placement_at(&kh, loc) {
                    Placement::ViaH1 if positive => {
                        violations.push(Violation::H1PlacedButPositive(entry.key))
                    }
                    Placement::ViaH2 => {
                        via_h2 += 1;
                        if !positive {
                            violations.push(Violation::H2PlacedButNegative(entry.key));
                        }
                        let _ = rebuilt.add_hashed(&kh);
                    }
                    _ => {}
                }
            }
        }
        for entry in self.stash.iter() {
            if !seen.insert(entry.key) {
                violations.push(Violation::DuplicateKey(entry.key));
            }
        }
        if rebuilt != self.cbbf {
            violations.push(Violation::FilterMismatch);
        }
        if scanned != self.store.occupied() {
            violations.push(Violation::OccupancyMismatch {
                tracked: self.store.occupied(),
                scanned,
            });
        }
        if via_h2 != self.cbbf.recorded() {
            violations.push(Violation::RecordedMismatch {
                tracked: self.cbbf.recorded(),
                scanned: via_h2,
            });
        }
        InvariantReport { violations }
    }
}

impl Dictionary for Emoma {
    fn insert(&mut self, key: Key, value: Value) -> Result<InsertOutcome> {
        Emoma::insert(self, key, value)
    }

    fn search(&self, key: Key) -> Option<Value> {
        Emoma::search(self, key)
    }

    fn remove(&mut self, key: Key) -> bool {
        Emoma::remove(self, key)
    }

    fn metrics(&self) -> Metrics {
        Emoma::metrics(self)
    }

    fn verify_invariants(&self) -> InvariantReport {
        Emoma::verify_invariants(self)
    }

    fn access_stats(&self) -> AccessStats {
        Emoma::access_stats(self)
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
