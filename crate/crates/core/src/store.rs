//! Off-chip bucket storage.
//!
//! All bucket traffic goes through [`CuckooStore::read_bucket`] and
//! [`CuckooStore::write_cell`], which charge one off-chip access each. Reads
//! hand back a copy of the bucket, the way a burst read would.
//!
//! # Snapshot format
//!
//! ```text
//! offset  size  field
//! 0       1     version, 0x01
//! 1       1     mode, 0 = single, 1 = double
//! 2       8     total bucket count, u64 little endian
//! 10      8     payload length in bytes, u64 little endian
//! 18      ...   payload: for every bucket in physical order, 4 cells of
//!               17 bytes each: tag (0 empty, 1 occupied), key u64 LE,
//!               value u64 LE (zero when empty)
//! ```
//!
//! In double mode the physical order is subtable one followed by subtable two.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{EmomaError, Result};
use crate::hash::Mode;
use crate::{Key, Value};

pub const CELLS_PER_BUCKET: usize = 4;

const SNAPSHOT_VERSION: u8 = 0x01;
const SNAPSHOT_HEADER: usize = 18;
const SNAPSHOT_CELL: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entry {
    pub key: Key,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bucket {
    pub cells: [Option<Entry>; CELLS_PER_BUCKET],
}

impl Bucket {
    pub fn find(&self, key: Key) -> Option<(usize, Value)> {
        self.cells
            .iter()
            .enumerate()
            .find_map(|(i, c)| c.filter(|e| e.key == key).map(|e| (i, e.value)))
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_full(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    pub fn empty_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    First,
    Second,
}

/// A bucket address. In single mode both sides name the same table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Location {
    pub side: Side,
    pub index: usize,
}

impl Location {
    pub fn new(side: Side, index: usize) -> Self {
        Location { side, index }
    }
}

/// Which hash function put an element where it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    ViaH1,
    ViaH2,
}

/// Counters of simulated external memory traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessStats {
    pub offchip_reads: u64,
    pub offchip_writes: u64,
    pub cbbf_counter_accesses: u64,
}

impl AccessStats {
    /// Traffic since `earlier` was taken.
    pub fn since(&self, earlier: &AccessStats) -> AccessStats {
        AccessStats {
            offchip_reads: self.offchip_reads - earlier.offchip_reads,
            offchip_writes: self.offchip_writes - earlier.offchip_writes,
            cbbf_counter_accesses: self.cbbf_counter_accesses - earlier.cbbf_counter_accesses,
        }
    }
}

#[derive(Debug)]
pub struct CuckooStore {
    mode: Mode,
    buckets: Vec<Bucket>,
    per_side: usize,
    occupied: usize,
    reads: AtomicU64,
    writes: u64,
}

impl Clone for CuckooStore {
    fn clone(&self) -> Self {
        CuckooStore {
            mode: self.mode,
            buckets: self.buckets.clone(),
            per_side: self.per_side,
            occupied: self.occupied,
            reads: AtomicU64::new(self.reads.load(Ordering::Relaxed)),
            writes: self.writes,
        }
    }
}

impl CuckooStore {
    pub fn new(mode: Mode, total_buckets: usize) -> Result<Self> {
        if total_buckets == 0 || (mode == Mode::Double && !total_buckets.is_multiple_of(2)) {
            return Err(EmomaError::InvalidConfig(format!(
                "cannot lay out {total_buckets} buckets in {} mode",
                mode.as_str()
            )));
        }
        let per_side = match mode {
            Mode::Single => total_buckets,
            Mode::Double => total_buckets / 2,
        };
        Ok(CuckooStore {
            mode,
            buckets: vec![Bucket::default(); total_buckets],
            per_side,
            occupied: 0,
            reads: AtomicU64::new(0),
            writes: 0,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn total_buckets(&self) -> usize {
        self.buckets.len()
    }

    /// Number of buckets addressable from one side.
    pub fn buckets_per_side(&self) -> usize {
        self.per_side
    }

    pub fn capacity(&self) -> usize {
        self.buckets.len() * CELLS_PER_BUCKET
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    /// Index into the physical bucket array.
    #[inline]
    pub fn physical(&self, loc: Location) -> Result<usize> {
        if loc.index >= self.per_side {
            return Err(EmomaError::BucketOutOfRange {
                index: loc.index,
                limit: self.per_side,
            });
        }
        Ok(match (self.mode, loc.side) {
            (Mode::Double, Side::Second) => self.per_side + loc.index,
            _ => loc.index,
        })
    }

    /// Reads one bucket, charging one off-chip read.
    #[inline]
    pub fn read_bucket(&self, loc: Location) -> Result<Bucket> {
        let slot = self.physical(loc)?;
        self.reads.fetch_add(1, Ordering::Relaxed);
        Ok(self.buckets[slot])
    }

    /// Replaces one cell, charging one off-chip write.
    #[inline]
    pub fn write_cell(&mut self, loc: Location, cell: usize, content: Option<Entry>) -> Result<()> {
        let slot = self.physical(loc)?;
        if cell >= CELLS_PER_BUCKET {
            return Err(EmomaError::CellOutOfRange(cell));
        }
        let target = &mut self.buckets[slot].cells[cell];
        match (target.is_some(), content.is_some()) {
            (false, true) => self.occupied += 1,
            (true, false) => self.occupied -= 1,
            _ => {}
        }
        *target = content;
        self.writes += 1;
        Ok(())
    }

    pub fn access_stats(&self) -> AccessStats {
        AccessStats {
            offchip_reads: self.reads.load(Ordering::Relaxed),
            offchip_writes: self.writes,
            cbbf_counter_accesses: 0,
        }
    }

    pub fn reset_access_stats(&mut self) {
        *self.reads.get_mut() = 0;
        self.writes = 0;
    }

    /// Every location in physical order.
    pub fn locations(&self) -> impl Iterator<Item = Location> + '_ {
        let first = (0..self.per_side).map(|i| Location::new(Side::First, i));
        let second = match self.mode {
            Mode::Single => 0..0,
            Mode::Double => 0..self.per_side,
        }
        .map(|i| Location::new(Side::Second, i));
        first.chain(second)
    }

    /// Serializes the table. Buckets are read through the accounting layer.
    pub fn to_snapshot(&self) -> Vec<u8> {
        let payload = self.buckets.len() * CELLS_PER_BUCKET * SNAPSHOT_CELL;
        let mut out = Vec::with_capacity(SNAPSHOT_HEADER + payload);
        out.push(SNAPSHOT_VERSION);
        out.push(match self.mode {
            Mode::Single => 0,
            Mode::Double => 1,
        });
        out.extend_from_slice(&(self.buckets.len() as u64).to_le_bytes());
        out.extend_from_slice(&(payload as u64).to_le_bytes());
        for loc in self.locations() {
            let bucket = self.read_bucket(loc).expect("location in range");
            for cell in bucket.cells {
                match cell {
                    Some(e) => {
                        out.push(1);
                        out.extend_from_slice(&e.key.to_le_bytes());
                        out.extend_from_slice(&e.value.to_le_bytes());
                    }
                    None => out.extend_from_slice(&[0u8; SNAPSHOT_CELL]),
                }
            }
        }
        out
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| EmomaError::Snapshot(m.to_string());
        if bytes.len() < SNAPSHOT_HEADER {
            return Err(bad("truncated header"));
        }
        if bytes[0] != SNAPSHOT_VERSION {
            return Err(bad("unsupported version"));
        }
        let mode = match bytes[1] {
            0 => Mode::Single,
            1 => Mode::Double,
            _ => return Err(bad("unknown mode")),
        };
        let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let total = usize::try_from(word(2)).map_err(|_| bad("bucket count too large"))?;
        let payload = usize::try_from(word(10)).map_err(|_| bad("payload too large"))?;
        if Some(payload) != total.checked_mul(CELLS_PER_BUCKET * SNAPSHOT_CELL) {
            return Err(bad("payload length does not match bucket count"));
        }
        if bytes.len() != SNAPSHOT_HEADER + payload {
            return Err(bad("payload length mismatch"));
        }
        let mut store = CuckooStore::new(mode, total)?;
        for (i, chunk) in bytes[SNAPSHOT_HEADER..]
            .chunks_exact(SNAPSHOT_CELL)
            .enumerate()
        {
            let entry = match chunk[0] {
                0 => None,
                1 => Some(Entry {
                    key: u64::from_le_bytes(chunk[1..9].try_into().unwrap()),
                    value: u64::from_le_bytes(chunk[9..17].try_into().unwrap()),
                }),
                _ => return Err(bad("bad cell tag")),
            };
            if entry.is_some() {
                store.occupied += 1;
            }
            store.buckets[i / CELLS_PER_BUCKET].cells[i % CELLS_PER_BUCKET] = entry;
        }
        Ok(store)
    }
}
