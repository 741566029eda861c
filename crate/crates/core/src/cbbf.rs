//! Counting block Bloom filter.
//!
//! The filter records the keys that are stored through their second hash
//! function. The block is chosen by `h1`, the same function that picks a
//! key's first bucket, and `g1..gk` pick bits inside the block. The bit
//! array models on-chip memory and is all a query touches; the counters
//! model off-chip memory and are only touched by `add`/`remove`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{EmomaError, Result};
use crate::hash::{HasherSet, KeyHashes};
use crate::Key;

#[derive(Debug, Clone)]
pub struct Cbbf {
    hashers: Arc<HasherSet>,
    block_bits: usize,
    blocks: Vec<u64>,
    counters: Vec<u32>,
    recorded: usize,
    max_counter: u32,
    counter_accesses: u64,
}

impl PartialEq for Cbbf {
    /// Filters compare equal when their bits and counters match.
    fn eq(&self, other: &Self) -> bool {
        self.block_bits == other.block_bits
            && self.blocks == other.blocks
            && self.counters == other.counters
    }
}

impl Cbbf {
    pub fn new(hashers: Arc<HasherSet>) -> Self {
        let num_blocks = hashers.num_buckets_h1();
        let block_bits = hashers.block_bits();
        Cbbf {
            hashers,
            block_bits,
            blocks: vec![0; num_blocks],
            counters: vec![0; num_blocks * block_bits],
            recorded: 0,
            max_counter: 0,
            counter_accesses: 0,
        }
    }

    pub fn hashers(&self) -> &Arc<HasherSet> {
        &self.hashers
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_bits(&self) -> usize {
        self.block_bits
    }

    pub fn k(&self) -> usize {
        self.hashers.k()
    }

    /// On-chip bit array size in bits.
    pub fn total_bits(&self) -> usize {
        self.blocks.len() * self.block_bits
    }

    /// Number of keys currently recorded.
    pub fn recorded(&self) -> usize {
        self.recorded
    }

    /// Largest counter value ever reached.
    pub fn max_counter(&self) -> u32 {
        self.max_counter
    }

    /// Off-chip counter reads and writes performed by `add` and `remove`.
    pub fn counter_accesses(&self) -> u64 {
        self.counter_accesses
    }

    pub fn block(&self, index: usize) -> u64 {
        self.blocks[index]
    }

    pub fn counter(&self, block: usize, bit: usize) -> u32 {
        self.counters[block * self.block_bits + bit]
    }

    pub fn query(&self, key: Key) -> bool {
        self.query_hashed(&self.hashers.hashes(key))
    }

    #[inline]
    pub fn query_hashed(&self, kh: &KeyHashes) -> bool {
        let mask = kh.bits.mask();
        self.blocks[kh.block()] & mask == mask
    }

    pub fn add(&mut self, key: Key) -> Result<()> {
        let kh = self.hashers.hashes(key);
        self.add_hashed(&kh)
    }

    pub fn add_hashed(&mut self, kh: &KeyHashes) -> Result<()> {
        let block = kh.block();
        let base = block * self.block_bits;
        for &bit in kh.bits.as_slice() {
            let bit = bit as usize;
            let c = &mut self.counters[base + bit];
            *c = c
                .checked_add(1)
                .ok_or(EmomaError::CounterOverflow { block, bit })?;
            self.max_counter = self.max_counter.max(*c);
            self.counter_accesses += 1;
        }
        self.blocks[block] |= kh.bits.mask();
        self.recorded += 1;
        Ok(())
    }

    pub fn remove(&mut self, key: Key) -> Result<()> {
        let kh = self.hashers.hashes(key);
        self.remove_hashed(&kh)
    }

    /// Undoes one `add`. Fails without touching state if any counter would
    /// drop below zero.
    pub fn remove_hashed(&mut self, kh: &KeyHashes) -> Result<()> {
        let block = kh.block();
        let base = block * self.block_bits;
        for &bit in kh.bits.as_slice() {
            let bit = bit as usize;
            if self.counters[base + bit] < kh.bits.multiplicity(bit) {
                return Err(EmomaError::CounterUnderflow { block, bit });
            }
        }
        for &bit in kh.bits.as_slice() {
            let bit = bit as usize;
            let c = &mut self.counters[base + bit];
            *c -= 1;
            if *c == 0 {
                self.blocks[block] &= !(1u64 << bit);
            }
            self.counter_accesses += 1;
        }
        self.recorded -= 1;
        Ok(())
    }

    /// Whether `key` would still query positive with its own contribution
    /// taken out. A recorded key for which this holds is locked at its
    /// second bucket.
    pub fn residual_positive(&self, key: Key) -> Result<bool> {
        self.residual_positive_hashed(&self.hashers.hashes(key))
    }

    pub fn residual_positive_hashed(&self, kh: &KeyHashes) -> Result<bool> {
        let base = kh.block() * self.block_bits;
        let mut residual = true;
        for &bit in kh.bits.as_slice() {
            let bit = bit as usize;
            let own = kh.bits.multiplicity(bit);
            let c = self.counters[base + bit];
            if c < own {
                return Err(EmomaError::NotRecorded(kh.key));
            }
            if c == own {
                residual = false;
            }
        }
        Ok(residual)
    }

    /// Whether adding `added` would turn a currently negative `probe` positive.
    /// Both keys must share a block.
    pub fn would_create_positive(&self, added: Key, probe: Key) -> Result<bool> {
        let a = self.hashers.hashes(added);
        let p = self.hashers.hashes(probe);
        if a.block() != p.block() {
            return Err(EmomaError::BlockMismatch(a.block(), p.block()));
        }
        Ok(self.would_create_positive_hashed(&a, &p))
    }

    #[inline]
    pub fn would_create_positive_hashed(&self, added: &KeyHashes, probe: &KeyHashes) -> bool {
        debug_assert_eq!(added.block(), probe.block());
        let current = self.blocks[probe.block()];
        let mask = probe.bits.mask();
        current & mask != mask && (current | added.bits.mask()) & mask == mask
    }

    /// One line per non-empty block: `index: bitmask_hex counters_csv`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (index, &bits) in self.blocks.iter().enumerate() {
            if bits == 0 {
                continue;
            }
            let base = index * self.block_bits;
            let counters: Vec<String> = self.counters[base..base + self.block_bits]
                .iter()
                .map(u32::to_string)
                .collect();
            let _ = writeln!(out, "{index}: {bits:x} {}", counters.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::Mode;

    fn filter(buckets: usize, k: usize, block_bits: usize, seed: u64) -> Cbbf {
        Cbbf::new(Arc::new(
            HasherSet::new(seed, Mode::Single, buckets, k, block_bits).unwrap(),
        ))
    }

    fn distinct_positions(f: &Cbbf, key: Key) -> bool {
        let p = f.hashers().bit_positions(key);
        p.iter()
            .all(|&b| p.iter().filter(|&&c| c == b).count() == 1)
    }

    #[test]
    fn fresh_filter_is_negative() {
        let f = filter(64, 3, 16, 1);
        assert!((0..1000u64).all(|k| !f.query(k)));
    }

    #[test]
    fn add_then_query() {
        let mut f = filter(64, 3, 16, 1);
        f.add(42).unwrap();
        assert!(f.query(42));
        assert_eq!(f.recorded(), 1);
    }

    #[test]
    fn add_sets_exactly_k_counters() {
        let mut f = filter(64, 3, 16, 1);
        let key = (0..).find(|&k| distinct_positions(&f, k)).unwrap();
        f.add(key).unwrap();
        let b = f.hashers().h1(key);
        let ones: usize = (0..16).filter(|&j| f.counter(b, j) == 1).count();
        assert_eq!(ones, 3);
        assert_eq!(f.block(b).count_ones(), 3);
        f.add(key).unwrap();
        for j in f.hashers().bit_positions(key) {
            assert_eq!(f.counter(b, j), 2);
        }
        assert_eq!(f.block(b).count_ones(), 3);
        assert_eq!(f.max_counter(), 2);
    }

    #[test]
    fn single_bit_filter_false_positive() {
        // k = 1 and a one-bit block: any key sharing a block is positive.
        let mut f = filter(8, 1, 1, 4);
        let h = f.hashers().clone();
        let x = 0u64;
        let y = (1..).find(|&y| h.h1(y) == h.h1(x)).unwrap();
        f.add(y).unwrap();
        assert!(f.query(x));
    }

    fn overlapping_pair(f: &Cbbf) -> (Key, Key, usize) {
        let h = f.hashers().clone();
        for x in 0..10_000u64 {
            for y in x + 1..x + 200 {
                if h.h1(x) != h.h1(y) {
                    continue;
                }
                let px = h.bit_positions(x);
                if let Some(&j) = h.bit_positions(y).iter().find(|j| px.contains(j)) {
                    return (x, y, j);
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn overlapping_add_and_remove() {
        let mut f = filter(16, 3, 16, 9);
        let (x, y, j) = overlapping_pair(&f);
        let b = f.hashers().h1(x);
        f.add(x).unwrap();
        f.add(y).unwrap();
        assert!(f.counter(b, j) >= 2);
        f.remove(y).unwrap();
        assert!(f.block(b) & (1 << j) != 0);
        assert!(f.counter(b, j) >= 1);
        f.remove(x).unwrap();
        assert_eq!(f, filter(16, 3, 16, 9));
    }

    #[test]
    fn remove_is_inverse_of_add() {
        let fresh = filter(64, 4, 32, 2);
        let mut f = fresh.clone();
        f.add(77).unwrap();
        f.remove(77).unwrap();
        assert_eq!(f, fresh);
        assert_eq!(f.recorded(), 0);
    }

    #[test]
    fn remove_from_fresh_filter_fails() {
        let mut f = filter(64, 3, 16, 1);
        assert!(matches!(
            f.remove(5),
            Err(EmomaError::CounterUnderflow { .. })
        ));
        assert_eq!(f, filter(64, 3, 16, 1));
    }

    #[test]
    fn residual_positive_cases() {
        let mut f = filter(16, 2, 8, 3);
        let h = f.hashers().clone();
        f.add(1).unwrap();
        assert!(!f.residual_positive(1).unwrap());

        // A key in another block does not cover x.
        let other = (2..).find(|&y| h.h1(y) != h.h1(1)).unwrap();
        f.add(other).unwrap();
        assert!(!f.residual_positive(1).unwrap());

        // A key in the same block whose bits cover x's bits locks x.
        let px = h.positions(1).mask();
        let cover = (2..)
            .find(|&y| h.h1(y) == h.h1(1) && h.positions(y).mask() & px == px)
            .unwrap();
        f.add(cover).unwrap();
        assert!(f.residual_positive(1).unwrap());
    }

    #[test]
    fn residual_positive_on_unrecorded_key_errors() {
        let f = filter(16, 2, 8, 3);
        assert_eq!(f.residual_positive(9), Err(EmomaError::NotRecorded(9)));
    }

    #[test]
    fn would_create_positive_cases() {
        let f = filter(4, 2, 8, 12);
        let h = f.hashers().clone();
        let probe = 0u64;
        let pm = h.positions(probe).mask();
        let cover = (1..)
            .find(|&y| h.h1(y) == h.h1(probe) && h.positions(y).mask() & pm == pm)
            .unwrap();
        assert!(f.would_create_positive(cover, probe).unwrap());
        let disjoint = (1..)
            .find(|&y| h.h1(y) == h.h1(probe) && h.positions(y).mask() & pm == 0)
            .unwrap();
        assert!(!f.would_create_positive(disjoint, probe).unwrap());

        let mut g = f.clone();
        g.add(cover).unwrap();
        // Probe is already positive, nothing new to create.
        assert!(!g.would_create_positive(cover, probe).unwrap());

        let far = (1..).find(|&y| h.h1(y) != h.h1(probe)).unwrap();
        assert!(matches!(
            f.would_create_positive(far, probe),
            Err(EmomaError::BlockMismatch(..))
        ));
    }

    #[test]
    fn dump_lists_nonempty_blocks() {
        let mut f = filter(4, 1, 4, 0);
        assert_eq!(f.dump(), "");
        f.add(10).unwrap();
        let b = f.hashers().h1(10);
        let bit = f.hashers().bit_positions(10)[0];
        let mut counters = ["0"; 4];
        counters[bit] = "1";
        assert_eq!(
            f.dump(),
            format!("{b}: {:x} {}\n", 1u64 << bit, counters.join(","))
        );
    }
}
