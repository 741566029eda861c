//! Seeded hash functions for bucket selection and filter bit selection.
//!
//! Every function is derived from one 64-bit seed. Each function gets its own
//! salt (a splitmix64 draw from the seed under a fixed tag), and a key is
//! hashed by the murmur3 64-bit finalizer applied to the salted key.
//! Bucket indices use multiply-shift range reduction; bucket counts are
//! powers of two so this is just the top bits.

use arrayvec::ArrayVec;

use crate::error::{EmomaError, Result};
use crate::Key;

/// Largest number of bit selection functions a filter may use.
pub const MAX_K: usize = 16;

/// Widest filter block, in bits. Blocks are held in one machine word.
pub const MAX_BLOCK_BITS: usize = 64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

const TAG_H1: u64 = 1;
const TAG_H2: u64 = 2;
const TAG_BITS: u64 = 3;

#[inline]
pub(crate) fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

/// One step of splitmix64 applied to `state + GOLDEN * n`.
#[inline]
pub fn splitmix64(state: u64, n: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN.wrapping_mul(n.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn salted(key: Key, salt: u64) -> u64 {
    fmix64(key ^ salt)
}

#[inline]
fn reduce(hash: u64, range: usize) -> usize {
    ((hash as u128 * range as u128) >> 64) as usize
}

/// Table organisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// One bucket array addressed by both hash functions.
    Single,
    /// Two half-size subtables, the first addressed by `h1`, the second by `h2`.
    Double,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Double => "double",
        }
    }
}

/// Bit positions selected inside a filter block for one key.
///
/// Positions may repeat; `mask` is their union.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPositions {
    positions: ArrayVec<u8, MAX_K>,
    mask: u64,
}

impl BitPositions {
    pub fn as_slice(&self) -> &[u8] {
        &self.positions
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// How many times `bit` appears among the positions.
    pub fn multiplicity(&self, bit: usize) -> u32 {
        self.positions
            .iter()
            .filter(|&&p| p as usize == bit)
            .count() as u32
    }
}

/// Everything the dictionary needs to know about a key's hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyHashes {
    pub key: Key,
    pub h1: usize,
    pub h2: usize,
    pub bits: BitPositions,
}

impl KeyHashes {
    /// `h1` doubles as the filter block index.
    #[inline]
    pub fn block(&self) -> usize {
        self.h1
    }
}

/// The family `h1`, `h2`, `g1..gk` for one dictionary instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HasherSet {
    seed: u64,
    mode: Mode,
    num_buckets_h1: usize,
    num_buckets_h2: usize,
    k: usize,
    block_bits: usize,
    salt_h1: u64,
    salt_h2: u64,
    salt_bits: u64,
}

impl HasherSet {
    /// `total_buckets` is the size of the whole table; in double mode each
    /// hash function ranges over half of it.
    pub fn new(
        seed: u64,
        mode: Mode,
        total_buckets: usize,
        k: usize,
        block_bits: usize,
    ) -> Result<Self> {
        if !total_buckets.is_power_of_two() {
            return Err(EmomaError::InvalidConfig(format!(
                "bucket count {total_buckets} is not a power of two"
            )));
        }
        if mode == Mode::Double && total_buckets < 2 {
            return Err(EmomaError::InvalidConfig(
                "double mode needs at least two buckets".into(),
            ));
        }
        if k == 0 || k > MAX_K {
            return Err(EmomaError::InvalidConfig(format!(
                "k must be in 1..={MAX_K}, got {k}"
            )));
        }
        if block_bits == 0 || block_bits > MAX_BLOCK_BITS {
            return Err(EmomaError::InvalidConfig(format!(
                "block width must be in 1..={MAX_BLOCK_BITS} bits, got {block_bits}"
            )));
        }
        let per_function = match mode {
            Mode::Single => total_buckets,
            Mode::Double => total_buckets / 2,
        };
        Ok(HasherSet {
            seed,
            mode,
            num_buckets_h1: per_function,
            num_buckets_h2: per_function,
            k,
            block_bits,
            salt_h1: splitmix64(seed, TAG_H1),
            salt_h2: splitmix64(seed, TAG_H2),
            salt_bits: splitmix64(seed, TAG_BITS),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn num_buckets_h1(&self) -> usize {
        self.num_buckets_h1
    }

    pub fn num_buckets_h2(&self) -> usize {
        self.num_buckets_h2
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn block_bits(&self) -> usize {
        self.block_bits
    }

    #[inline]
    pub fn h1(&self, key: Key) -> usize {
        reduce(salted(key, self.salt_h1), self.num_buckets_h1)
    }

    #[inline]
    pub fn h2(&self, key: Key) -> usize {
        reduce(salted(key, self.salt_h2), self.num_buckets_h2)
    }

    pub fn bucket_hashes(&self, key: Key) -> (usize, usize) {
        (self.h1(key), self.h2(key))
    }

    #[inline]
    pub fn positions(&self, key: Key) -> BitPositions {
        // A splitmix64 stream seeded by the key's own hash gives g1..gk.
        let base = salted(key, self.salt_bits);
        let mut positions = ArrayVec::new();
        let mut mask = 0u64;
        for j in 0..self.k {
            let word = splitmix64(base, j as u64);
            let bit = (((word >> 32) * self.block_bits as u64) >> 32) as u8;
            positions.push(bit);
            mask |= 1u64 << bit;
        }
        BitPositions { positions, mask }
    }

    pub fn bit_positions(&self, key: Key) -> Vec<usize> {
        self.positions(key)
            .as_slice()
            .iter()
            .map(|&p| p as usize)
            .collect()
    }

    #[inline]
    pub fn hashes(&self, key: Key) -> KeyHashes {
        KeyHashes {
            key,
            h1: self.h1(key),
            h2: self.h2(key),
            bits: self.positions(key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bucket_hashes_in_range_and_deterministic() {
        let h = HasherSet::new(7, Mode::Single, 8, 3, 16).unwrap();
        for key in 0..1000u64 {
            let (a, b) = h.bucket_hashes(key);
            assert!(a < 8 && b < 8);
            assert_eq!(h.bucket_hashes(key), (a, b));
        }
        let again = HasherSet::new(7, Mode::Single, 8, 3, 16).unwrap();
        assert_eq!(again.bucket_hashes(12345), h.bucket_hashes(12345));
    }

    #[test]
    fn double_mode_halves_ranges() {
        let h = HasherSet::new(1, Mode::Double, 64, 4, 32).unwrap();
        assert_eq!(h.num_buckets_h1(), 32);
        assert_eq!(h.num_buckets_h2(), 32);
        for key in 0..10_000u64 {
            assert!(h.h1(key) < 32 && h.h2(key) < 32);
        }
    }

    #[test]
    fn frozen_outputs_across_restarts() {
        // Recorded once from this build; any change to the hash construction
        // breaks reproducibility of stored experiment seeds.
        let h = HasherSet::new(0xdead_beef, Mode::Single, 1 << 13, 3, 16).unwrap();
        let got: Vec<_> = (0..4u64)
            .map(|k| (h.h1(k), h.h2(k), h.bit_positions(k)))
            .collect();
        assert_eq!(
            got,
            FROZEN
                .iter()
                .map(|(a, b, p)| (*a, *b, p.to_vec()))
                .collect::<Vec<_>>()
        );
    }

    const FROZEN: [(usize, usize, [usize; 3]); 4] = [
        (4327, 4277, [6, 7, 6]),
        (3690, 900, [4, 4, 6]),
        (3954, 3227, [7, 14, 7]),
        (4530, 761, [15, 4, 11]),
    ];

    #[test]
    fn bucket_hashes_are_roughly_uniform() {
        let buckets = 1usize << 13;
        let h = HasherSet::new(99, Mode::Single, buckets, 3, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c1 = vec![0u32; buckets];
        let mut c2 = vec![0u32; buckets];
        let n = 100_000;
        for _ in 0..n {
            let key: u64 = rng.gen();
            let (a, b) = h.bucket_hashes(key);
            c1[a] += 1;
            c2[b] += 1;
        }
        let mean = n as f64 / buckets as f64;
        for counts in [&c1, &c2] {
            assert!(counts.iter().all(|&c| (c as f64) <= 5.0 * mean));
            // Pearson statistic against the uniform expectation; for 8191
            // degrees of freedom the 99.9% quantile is below 8700.
            let chi2: f64 = counts
                .iter()
                .map(|&c| (c as f64 - mean).powi(2) / mean)
                .sum();
            assert!(chi2 < 8700.0, "chi2 = {chi2}");
        }
    }

    #[test]
    fn bit_positions_length_and_range() {
        let h = HasherSet::new(3, Mode::Single, 16, 3, 16).unwrap();
        for key in 0..1000u64 {
            let p = h.bit_positions(key);
            assert_eq!(p.len(), 3);
            assert!(p.iter().all(|&b| b < 16));
        }
        let unit = HasherSet::new(3, Mode::Single, 16, 1, 1).unwrap();
        for key in 0..1000u64 {
            assert_eq!(unit.bit_positions(key), vec![0]);
        }
    }

    #[test]
    fn bit_positions_are_roughly_uniform() {
        let h = HasherSet::new(11, Mode::Single, 1024, 3, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0u32; 16];
        let n = 100_000;
        for _ in 0..n {
            for p in h.bit_positions(rng.gen()) {
                counts[p] += 1;
            }
        }
        let expected = (n * 3) as f64 / 16.0;
        for c in counts {
            assert!((c as f64 - expected).abs() < 0.1 * expected, "{counts:?}");
        }
    }

    #[test]
    fn fuzz_range_safety() {
        let h = HasherSet::new(123, Mode::Double, 1 << 10, 5, 24).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1_000_000 {
            let kh = h.hashes(rng.gen());
            assert!(kh.h1 < 512 && kh.h2 < 512);
            assert!(kh.bits.as_slice().iter().all(|&b| (b as usize) < 24));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(HasherSet::new(0, Mode::Single, 12, 3, 16).is_err());
        assert!(HasherSet::new(0, Mode::Single, 16, 0, 16).is_err());
        assert!(HasherSet::new(0, Mode::Single, 16, 3, 65).is_err());
        assert!(HasherSet::new(0, Mode::Double, 1, 3, 16).is_err());
    }
}
