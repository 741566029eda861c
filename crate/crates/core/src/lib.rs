//! A cuckoo hash dictionary that answers every lookup with a single
//! external memory access.
//!
//! The table (two choices, four cells per bucket) models off-chip memory.
//! An on-chip counting block Bloom filter, whose block selector is the
//! table's first hash function, says which of the two buckets holds a key.
//! Insertions move keys around so that the filter is never wrong about a
//! stored key. A small stash holds keys in flight.
//!
//! ```
//! use emoma::{Emoma, EmomaConfig};
//!
//! let mut dict = Emoma::new(EmomaConfig::single(1 << 10).seed(7)).unwrap();
//! dict.insert(42, 4200).unwrap();
//! let before = dict.access_stats();
//! assert_eq!(dict.search(42), Some(4200));
//! assert_eq!(dict.access_stats().since(&before).offchip_reads, 1);
//! ```

pub mod baseline;
pub mod cbbf;
pub mod config;
pub mod dict;
pub mod emoma_dict;
pub mod error;
pub mod hash;
pub mod stash;
pub mod store;

pub type Key = u64;
pub type Value = u64;

pub use baseline::CuckooBaseline;
pub use cbbf::Cbbf;
pub use config::EmomaConfig;
pub use dict::{Dictionary, InsertOutcome, InvariantReport, Metrics, Violation};
pub use emoma_dict::{classify, BucketChoice, Conditions, Emoma};
pub use error::{EmomaError, Result};
pub use hash::{HasherSet, KeyHashes, Mode};
pub use stash::Stash;
pub use store::{AccessStats, Bucket, CuckooStore, Entry, Location, Placement, Side};
