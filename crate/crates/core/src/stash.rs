//! Small on-chip store for elements waiting to be placed.
//!
//! Small stashes are scanned. Past `INDEX_THRESHOLD` entries lookups go
//! through a key index instead, so a stash that grows large (as it does
//! when `t` is too small) stays usable.

use rustc_hash::FxHashMap;

use rand::Rng;

use crate::error::{EmomaError, Result};
use crate::store::Entry;
use crate::{Key, Value};

pub const DEFAULT_STASH_CAPACITY: usize = 64;

const INDEX_THRESHOLD: usize = 32;

#[derive(Debug, Clone)]
pub struct Stash {
    capacity: usize,
    entries: Vec<Entry>,
    index: Option<FxHashMap<Key, usize>>,
    watermark: usize,
}

impl Stash {
    pub fn new(capacity: usize) -> Self {
        Stash {
            capacity,
            entries: Vec::with_capacity(capacity.min(1024)),
            index: None,
            watermark: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest size reached since creation or the last watermark reset.
    pub fn watermark(&self) -> usize {
        self.watermark
    }

    /// Restarts the watermark from the current size.
    pub fn reset_watermark(&mut self) {
        self.watermark = self.entries.len();
    }

    /// Adds an entry. A full stash is a structural failure: the entry is not
    /// stored and the caller has to treat the dictionary as failed.
    pub fn put(&mut self, key: Key, value: Value) -> Result<()> {
        if self.entries.len() >= self.capacity {
            return Err(EmomaError::StashOverflow {
                capacity: self.capacity,
            });
        }
        debug_assert!(!self.contains(key), "duplicate stash key");
        if let Some(index) = &mut self.index {
            index.insert(key, self.entries.len());
        } else if self.entries.len() == INDEX_THRESHOLD {
            let mut index: FxHashMap<Key, usize> = self
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| (e.key, i))
                .collect();
            index.insert(key, self.entries.len());
            self.index = Some(index);
        }
        self.entries.push(Entry { key, value });
        self.watermark = self.watermark.max(self.entries.len());
        Ok(())
    }

    fn position(&self, key: Key) -> Option<usize> {
        match &self.index {
            Some(index) => index.get(&key).copied(),
            None => self.entries.iter().position(|e| e.key == key),
        }
    }

    pub fn lookup(&self, key: Key) -> Option<Value> {
        self.position(key).map(|i| self.entries[i].value)
    }

    pub fn contains(&self, key: Key) -> bool {
        self.position(key).is_some()
    }

    fn remove_at(&mut self, i: usize) -> Entry {
        let entry = self.entries.swap_remove(i);
        if let Some(index) = &mut self.index {
            index.remove(&entry.key);
            if let Some(moved) = self.entries.get(i) {
                index.insert(moved.key, i);
            }
            if self.entries.is_empty() {
                self.index = None;
            }
        }
        entry
    }

    /// Removes and returns a uniformly chosen entry.
    pub fn take_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Entry> {
        if self.entries.is_empty() {
            return None;
        }
        let i = rng.gen_range(0..self.entries.len());
        Some(self.remove_at(i))
    }

    pub fn take(&mut self, key: Key) -> Option<Entry> {
        let i = self.position(key)?;
        Some(self.remove_at(i))
    }

    pub fn remove(&mut self, key: Key) -> bool {
        self.take(key).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter()
    }
}
