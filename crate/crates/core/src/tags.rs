//! Tag state: per-way tag entries and the on-chip SRAM tag cache.
//!
//! The authoritative tags of every set live in the tag store owned by a
//! controller (one [`crate::policy::SetView`] per set). The tag cache only
//! tracks which sets currently have their batch on chip, which batches are
//! being fetched, and whether a resident batch was modified since it was
//! fetched (so eviction knows whether to write it back).

use std::collections::HashMap;

use crate::policy::BlockType;

/// One way's tag with its replacement and type-tracking bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TagEntry {
    pub valid: bool,
    pub block_id: u64,
    pub dirty: bool,
    /// Reference bit (A).
    pub referenced: bool,
    /// Priority bit (H). Set for leading blocks.
    pub priority: bool,
    /// Two-bit type-variation filter (C).
    pub filter: u8,
    /// Priority is being held by reservation although the block was last
    /// accessed as a following block.
    pub reserved: bool,
}

impl TagEntry {
    pub fn fill(block_id: u64, block_type: BlockType) -> Self {
        Self {
            valid: true,
            block_id,
            dirty: false,
            referenced: true,
            priority: block_type == BlockType::Leading,
            filter: 0,
            reserved: false,
        }
    }

    /// Type recorded for this block: the priority bit, unless it is only
    /// being held by reservation.
    pub fn stored_type(&self) -> BlockType {
        if self.priority && !self.reserved {
            BlockType::Leading
        } else {
            BlockType::Following
        }
    }

    /// Protected from masked CLOCK sweeps.
    pub fn is_high_priority(&self) -> bool {
        self.valid && self.priority
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
    InFlight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evicted {
    pub key: u64,
    pub modified: bool,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    key: u64,
    modified: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TagCacheStats {
    pub lookups: u64,
    pub hits: u64,
    pub installs: u64,
    pub evictions: u64,
    pub dirty_evictions: u64,
}

/// Set-associative SRAM cache of tag batches (or single tags for the
/// direct-mapped design) with exact LRU replacement.
#[derive(Debug, Clone)]
pub struct TagCache {
    // each set is ordered most-recently-used first
    sets: Vec<Vec<Slot>>,
    assoc: usize,
    latency: u64,
    in_flight: HashMap<u64, Vec<u64>>,
    pub stats: TagCacheStats,
}

impl TagCache {
    /// `entries` must be a multiple of `assoc` with a power-of-two set count.
    pub fn new(entries: usize, assoc: usize, latency: u64) -> Self {
        assert!(assoc > 0 && entries >= assoc && entries.is_multiple_of(assoc));
        let num_sets = entries / assoc;
        assert!(
            num_sets.is_power_of_two(),
            "tag cache set count must be a power of two"
        );
        Self {
            sets: vec![Vec::with_capacity(assoc); num_sets],
            assoc,
            latency,
            in_flight: HashMap::new(),
            stats: TagCacheStats::default(),
        }
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    pub fn capacity(&self) -> usize {
        self.sets.len() * self.assoc
    }

    fn index(&self, key: u64) -> usize {
        (key as usize) & (self.sets.len() - 1)
    }

    /// State of `key` without touching recency or statistics.
    pub fn probe(&self, key: u64) -> Lookup {
        if self.in_flight.contains_key(&key) {
            Lookup::InFlight
        } else if self.sets[self.index(key)].iter().any(|s| s.key == key) {
            Lookup::Hit
        } else {
            Lookup::Miss
        }
    }

    /// Demand lookup: refreshes recency on a hit and counts the access.
    /// An in-flight batch counts as a hit since it triggers no new fetch.
    pub fn lookup(&mut self, key: u64) -> Lookup {
        self.stats.lookups += 1;
        let result = self.probe(key);
        match result {
            Lookup::Hit => {
                self.touch(key);
                self.stats.hits += 1;
            }
            Lookup::InFlight => self.stats.hits += 1,
            Lookup::Miss => {}
        }
        result
    }

    fn touch(&mut self, key: u64) {
        let idx = self.index(key);
        let set = &mut self.sets[idx];
        if let Some(pos) = set.iter().position(|s| s.key == key) {
            let slot = set.remove(pos);
            set.insert(0, slot);
        }
    }

    pub fn begin_fetch(&mut self, key: u64) {
        debug_assert_eq!(self.probe(key), Lookup::Miss, "fetch of a present batch");
        self.in_flight.insert(key, Vec::new());
    }

    /// Parks a request until the in-flight batch for `key` arrives.
    pub fn wait_for(&mut self, key: u64, waiter: u64) {
        self.in_flight
            .get_mut(&key)
            .expect("waiting on a batch that is not in flight")
            .push(waiter);
    }

    /// Makes `key` resident. Returns the LRU victim (if the set was full) and
    /// the requests that were waiting on the fetch.
    pub fn install(&mut self, key: u64) -> (Option<Evicted>, Vec<u64>) {
        let waiters = self.in_flight.remove(&key).unwrap_or_default();
        let idx = self.index(key);
        let assoc = self.assoc;
        let set = &mut self.sets[idx];
        assert!(
            !set.iter().any(|s| s.key == key),
            "double install of tag batch {key}"
        );
        let evicted = if set.len() == assoc {
            set.pop().map(|s| Evicted {
                key: s.key,
                modified: s.modified,
            })
        } else {
            None
        };
        set.insert(
            0,
            Slot {
                key,
                modified: false,
            },
        );
        self.stats.installs += 1;
        if let Some(e) = evicted {
            self.stats.evictions += 1;
            if e.modified {
                self.stats.dirty_evictions += 1;
            }
        }
        (evicted, waiters)
    }

    /// Installs `key` unless it is already resident or in flight (used for
    /// neighbouring-tag prefetch).
    pub fn install_if_absent(&mut self, key: u64) -> Option<Evicted> {
        if self.probe(key) == Lookup::Miss {
            self.install(key).0
        } else {
            None
        }
    }

    /// Flags a resident batch as modified; returns false if it is not resident.
    pub fn mark_modified(&mut self, key: u64) -> bool {
        let idx = self.index(key);
        match self.sets[idx].iter_mut().find(|s| s.key == key) {
            Some(slot) => {
                slot.modified = true;
                true
            }
            None => false,
        }
    }

    pub fn is_modified(&self, key: u64) -> Option<bool> {
        self.sets[self.index(key)]
            .iter()
            .find(|s| s.key == key)
            .map(|s| s.modified)
    }

    pub fn resident_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn in_flight_count(&self) -> usize {
        self.in_flight.len()
    }

    /// Resident keys of one tag-cache set in LRU order, oldest first.
    pub fn lru_order(&self, key: u64) -> Vec<u64> {
        self.sets[self.index(key)]
            .iter()
            .rev()
            .map(|s| s.key)
            .collect()
    }

    pub fn hit_rate(&self) -> f64 {
        if self.stats.lookups == 0 {
            0.0
        } else {
            self.stats.hits as f64 / self.stats.lookups as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference LRU over one tag-cache set: a plain list, most recent last.
    fn reference_lru(sequence: &[u64], assoc: usize) -> Vec<u64> {
        let mut list: Vec<u64> = Vec::new();
        for &k in sequence {
            list.retain(|&x| x != k);
            if list.len() == assoc {
                list.remove(0);
            }
            list.push(k);
        }
        list
    }

    #[test]
    fn empty_cache_misses() {
        let mut tc = TagCache::new(64, 8, 9);
        assert_eq!(tc.lookup(5), Lookup::Miss);
    }

    #[test]
    fn install_then_hit() {
        let mut tc = TagCache::new(64, 8, 9);
        tc.begin_fetch(5);
        assert_eq!(tc.lookup(5), Lookup::InFlight);
        let (evicted, waiters) = tc.install(5);
        assert_eq!(evicted, None);
        assert!(waiters.is_empty());
        assert_eq!(tc.lookup(5), Lookup::Hit);
        assert_eq!(tc.latency(), 9);
    }

    #[test]
    fn ninth_colliding_batch_evicts_lru() {
        // 8 sets of 8 ways; keys 0, 8, 16, ... collide in set 0.
        let mut tc = TagCache::new(64, 8, 9);
        let keys: Vec<u64> = (0..9).map(|i| i * 8).collect();
        let mut evictions = Vec::new();
        for &k in &keys {
            tc.begin_fetch(k);
            evictions.push(tc.install(k).0);
        }
        assert!(evictions[..8].iter().all(Option::is_none));
        let expected_left = reference_lru(&keys, 8);
        assert!(!expected_left.contains(&0));
        assert_eq!(evictions[8].map(|e| e.key), Some(0));
        assert_eq!(tc.lookup(0), Lookup::Miss);
        assert_eq!(tc.lru_order(0), expected_left);
    }

    #[test]
    fn hit_refreshes_recency() {
        let mut tc = TagCache::new(64, 8, 9);
        let mut seq = Vec::new();
        for i in 0..8 {
            tc.install(i * 8);
            seq.push(i * 8);
        }
        assert_eq!(tc.lookup(0), Lookup::Hit);
        seq.push(0);
        let (evicted, _) = tc.install(64);
        seq.push(64);
        assert_eq!(evicted.map(|e| e.key), Some(8));
        assert_eq!(tc.lru_order(0), reference_lru(&seq, 8));
    }

    #[test]
    fn waiters_released_on_install() {
        let mut tc = TagCache::new(16, 8, 9);
        tc.begin_fetch(3);
        tc.wait_for(3, 100);
        tc.wait_for(3, 101);
        let (_, waiters) = tc.install(3);
        assert_eq!(waiters, vec![100, 101]);
        assert_eq!(tc.in_flight_count(), 0);
    }

    #[test]
    fn modified_flag_reported_on_eviction() {
        let mut tc = TagCache::new(8, 8, 9);
        for k in 0..8 {
            tc.install(k);
        }
        assert!(tc.mark_modified(0));
        assert!(tc.mark_modified(0));
        let (e, _) = tc.install(8);
        assert_eq!(
            e,
            Some(Evicted {
                key: 0,
                modified: true
            })
        );
        let (e, _) = tc.install(9);
        assert_eq!(
            e,
            Some(Evicted {
                key: 1,
                modified: false
            })
        );
        assert!(!tc.mark_modified(1));
    }

    #[test]
    #[should_panic(expected = "double install")]
    fn double_install_panics() {
        let mut tc = TagCache::new(16, 8, 9);
        tc.install(1);
        tc.install(1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matches_reference_lru(seq in proptest::collection::vec(0u64..40, 1..200)) {
                // single-set cache so every key collides
                let mut tc = TagCache::new(8, 8, 9);
                let mut touched = Vec::new();
                for &k in &seq {
                    if tc.lookup(k) == Lookup::Miss {
                        tc.install(k);
                    }
                    touched.push(k);
                    prop_assert!(tc.resident_count() <= 8);
                }
                prop_assert_eq!(tc.lru_order(0), reference_lru(&touched, 8));
            }
        }
    }
}
