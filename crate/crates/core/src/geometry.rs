//! Address arithmetic for the DRAM cache: block, section and set
//! decomposition, the static in-set position, and placement of data rows
//! and tag rows onto DRAM banks.
//!
//! A *section* is `ways_per_set` consecutive blocks; every block of a section
//! maps to the same set, and the static position of a block is its offset
//! inside the section. Tag batches for the sets stored in one bank are kept in
//! tag rows of a partner bank, so a tag batch and any data line of the same
//! set can always be fetched concurrently.

use crate::error::ConfigIssue;

/// Upper bound on physical addresses accepted by the simulator.
pub const ADDRESS_BITS: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CacheGeometry {
    pub block_size: u64,
    pub ways_per_set: u64,
    pub cache_capacity: u64,
    pub tag_size: u64,
    pub row_size: u64,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        Self {
            block_size: 64,
            ways_per_set: 16,
            cache_capacity: 4 << 20,
            tag_size: 4,
            row_size: 2048,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockLocator {
    pub block_id: u64,
    pub section_id: u64,
    pub set_index: u64,
    pub static_pos: usize,
}

impl BlockLocator {
    /// Rebuilds the block id from the section id and the static position.
    pub fn reconstruct_block_id(&self, ways_per_set: u64) -> u64 {
        self.section_id * ways_per_set + self.static_pos as u64
    }
}

/// A bank/row coordinate on one DRAM device. `bank` is the device-global bank
/// index; its channel is `bank % channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DramLocation {
    pub bank: usize,
    pub row: u64,
}

/// Channel and bank counts of a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankGrid {
    pub channels: usize,
    pub banks_per_channel: usize,
}

impl BankGrid {
    pub fn total(&self) -> usize {
        self.channels * self.banks_per_channel
    }

    pub fn channel_of(&self, bank: usize) -> usize {
        bank % self.channels
    }

    /// Spreads consecutive row indices over channels first, then banks.
    pub fn interleave(&self, row_index: u64) -> DramLocation {
        let total = self.total() as u64;
        DramLocation {
            bank: (row_index % total) as usize,
            row: row_index / total,
        }
    }

    /// The bank holding tag rows for the sets whose data lives in `bank`.
    /// Always a different bank, and on a different channel whenever the
    /// device has more than one.
    pub fn partner(&self, bank: usize) -> usize {
        let c = self.channel_of(bank);
        let i = bank / self.channels;
        if self.channels > 1 {
            (c + 1) % self.channels + self.channels * i
        } else {
            (i + self.banks_per_channel / 2) % self.banks_per_channel
        }
    }
}

/// Where a set's data line and tag batch live on the cache device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub data_bank: usize,
    pub data_row: u64,
    pub tag_bank: usize,
    pub tag_row: u64,
}

impl CacheGeometry {
    /// Builds a geometry with a fixed number of sets; capacity follows.
    pub fn with_sets(
        num_sets: u64,
        ways_per_set: u64,
        block_size: u64,
        tag_size: u64,
        row_size: u64,
    ) -> Self {
        Self {
            block_size,
            ways_per_set,
            cache_capacity: num_sets * ways_per_set * block_size,
            tag_size,
            row_size,
        }
    }

    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        if self.block_size == 0 || !self.block_size.is_power_of_two() {
            issues.push(ConfigIssue::new(
                "geometry.block_size",
                format!("must be a power of two, got {}", self.block_size),
            ));
        }
        if self.ways_per_set == 0 {
            issues.push(ConfigIssue::new("geometry.ways", "must be at least 1"));
        }
        if self.tag_size == 0 {
            issues.push(ConfigIssue::new("geometry.tag_size", "must be at least 1"));
        }
        if !issues.is_empty() {
            return issues;
        }
        let set_bytes = self.set_bytes();
        if self.cache_capacity == 0 || !self.cache_capacity.is_multiple_of(set_bytes) {
            issues.push(ConfigIssue::new(
                "geometry.cache_capacity",
                format!(
                    "{} is not a positive multiple of the set size {} (block_size x ways)",
                    self.cache_capacity, set_bytes
                ),
            ));
        }
        if self.row_size == 0 || !self.row_size.is_multiple_of(self.block_size) {
            issues.push(ConfigIssue::new(
                "geometry.row_size",
                format!(
                    "{} is not a multiple of block_size {}",
                    self.row_size, self.block_size
                ),
            ));
        } else if !self.row_size.is_multiple_of(set_bytes)
            && !set_bytes.is_multiple_of(self.row_size)
        {
            issues.push(ConfigIssue::new(
                "geometry.row_size",
                format!(
                    "row size {} must hold a whole number of sets or a set a whole number of rows (set = {} bytes)",
                    self.row_size, set_bytes
                ),
            ));
        }
        if self.batch_bytes() > self.block_size {
            issues.push(ConfigIssue::new(
                "geometry.tag_size",
                format!(
                    "tag batch of {} bytes exceeds one {}-byte burst unit",
                    self.batch_bytes(),
                    self.block_size
                ),
            ));
        }
        issues
    }

    pub fn num_sets(&self) -> u64 {
        self.cache_capacity / self.set_bytes()
    }

    pub fn set_bytes(&self) -> u64 {
        self.block_size * self.ways_per_set
    }

    /// Bytes of one set's tags; transferred as a single burst unit.
    pub fn batch_bytes(&self) -> u64 {
        self.ways_per_set * self.tag_size
    }

    pub fn num_blocks(&self) -> u64 {
        self.cache_capacity / self.block_size
    }

    fn block_shift(&self) -> u32 {
        self.block_size.trailing_zeros()
    }

    pub fn block_id(&self, addr: u64) -> u64 {
        addr >> self.block_shift()
    }

    pub fn locate(&self, addr: u64) -> BlockLocator {
        self.locate_block(self.block_id(addr))
    }

    pub fn locate_block(&self, block_id: u64) -> BlockLocator {
        let section_id = block_id / self.ways_per_set;
        BlockLocator {
            block_id,
            section_id,
            set_index: section_id % self.num_sets(),
            static_pos: (block_id % self.ways_per_set) as usize,
        }
    }

    fn sets_per_group(&self) -> u64 {
        (self.row_size / self.set_bytes()).max(1)
    }

    fn rows_per_group(&self) -> u64 {
        (self.set_bytes() / self.row_size).max(1)
    }

    /// Data location of one way of a set. All rows of a set sit in one bank.
    pub fn data_location(&self, set_index: u64, way: usize, grid: BankGrid) -> DramLocation {
        let group = set_index / self.sets_per_group();
        let base = grid.interleave(group);
        let row_in_set = (way as u64 * self.block_size) / self.row_size;
        let rows_per_group = self.rows_per_group();
        let row = if rows_per_group > 1 {
            base.row * rows_per_group + row_in_set
        } else {
            base.row
        };
        DramLocation {
            bank: base.bank,
            row,
        }
    }

    /// Tag-row location of a set's batch, always in the partner bank of the
    /// set's data bank. Tag rows are numbered above that bank's data rows.
    pub fn tag_location(&self, set_index: u64, grid: BankGrid) -> DramLocation {
        let spg = self.sets_per_group();
        let group = set_index / spg;
        let total = grid.total() as u64;
        let data_bank = (group % total) as usize;
        let slot = (group / total) * spg + set_index % spg;
        let batches_per_row = (self.row_size / self.block_size).max(1);
        let groups = self.num_sets().div_ceil(spg);
        let data_rows_per_bank = groups.div_ceil(total) * self.rows_per_group();
        DramLocation {
            bank: grid.partner(data_bank),
            row: data_rows_per_bank + slot / batches_per_row,
        }
    }

    pub fn placement(&self, loc: &BlockLocator, grid: BankGrid) -> Placement {
        let data = self.data_location(loc.set_index, loc.static_pos, grid);
        let tag = self.tag_location(loc.set_index, grid);
        Placement {
            data_bank: data.bank,
            data_row: data.row,
            tag_bank: tag.bank,
            tag_row: tag.row,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CacheGeometry {
        CacheGeometry {
            cache_capacity: 4 * 16 * 64,
            ..CacheGeometry::default()
        }
    }

    const GRID: BankGrid = BankGrid {
        channels: 4,
        banks_per_channel: 16,
    };

    #[test]
    fn locate_examples() {
        let g = small();
        assert_eq!(g.num_sets(), 4);
        let at = |addr| {
            let l = g.locate(addr);
            (l.block_id, l.section_id, l.set_index, l.static_pos)
        };
        assert_eq!(at(0x0000), (0, 0, 0, 0));
        assert_eq!(at(0x0440), (17, 1, 1, 1));
        assert_eq!(at(0x1000), (64, 4, 0, 0));
    }

    #[test]
    fn section_shares_set_with_distinct_positions() {
        let g = CacheGeometry::default();
        for section in [0u64, 1, 4095, 4096, 99_999] {
            let locs: Vec<_> = (0..16).map(|i| g.locate_block(section * 16 + i)).collect();
            assert!(locs.iter().all(|l| l.set_index == locs[0].set_index));
            let positions: Vec<_> = locs.iter().map(|l| l.static_pos).collect();
            assert_eq!(positions, (0..16).collect::<Vec<_>>());
        }
    }

    #[test]
    fn tag_bank_never_matches_data_bank() {
        let g = CacheGeometry::default();
        for grid in [
            GRID,
            BankGrid {
                channels: 1,
                banks_per_channel: 8,
            },
            BankGrid {
                channels: 2,
                banks_per_channel: 1,
            },
        ] {
            for set in 0..g.num_sets() {
                let tag = g.tag_location(set, grid);
                for way in 0..16 {
                    assert_ne!(tag.bank, g.data_location(set, way, grid).bank, "set {set}");
                }
            }
        }
    }

    #[test]
    fn set_zero_placement() {
        let g = CacheGeometry::default();
        let p = g.placement(&g.locate(0), GRID);
        assert_eq!(p.data_bank, 0);
        assert_ne!(p.tag_bank, 0);
        assert_eq!(p, g.placement(&g.locate(0), GRID));
    }

    #[test]
    fn data_banks_evenly_occupied() {
        let g = CacheGeometry::default();
        let mut occupancy = vec![0u64; GRID.total()];
        for set in 0..g.num_sets() {
            occupancy[g.data_location(set, 0, GRID).bank] += 1;
        }
        let max = *occupancy.iter().max().unwrap();
        let min = *occupancy.iter().min().unwrap();
        assert!(min > 0 && max <= 2 * min, "{occupancy:?}");
    }

    #[test]
    fn tag_rows_do_not_collide_with_data_rows() {
        let g = CacheGeometry::default();
        let mut data_rows = std::collections::HashSet::new();
        for set in 0..g.num_sets() {
            data_rows.insert(g.data_location(set, 0, GRID));
        }
        for set in 0..g.num_sets() {
            assert!(!data_rows.contains(&g.tag_location(set, GRID)));
        }
        // 32 batches share each 2 KiB tag row.
        let distinct: std::collections::HashSet<_> =
            (0..g.num_sets()).map(|s| g.tag_location(s, GRID)).collect();
        assert_eq!(distinct.len() as u64, g.num_sets() / 32);
    }

    #[test]
    fn multi_row_sets_stay_in_one_bank() {
        let g = CacheGeometry {
            row_size: 512,
            ..CacheGeometry::default()
        };
        assert!(g.validate().is_empty());
        for set in 0..64 {
            let bank = g.data_location(set, 0, GRID).bank;
            let rows: std::collections::HashSet<_> =
                (0..16).map(|w| g.data_location(set, w, GRID)).collect();
            assert_eq!(rows.len(), 2);
            assert!(rows.iter().all(|l| l.bank == bank));
            assert_ne!(g.tag_location(set, GRID).bank, bank);
        }
    }

    #[test]
    fn validation_names_offending_keys() {
        let bad = CacheGeometry {
            cache_capacity: 1000,
            ..CacheGeometry::default()
        };
        let issues = bad.validate();
        assert!(issues.iter().any(|i| i.key == "geometry.cache_capacity"));

        let bad = CacheGeometry {
            block_size: 48,
            ..CacheGeometry::default()
        };
        assert!(bad
            .validate()
            .iter()
            .any(|i| i.key == "geometry.block_size"));
        assert!(CacheGeometry::default().validate().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn locate_round_trips(addr in 0u64..(1 << ADDRESS_BITS), sets_log in 0u32..12) {
                let g = CacheGeometry { cache_capacity: (1u64 << sets_log) * 1024, ..CacheGeometry::default() };
                let l = g.locate(addr);
                prop_assert_eq!(l.reconstruct_block_id(16), addr >> 6);
                prop_assert_eq!(l.set_index, l.section_id % g.num_sets());
                prop_assert_eq!(l.static_pos as u64, l.block_id % 16);
            }
        }
    }
}
