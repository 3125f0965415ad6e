//! Block-type classification and the hybrid mapping policy.
//!
//! Leading blocks (the access that brings a set's tag batch on chip) are kept
//! at their static position inside the set; following blocks are placed by
//! RV-CLOCK. A block whose type changes is handled by the mapping policy:
//! losing leading status clears its priority bit, gaining it moves the block
//! to its static position. A two-bit filter counts short following runs and
//! holds the priority bit of blocks that keep flipping type.

use crate::tags::{Lookup, TagEntry};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub enum BlockType {
    Leading,
    Following,
}

/// A request is leading iff its set's batch is neither resident nor being
/// fetched when the request arrives.
pub fn classify(state: Lookup) -> BlockType {
    match state {
        Lookup::Miss => BlockType::Leading,
        Lookup::Hit | Lookup::InFlight => BlockType::Following,
    }
}

/// The tags of one set plus the persistent CLOCK hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetView {
    pub ways: Vec<TagEntry>,
    pub hand: usize,
}

impl SetView {
    pub fn new(ways: usize) -> Self {
        Self {
            ways: vec![TagEntry::default(); ways],
            hand: 0,
        }
    }

    pub fn find(&self, block_id: u64) -> Option<usize> {
        self.ways
            .iter()
            .position(|e| e.valid && e.block_id == block_id)
    }

    pub fn valid_count(&self) -> usize {
        self.ways.iter().filter(|e| e.valid).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingAction {
    None,
    SetPriority {
        way: usize,
    },
    ClearPriority {
        way: usize,
    },
    /// The static position holds a recently referenced leading block: give it
    /// a second chance instead of migrating.
    ClearStaticReference {
        static_pos: usize,
    },
    /// Move the block to its static position, evicting the occupant
    /// (written back first if dirty).
    Migrate {
        from: usize,
        to: usize,
        writeback: bool,
    },
}

/// The mapping policy for one access: a pure decision over the set state.
pub fn mapping_action(
    set: &SetView,
    way: usize,
    static_pos: usize,
    last: BlockType,
    current: BlockType,
) -> MappingAction {
    use BlockType::*;
    match (last, current) {
        (Leading, Following) => MappingAction::ClearPriority { way },
        (Following, Leading) if way == static_pos => MappingAction::SetPriority { way },
        (Following, Leading) => {
            let occupant = &set.ways[static_pos];
            if occupant.valid && occupant.stored_type() == Leading && occupant.referenced {
                MappingAction::ClearStaticReference { static_pos }
            } else {
                MappingAction::Migrate {
                    from: way,
                    to: static_pos,
                    writeback: occupant.valid && occupant.dirty,
                }
            }
        }
        _ => MappingAction::None,
    }
}

/// Applies a mapping action. Returns the entry displaced by a migration, if
/// the static position was occupied.
pub fn apply_mapping_action(set: &mut SetView, action: MappingAction) -> Option<TagEntry> {
    match action {
        MappingAction::None => None,
        MappingAction::SetPriority { way } => {
            set.ways[way].priority = true;
            set.ways[way].reserved = false;
            None
        }
        MappingAction::ClearPriority { way } => {
            set.ways[way].priority = false;
            set.ways[way].reserved = false;
            None
        }
        MappingAction::ClearStaticReference { static_pos } => {
            set.ways[static_pos].referenced = false;
            None
        }
        MappingAction::Migrate { from, to, .. } => {
            let occupant = set.ways[to];
            let mut moved = set.ways[from];
            moved.priority = true;
            moved.reserved = false;
            set.ways[to] = moved;
            set.ways[from] = TagEntry::default();
            occupant.valid.then_some(occupant)
        }
    }
}

/// Events seen by the type-variation filter, keyed by the stored type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterEvent {
    FollowingToLeading,
    FollowingToFollowing,
    /// Any access while the stored type is leading.
    FromLeading,
}

pub const FILTER_MAX: u8 = 3;

pub fn filter_update(counter: u8, event: FilterEvent) -> u8 {
    debug_assert!(counter <= FILTER_MAX);
    match event {
        FilterEvent::FollowingToLeading => (counter + 2).min(FILTER_MAX),
        FilterEvent::FollowingToFollowing => counter.saturating_sub(1),
        FilterEvent::FromLeading => counter,
    }
}

/// Whether a leading-to-following transition keeps its priority bit.
pub fn priority_reservation(counter: u8) -> bool {
    counter != 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyConfig {
    pub filter_enabled: bool,
    pub reservation_enabled: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            filter_enabled: true,
            reservation_enabled: true,
        }
    }
}

/// Everything a hit did to the set, for the controller to act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HitEffects {
    pub last: BlockType,
    pub action: MappingAction,
    /// Way holding the block afterwards.
    pub way: usize,
    /// Occupant displaced by a migration.
    pub displaced: Option<TagEntry>,
    /// On a following-to-leading transition: whether the filter had flagged
    /// the block (counter nonzero before the increment).
    pub filter_flag: Option<bool>,
    /// Priority bit held by reservation on this access.
    pub reserved: bool,
    /// Any tag bit changed.
    pub modified: bool,
}

/// Runs the full per-hit policy: filter update, reservation, the mapping
/// policy, and the reference bit.
pub fn on_hit(
    set: &mut SetView,
    way: usize,
    static_pos: usize,
    current: BlockType,
    cfg: PolicyConfig,
) -> HitEffects {
    let before = set.clone();
    let last = set.ways[way].stored_type();
    let mut filter_flag = None;
    let mut reserved = false;

    if cfg.filter_enabled {
        let entry = &mut set.ways[way];
        match (last, current) {
            (BlockType::Following, BlockType::Leading) => {
                filter_flag = Some(entry.filter != 0);
                entry.filter = filter_update(entry.filter, FilterEvent::FollowingToLeading);
            }
            (BlockType::Following, BlockType::Following) => {
                entry.filter = filter_update(entry.filter, FilterEvent::FollowingToFollowing);
                if entry.reserved && entry.filter == 0 {
                    // the run outlasted the filter: release the held priority
                    entry.priority = false;
                    entry.reserved = false;
                }
            }
            (BlockType::Leading, _) => {
                entry.filter = filter_update(entry.filter, FilterEvent::FromLeading);
            }
        }
    }

    let mut action = mapping_action(set, way, static_pos, last, current);
    if let MappingAction::ClearPriority { way } = action {
        let entry = &mut set.ways[way];
        if cfg.filter_enabled && cfg.reservation_enabled && priority_reservation(entry.filter) {
            entry.reserved = true;
            reserved = true;
            action = MappingAction::None;
        }
    }
    let displaced = apply_mapping_action(set, action);
    let final_way = match action {
        MappingAction::Migrate { to, .. } => to,
        _ => way,
    };
    set.ways[final_way].referenced = true;

    HitEffects {
        last,
        action,
        way: final_way,
        displaced,
        filter_flag,
        reserved,
        modified: *set != before,
    }
}

/// Plain CLOCK over every way: clears reference bits as the hand passes and
/// stops at the first way with a clear bit. Invalid ways are taken first.
pub fn clock_victim(set: &mut SetView) -> usize {
    if let Some(w) = set.ways.iter().position(|e| !e.valid) {
        return w;
    }
    sweep(set, |_| true)
}

/// RV-CLOCK victim for inserting a following block.
///
/// If some following way still has its reference bit clear, the sweep is
/// restricted to following ways and leading ways are skipped untouched.
/// Otherwise the sweep covers the whole set.
pub fn rv_clock_victim(set: &mut SetView) -> usize {
    if let Some(w) = set.ways.iter().position(|e| !e.valid) {
        return w;
    }
    let masked = set
        .ways
        .iter()
        .any(|e| !e.is_high_priority() && !e.referenced);
    if masked {
        sweep(set, |e| !e.is_high_priority())
    } else {
        sweep(set, |_| true)
    }
}

fn sweep(set: &mut SetView, in_range: impl Fn(&TagEntry) -> bool) -> usize {
    let n = set.ways.len();
    // two laps always suffice: the first clears every in-range bit
    for _ in 0..2 * n {
        let w = set.hand;
        set.hand = (set.hand + 1) % n;
        let e = &mut set.ways[w];
        if !in_range(e) {
            continue;
        }
        if e.referenced {
            e.referenced = false;
        } else {
            return w;
        }
    }
    unreachable!("CLOCK sweep found no victim in a nonempty range")
}

/// Fills a leading block at its static position. Returns the evicted
/// occupant, if any.
pub fn leading_fill(set: &mut SetView, static_pos: usize, block_id: u64) -> Option<TagEntry> {
    let occupant = set.ways[static_pos];
    set.ways[static_pos] = TagEntry::fill(block_id, BlockType::Leading);
    occupant.valid.then_some(occupant)
}

/// Fills a following block at the RV-CLOCK victim. Returns the way used and
/// the evicted occupant, if any.
pub fn following_fill(set: &mut SetView, block_id: u64) -> (usize, Option<TagEntry>) {
    let way = rv_clock_victim(set);
    let occupant = set.ways[way];
    set.ways[way] = TagEntry::fill(block_id, BlockType::Following);
    (way, occupant.valid.then_some(occupant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use BlockType::*;

    fn entry(block_id: u64, t: BlockType, a: bool) -> TagEntry {
        TagEntry {
            valid: true,
            block_id,
            referenced: a,
            priority: t == Leading,
            ..TagEntry::default()
        }
    }

    fn set_of(ways: &[(BlockType, bool)]) -> SetView {
        SetView {
            ways: ways
                .iter()
                .enumerate()
                .map(|(i, &(t, a))| entry(100 + i as u64, t, a))
                .collect(),
            hand: 0,
        }
    }

    #[test]
    fn classify_by_batch_state() {
        assert_eq!(classify(Lookup::Hit), Following);
        assert_eq!(classify(Lookup::Miss), Leading);
        assert_eq!(classify(Lookup::InFlight), Following);
    }

    #[test]
    fn rv_clock_examples() {
        assert_eq!(rv_clock_victim(&mut SetView::new(4)), 0);

        let mut s = set_of(&[
            (Leading, true),
            (Following, false),
            (Following, true),
            (Leading, false),
        ]);
        assert_eq!(rv_clock_victim(&mut s), 1);
        assert!(
            s.ways[0].referenced,
            "masked sweep must not touch leading ways"
        );
        assert_eq!(s.hand, 2);

        let mut s = set_of(&[
            (Leading, true),
            (Following, true),
            (Following, true),
            (Leading, false),
        ]);
        assert_eq!(rv_clock_victim(&mut s), 3);
        assert!(s.ways[..3].iter().all(|e| !e.referenced));
        assert_eq!(s.hand, 0);
    }

    #[test]
    fn rv_clock_all_leading_referenced_falls_back_to_whole_set() {
        let mut s = set_of(&[(Leading, true); 4]);
        s.hand = 2;
        assert_eq!(rv_clock_victim(&mut s), 2);
    }

    #[test]
    fn hand_persists_between_calls() {
        let mut s = set_of(&[(Following, false); 4]);
        assert_eq!(rv_clock_victim(&mut s), 0);
        assert_eq!(rv_clock_victim(&mut s), 1);
        assert_eq!(rv_clock_victim(&mut s), 2);
    }

    #[test]
    fn filter_examples() {
        assert_eq!(filter_update(0, FilterEvent::FollowingToLeading), 2);
        assert_eq!(filter_update(0, FilterEvent::FollowingToFollowing), 0);
        assert_eq!(filter_update(3, FilterEvent::FollowingToLeading), 3);
        assert_eq!(filter_update(2, FilterEvent::FromLeading), 2);
        assert!(priority_reservation(2));
        assert!(!priority_reservation(0));
    }

    #[test]
    fn leading_to_following_clears_priority_without_filter_history() {
        let mut s = set_of(&[(Leading, true), (Following, true)]);
        let fx = on_hit(&mut s, 0, 0, Following, PolicyConfig::default());
        assert_eq!(fx.action, MappingAction::ClearPriority { way: 0 });
        assert!(!s.ways[0].priority);
    }

    #[test]
    fn reservation_holds_priority_when_counter_nonzero() {
        let mut s = set_of(&[(Leading, true), (Following, true)]);
        s.ways[0].filter = 2;
        let fx = on_hit(&mut s, 0, 0, Following, PolicyConfig::default());
        assert!(fx.reserved);
        assert!(s.ways[0].priority);
        assert_eq!(s.ways[0].stored_type(), Following);
    }

    #[test]
    fn alternating_types_keep_priority_after_warm_up() {
        let mut s = SetView::new(4);
        leading_fill(&mut s, 1, 7);
        let mut held = Vec::new();
        for i in 0..20 {
            let t = if i % 2 == 0 { Following } else { Leading };
            on_hit(&mut s, 1, 1, t, PolicyConfig::default());
            held.push(s.ways[1].priority);
        }
        // first L->F drops priority (counter cold); every later one holds it
        assert!(!held[0]);
        assert!(held[2..].iter().all(|&h| h));
    }

    #[test]
    fn migration_frees_old_way_and_evicts_occupant() {
        let mut s = set_of(&[(Following, false), (Following, true), (Following, true)]);
        s.ways[0].dirty = true;
        let fx = on_hit(&mut s, 2, 0, Leading, PolicyConfig::default());
        assert_eq!(
            fx.action,
            MappingAction::Migrate {
                from: 2,
                to: 0,
                writeback: true
            }
        );
        assert_eq!(fx.displaced.map(|e| e.block_id), Some(100));
        assert_eq!(s.ways[0].block_id, 102);
        assert!(s.ways[0].priority && s.ways[0].referenced);
        assert!(!s.ways[2].valid);
        assert_eq!(fx.way, 0);
    }

    #[test]
    fn stable_blocks_never_migrate() {
        let mut s = SetView::new(16);
        leading_fill(&mut s, 3, 3);
        let (w, _) = following_fill(&mut s, 20);
        for _ in 0..50 {
            assert_eq!(
                on_hit(&mut s, 3, 3, Leading, PolicyConfig::default()).action,
                MappingAction::None
            );
            assert_eq!(
                on_hit(&mut s, w, 4, Following, PolicyConfig::default()).action,
                MappingAction::None
            );
        }
    }

    #[test]
    fn unchanged_bits_report_unmodified() {
        let mut s = set_of(&[(Leading, true)]);
        let fx = on_hit(&mut s, 0, 0, Leading, PolicyConfig::default());
        assert!(!fx.modified);
        s.ways[0].referenced = false;
        assert!(on_hit(&mut s, 0, 0, Leading, PolicyConfig::default()).modified);
    }

    #[test]
    fn leading_fill_reports_occupant() {
        let mut s = SetView::new(4);
        assert_eq!(leading_fill(&mut s, 2, 9), None);
        let mut dirty = TagEntry::fill(5, Following);
        dirty.dirty = true;
        s.ways[1] = dirty;
        assert_eq!(leading_fill(&mut s, 1, 9).map(|e| e.dirty), Some(true));
        assert!(s.ways[1].priority && s.ways[1].referenced);
    }
}
