//! Offline block-type analysis over per-access type records.

use std::collections::{BTreeMap, HashMap};

use crate::controller::TypeRecord;
use crate::policy::BlockType;

#[derive(Debug, Clone, Copy)]
struct History {
    last: BlockType,
    run: u64,
    accesses: u64,
    switched: bool,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TypeSummary {
    pub classified_accesses: u64,
    pub blocks: u64,
    pub reused_blocks: u64,
    pub switching_blocks: u64,
    /// Blocks that ever switched type over blocks accessed at least twice.
    pub transition_ratio: f64,
    /// Count of maximal constant-type runs by length.
    pub l_stable: BTreeMap<u64, u64>,
    pub batch_fetches: u64,
    /// Fetches whose triggering block was resident and so had a stored type.
    pub fetches_with_stored_type: u64,
    /// Share of those whose stored type was leading.
    pub tag_fetch_attribution: f64,
    /// Following-to-leading transitions of resident blocks, by the length of
    /// the following run that just ended: (flagged, total).
    pub filter_flags: BTreeMap<u64, (u64, u64)>,
}

impl TypeSummary {
    pub fn filter_flag_rate(&self, run_len: u64) -> Option<f64> {
        self.filter_flags
            .get(&run_len)
            .filter(|(_, n)| *n > 0)
            .map(|&(f, n)| f as f64 / n as f64)
    }

    /// Flag rate over all transitions whose run length satisfies `pred`.
    pub fn filter_flag_rate_where(&self, pred: impl Fn(u64) -> bool) -> Option<f64> {
        let (f, n) = self
            .filter_flags
            .iter()
            .filter(|(k, _)| pred(**k))
            .fold((0, 0), |(f, n), (_, &(a, b))| (f + a, n + b));
        (n > 0).then(|| f as f64 / n as f64)
    }
}

/// Incremental type analysis; feed records in arrival order.
#[derive(Debug, Clone, Default)]
pub struct TypeAnalyzer {
    blocks: HashMap<u64, History>,
    closed_runs: BTreeMap<u64, u64>,
    classified: u64,
    fetches: u64,
    fetches_stored: u64,
    fetches_leading: u64,
    flags: BTreeMap<u64, (u64, u64)>,
}

impl TypeAnalyzer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, r: &TypeRecord) {
        self.classified += 1;
        if r.caused_batch_fetch {
            self.fetches += 1;
            if let Some(stored) = r.stored {
                self.fetches_stored += 1;
                if stored == BlockType::Leading {
                    self.fetches_leading += 1;
                }
            }
        }
        match self.blocks.get_mut(&r.block_id) {
            None => {
                self.blocks.insert(
                    r.block_id,
                    History {
                        last: r.current,
                        run: 1,
                        accesses: 1,
                        switched: false,
                    },
                );
            }
            Some(h) => {
                h.accesses += 1;
                if h.last == r.current {
                    h.run += 1;
                } else {
                    if h.last == BlockType::Following {
                        if let Some(flag) = r.filter_flag {
                            let e = self.flags.entry(h.run).or_default();
                            e.0 += flag as u64;
                            e.1 += 1;
                        }
                    }
                    *self.closed_runs.entry(h.run).or_default() += 1;
                    h.last = r.current;
                    h.run = 1;
                    h.switched = true;
                }
            }
        }
    }

    pub fn summary(&self) -> TypeSummary {
        let mut l_stable = self.closed_runs.clone();
        let mut reused = 0;
        let mut switching = 0;
        for h in self.blocks.values() {
            *l_stable.entry(h.run).or_default() += 1;
            if h.accesses >= 2 {
                reused += 1;
            }
            if h.switched {
                switching += 1;
            }
        }
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        TypeSummary {
            classified_accesses: self.classified,
            blocks: self.blocks.len() as u64,
            reused_blocks: reused,
            switching_blocks: switching,
            transition_ratio: ratio(switching, reused),
            l_stable,
            batch_fetches: self.fetches,
            fetches_with_stored_type: self.fetches_stored,
            tag_fetch_attribution: ratio(self.fetches_leading, self.fetches_stored),
            filter_flags: self.flags.clone(),
        }
    }
}

pub fn analyze_types<'a>(records: impl IntoIterator<Item = &'a TypeRecord>) -> TypeSummary {
    let mut a = TypeAnalyzer::new();
    for r in records {
        a.observe(r);
    }
    a.summary()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BlockType::*;

    fn rec(block_id: u64, current: BlockType) -> TypeRecord {
        TypeRecord {
            block_id,
            current,
            stored: None,
            caused_batch_fetch: current == Leading,
            filter_flag: None,
        }
    }

    #[test]
    fn segments_of_llffl() {
        let recs: Vec<_> = [Leading, Leading, Following, Following, Leading]
            .iter()
            .map(|&t| rec(7, t))
            .collect();
        let s = analyze_types(&recs);
        assert_eq!(s.l_stable, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(s.transition_ratio, 1.0);
    }

    #[test]
    fn constant_sequences_never_switch() {
        let recs: Vec<_> = (0..50)
            .map(|i| rec(i % 5, if i % 5 == 0 { Leading } else { Following }))
            .collect();
        assert_eq!(analyze_types(&recs).transition_ratio, 0.0);
    }

    #[test]
    fn single_access_blocks_excluded_from_ratio() {
        let recs = vec![rec(1, Leading), rec(2, Leading), rec(2, Following)];
        let s = analyze_types(&recs);
        assert_eq!((s.reused_blocks, s.switching_blocks), (1, 1));
    }

    #[test]
    fn attribution_counts_only_stored_triggers() {
        let mut a = rec(1, Leading);
        a.stored = Some(Leading);
        let mut b = rec(2, Leading);
        b.stored = Some(Following);
        let c = rec(3, Leading);
        let s = analyze_types(&[a, b, c]);
        assert_eq!((s.batch_fetches, s.fetches_with_stored_type), (3, 2));
        assert_eq!(s.tag_fetch_attribution, 0.5);
    }

    #[test]
    fn flags_bucketed_by_following_run() {
        let mut recs = vec![rec(1, Leading), rec(1, Following), rec(1, Following)];
        let mut back = rec(1, Leading);
        back.filter_flag = Some(true);
        recs.push(back);
        let s = analyze_types(&recs);
        assert_eq!(s.filter_flags, BTreeMap::from([(2, (1, 1))]));
        assert_eq!(s.filter_flag_rate(2), Some(1.0));
        assert_eq!(s.filter_flag_rate(1), None);
    }

    proptest! {
        #[test]
        fn runs_partition_accesses(seq in proptest::collection::vec((0u64..6, any::<bool>()), 0..300)) {
            let recs: Vec<_> = seq.iter().map(|&(b, l)| rec(b, if l { Leading } else { Following })).collect();
            let s = analyze_types(&recs);
            let mass: u64 = s.l_stable.iter().map(|(len, n)| len * n).sum();
            prop_assert_eq!(mass, recs.len() as u64);
            prop_assert!(s.l_stable.keys().all(|&k| k >= 1));
            // aggregates do not depend on how blocks interleave
            let mut sorted = recs.clone();
            sorted.sort_by_key(|r| r.block_id);
            prop_assert_eq!(analyze_types(&sorted), s.clone());
            prop_assert_eq!(analyze_types(&recs), s);
        }
    }
}
