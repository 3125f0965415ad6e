use std::collections::{HashMap, HashSet};

use super::{
    Case, Controller, ControllerConfig, ControllerStats, Ctx, Design, Op, Pending, Request, Step,
    TypeRecord,
};
use crate::geometry::{BankGrid, BlockLocator, CacheGeometry, DramLocation};
use crate::policy::{self, classify, BlockType, MappingAction, PolicyConfig, SetView};
use crate::tags::{Lookup, TagCache, TagEntry};
use crate::timing::{Purpose, Transaction};

#[derive(Debug, Clone, Copy)]
enum Plan {
    /// Following block present: read it where the tags say.
    FollowingHit { data: DramLocation },
    /// Following block absent: fetch from memory, fill at `fill`.
    FollowingMiss { fill: DramLocation },
    /// Leading block: batch and static-position data fetched together.
    Leading {
        data_done: u64,
        after_tags: LeadingTail,
    },
}

#[derive(Debug, Clone, Copy)]
enum LeadingTail {
    /// Found at its static position.
    Done,
    /// Found elsewhere: a second, serialized read, then the migration.
    Reread {
        data: DramLocation,
        migration: Option<(DramLocation, DramLocation)>,
    },
    /// Not cached: memory read, then fill at the static position.
    Memory { fill: DramLocation },
}

/// Hybrid-mapped cache: leading blocks live at their static position and are
/// fetched in parallel with the tag batch; following blocks are placed by
/// RV-CLOCK and located through the tag cache.
pub struct GeminiController {
    geom: CacheGeometry,
    grid: BankGrid,
    policy: PolicyConfig,
    sets: Vec<SetView>,
    tag_cache: TagCache,
    // sets whose tags changed while their batch was still being fetched
    modified_in_flight: HashSet<u64>,
    pending: HashMap<u64, Pending<Plan>>,
    // set index of each outstanding batch fetch, keyed by the leading request
    fetching: HashMap<u64, u64>,
    // victims to write back to memory when the request completes
    writebacks: HashMap<u64, u64>,
    stats: ControllerStats,
}

impl GeminiController {
    pub fn new(cfg: &ControllerConfig, grid: BankGrid) -> Self {
        let geom = cfg.geometry;
        Self {
            geom,
            grid,
            policy: cfg.policy,
            sets: vec![SetView::new(geom.ways_per_set as usize); geom.num_sets() as usize],
            tag_cache: TagCache::new(
                cfg.tag_cache.entries,
                cfg.tag_cache.assoc,
                cfg.tag_cache.latency,
            ),
            modified_in_flight: HashSet::new(),
            pending: HashMap::new(),
            fetching: HashMap::new(),
            writebacks: HashMap::new(),
            stats: ControllerStats::default(),
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geom
    }

    pub fn set(&self, set_index: u64) -> &SetView {
        &self.sets[set_index as usize]
    }

    pub fn set_mut(&mut self, set_index: u64) -> &mut SetView {
        &mut self.sets[set_index as usize]
    }

    pub fn tag_cache(&self) -> &TagCache {
        &self.tag_cache
    }

    pub fn contains(&self, addr: u64) -> bool {
        let loc = self.geom.locate(addr);
        self.sets[loc.set_index as usize]
            .find(loc.block_id)
            .is_some()
    }

    fn data_loc(&self, set: u64, way: usize) -> DramLocation {
        self.geom.data_location(set, way, self.grid)
    }

    fn note_modified(&mut self, set: u64) {
        if !self.tag_cache.mark_modified(set) {
            self.modified_in_flight.insert(set);
        }
    }

    fn queue_writeback(&mut self, id: u64, victim: Option<TagEntry>) {
        if let Some(v) = victim.filter(|v| v.dirty) {
            self.writebacks.insert(id, v.block_id);
        }
    }

    fn write(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        let loc = self.geom.locate(req.addr);
        let set = &mut self.sets[loc.set_index as usize];
        let mut pending = Pending {
            req,
            case: Case::C,
            current: BlockType::Following,
            stored: None,
            bytes_cache: 0,
            bytes_mem: 0,
            plan: (),
        };
        // presence is known without a probe, so writes never touch the tag cache
        let complete = match set.find(loc.block_id) {
            Some(way) => {
                pending.case = Case::A;
                pending.stored = Some(set.ways[way].stored_type());
                if !set.ways[way].dirty {
                    set.ways[way].dirty = true;
                    if self.tag_cache.probe(loc.set_index) != Lookup::Miss {
                        self.note_modified(loc.set_index);
                    }
                }
                pending.bytes_cache = self.geom.block_size;
                let data = self.data_loc(loc.set_index, way);
                ctx.cache_txn(
                    Transaction::write(data, self.geom.block_size, Purpose::WriteRequest)
                        .for_request(id),
                )
            }
            None => {
                pending.bytes_mem = self.geom.block_size;
                let mem = ctx
                    .memory
                    .block_location(loc.block_id, self.geom.block_size);
                ctx.memory_txn(
                    Transaction::write(mem, self.geom.block_size, Purpose::WriteRequest)
                        .for_request(id),
                )
            }
        };
        ctx.emit(pending.outcome(id, complete));
    }

    fn read(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        let loc = self.geom.locate(req.addr);
        let state = self.tag_cache.lookup(loc.set_index);
        let current = classify(state);
        let set_idx = loc.set_index;
        let way = self.sets[set_idx as usize].find(loc.block_id);
        let stored = way.map(|w| self.sets[set_idx as usize].ways[w].stored_type());
        let mut filter_flag = None;

        let (case, plan) = match current {
            BlockType::Following => self.following(id, &loc, way, &mut filter_flag),
            BlockType::Leading => {
                self.tag_cache.begin_fetch(set_idx);
                self.fetching.insert(id, set_idx);
                self.stats.batch_fetches += 1;
                self.leading(id, &loc, way, &mut filter_flag)
            }
        };

        ctx.record_type(TypeRecord {
            block_id: loc.block_id,
            current,
            stored,
            caused_batch_fetch: current == BlockType::Leading,
            filter_flag,
        });
        self.pending.insert(
            id,
            Pending {
                req,
                case,
                current,
                stored,
                bytes_cache: 0,
                bytes_mem: 0,
                plan,
            },
        );
        let lookup_done = ctx.now() + self.tag_cache.latency();
        if state == Lookup::InFlight {
            self.tag_cache.wait_for(set_idx, id);
        } else {
            ctx.schedule(lookup_done, id, Step::Lookup);
        }
    }

    fn following(
        &mut self,
        id: u64,
        loc: &BlockLocator,
        way: Option<usize>,
        filter_flag: &mut Option<bool>,
    ) -> (Case, Plan) {
        let set_idx = loc.set_index;
        match way {
            Some(w) => {
                let fx = policy::on_hit(
                    &mut self.sets[set_idx as usize],
                    w,
                    loc.static_pos,
                    BlockType::Following,
                    self.policy,
                );
                *filter_flag = fx.filter_flag;
                if fx.modified {
                    self.note_modified(set_idx);
                }
                (
                    Case::A,
                    Plan::FollowingHit {
                        data: self.data_loc(set_idx, fx.way),
                    },
                )
            }
            None => {
                let (w, victim) =
                    policy::following_fill(&mut self.sets[set_idx as usize], loc.block_id);
                self.stats.fills += 1;
                self.queue_writeback(id, victim);
                self.note_modified(set_idx);
                (
                    Case::C,
                    Plan::FollowingMiss {
                        fill: self.data_loc(set_idx, w),
                    },
                )
            }
        }
    }

    fn leading(
        &mut self,
        id: u64,
        loc: &BlockLocator,
        way: Option<usize>,
        filter_flag: &mut Option<bool>,
    ) -> (Case, Plan) {
        let set_idx = loc.set_index;
        let (case, tail) = match way {
            Some(w) => {
                let fx = policy::on_hit(
                    &mut self.sets[set_idx as usize],
                    w,
                    loc.static_pos,
                    BlockType::Leading,
                    self.policy,
                );
                *filter_flag = fx.filter_flag;
                if fx.modified {
                    self.modified_in_flight.insert(set_idx);
                }
                if w == loc.static_pos {
                    (Case::B1, LeadingTail::Done)
                } else {
                    let migration = match fx.action {
                        MappingAction::Migrate { from, to, .. } => {
                            self.stats.migrations += 1;
                            self.queue_writeback(id, fx.displaced);
                            Some((self.data_loc(set_idx, from), self.data_loc(set_idx, to)))
                        }
                        MappingAction::ClearStaticReference { .. } => {
                            self.stats.reference_clears += 1;
                            None
                        }
                        _ => None,
                    };
                    (
                        Case::B2,
                        LeadingTail::Reread {
                            data: self.data_loc(set_idx, w),
                            migration,
                        },
                    )
                }
            }
            None => {
                let victim = policy::leading_fill(
                    &mut self.sets[set_idx as usize],
                    loc.static_pos,
                    loc.block_id,
                );
                self.stats.fills += 1;
                self.queue_writeback(id, victim);
                self.modified_in_flight.insert(set_idx);
                (
                    Case::D,
                    LeadingTail::Memory {
                        fill: self.data_loc(set_idx, loc.static_pos),
                    },
                )
            }
        };
        (
            case,
            Plan::Leading {
                data_done: 0,
                after_tags: tail,
            },
        )
    }

    fn issue_after_lookup(&mut self, ctx: &mut Ctx, id: u64) {
        let block = self.geom.block_size;
        let p = self.pending.get_mut(&id).expect("unknown request");
        let loc = self.geom.locate(p.req.addr);
        match &mut p.plan {
            Plan::FollowingHit { data } => {
                p.bytes_cache += block;
                let done =
                    ctx.cache_txn(Transaction::read(*data, block, Purpose::Demand).for_request(id));
                ctx.schedule(done, id, Step::Done);
            }
            Plan::FollowingMiss { .. } => {
                p.bytes_mem += block;
                let mem = ctx.memory.block_location(loc.block_id, block);
                let done =
                    ctx.memory_txn(Transaction::read(mem, block, Purpose::Demand).for_request(id));
                ctx.schedule(done, id, Step::Done);
            }
            Plan::Leading { data_done, .. } => {
                let tag = self.geom.tag_location(loc.set_index, self.grid);
                let data = self
                    .geom
                    .data_location(loc.set_index, loc.static_pos, self.grid);
                p.bytes_cache += block * 2;
                let now = ctx.now();
                let batch = Transaction::read(tag, block, Purpose::TagBatch).for_request(id);
                let read = Transaction::read(data, block, Purpose::Demand).for_request(id);
                let tags_done = ctx.cache.service(batch, now).complete;
                *data_done = ctx.cache.service(read, now).complete;
                ctx.schedule(tags_done, id, Step::TagsArrived);
            }
        }
    }

    fn tags_arrived(&mut self, ctx: &mut Ctx, id: u64) {
        let set_idx = self
            .fetching
            .remove(&id)
            .expect("no batch fetch for request");
        let (evicted, waiters) = self.tag_cache.install(set_idx);
        if self.modified_in_flight.remove(&set_idx) {
            self.tag_cache.mark_modified(set_idx);
        }
        if let Some(e) = evicted.filter(|e| e.modified) {
            self.stats.batch_writebacks += 1;
            let tag = self.geom.tag_location(e.key, self.grid);
            ctx.cache_txn(Transaction::write(
                tag,
                self.geom.block_size,
                Purpose::TagWriteback,
            ));
        }
        for w in waiters {
            let ready = self.pending[&w].req.arrival_cycle + self.tag_cache.latency();
            if ready <= ctx.now() {
                self.issue_after_lookup(ctx, w);
            } else {
                ctx.schedule(ready, w, Step::Lookup);
            }
        }

        let block = self.geom.block_size;
        let p = self.pending.get_mut(&id).expect("unknown request");
        let Plan::Leading {
            data_done,
            after_tags,
        } = p.plan
        else {
            unreachable!("tags arrived for a following request")
        };
        match after_tags {
            LeadingTail::Done => ctx.schedule(data_done.max(ctx.now()), id, Step::Done),
            LeadingTail::Reread { data, .. } => {
                p.bytes_cache += block;
                let done =
                    ctx.cache_txn(Transaction::read(data, block, Purpose::Demand).for_request(id));
                ctx.schedule(done, id, Step::Done);
            }
            LeadingTail::Memory { .. } => {
                p.bytes_mem += block;
                let loc = self.geom.locate(p.req.addr);
                let mem = ctx.memory.block_location(loc.block_id, block);
                let done =
                    ctx.memory_txn(Transaction::read(mem, block, Purpose::Demand).for_request(id));
                ctx.schedule(done, id, Step::Done);
            }
        }
    }

    fn done(&mut self, ctx: &mut Ctx, id: u64) {
        let block = self.geom.block_size;
        let p = self.pending.remove(&id).expect("unknown request");
        ctx.emit(p.outcome(id, ctx.now()));
        let fill = match p.plan {
            Plan::FollowingMiss { fill } => Some(fill),
            Plan::Leading {
                after_tags: LeadingTail::Memory { fill },
                ..
            } => Some(fill),
            Plan::Leading {
                after_tags:
                    LeadingTail::Reread {
                        migration: Some((from, to)),
                        ..
                    },
                ..
            } => {
                ctx.cache_txn(Transaction::read(from, block, Purpose::Migration));
                ctx.cache_txn(Transaction::write(to, block, Purpose::Migration));
                None
            }
            _ => None,
        };
        if let Some(fill) = fill {
            ctx.cache_txn(Transaction::write(fill, block, Purpose::Fill));
        }
        if let Some(victim) = self.writebacks.remove(&id) {
            self.stats.writebacks += 1;
            let mem = ctx.memory.block_location(victim, block);
            ctx.memory_txn(Transaction::write(mem, block, Purpose::Writeback));
        }
    }
}

impl Controller for GeminiController {
    fn design(&self) -> Design {
        Design::Gemini
    }

    fn arrive(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        match req.op {
            Op::Read => self.read(ctx, id, req),
            Op::Write => self.write(ctx, id, req),
        }
    }

    fn wake(&mut self, ctx: &mut Ctx, id: u64, step: Step) {
        match step {
            Step::Lookup => self.issue_after_lookup(ctx, id),
            Step::TagsArrived => self.tags_arrived(ctx, id),
            Step::Done => self.done(ctx, id),
        }
    }

    fn stats(&self) -> ControllerStats {
        ControllerStats {
            tag_cache: self.tag_cache.stats.clone(),
            ..self.stats.clone()
        }
    }

    fn block_size(&self) -> u64 {
        self.geom.block_size
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::*;
    use super::*;

    fn sim() -> Simulator<GeminiController> {
        let (c, m) = devices();
        let cfg = small_config();
        Simulator::new(GeminiController::new(&cfg, c.grid()), c, m)
    }

    #[test]
    fn zero_load_leading_hit_is_parallel() {
        let mut s = sim();
        // set 0 way 0 preloaded with block 0 as a leading block
        s.controller.set_mut(0).ways[0] = TagEntry::fill(0, BlockType::Leading);
        let mut out = Vec::new();
        s.run([Request::read(0, 0)], &mut out);
        assert_eq!(out[0].case_label, Case::B1);
        assert_eq!(out[0].latency, 9 + 76);
        assert_eq!((out[0].bytes_cache, out[0].bytes_mem), (128, 0));
    }

    #[test]
    fn table_one_byte_rows() {
        let mut s = sim();
        // leading miss, then following miss and hit in the same section
        let out = isolated(
            &mut s,
            &[
                Request::read(0, 0x0),
                Request::read(0, 0x40),
                Request::read(0, 0x40),
            ],
        );
        assert_eq!(out[0].case_label, Case::D);
        assert_eq!((out[0].bytes_cache, out[0].bytes_mem), (128, 64));
        assert_eq!(out[1].case_label, Case::C);
        assert_eq!((out[1].bytes_cache, out[1].bytes_mem), (0, 64));
        assert_eq!(out[2].case_label, Case::A);
        assert_eq!((out[2].bytes_cache, out[2].bytes_mem), (64, 0));
    }

    #[test]
    fn zero_load_leading_miss_serializes_memory_after_batch() {
        let mut s = sim();
        let mut out = Vec::new();
        s.run([Request::read(0, 0)], &mut out);
        assert_eq!(out[0].latency, 9 + 76 + 88);
    }

    #[test]
    fn request_during_fetch_is_following() {
        let mut s = sim();
        let mut out = Recorder::default();
        s.run([Request::read(0, 0), Request::read(5, 0x40)], &mut out);
        assert_eq!(out.types[0].current, BlockType::Leading);
        assert_eq!(out.types[1].current, BlockType::Following);
        let second = out.outcomes.iter().find(|o| o.id == 1).unwrap();
        assert_eq!(second.case_label, Case::C);
        // waits for the batch, then goes to memory
        assert!(second.latency >= 9 + 76 - 5 + 88);
    }

    #[test]
    fn displaced_following_block_is_migrated() {
        let mut s = sim();
        // block 3 sits at way 9 as a following block; its static way is 3
        s.controller.set_mut(0).ways[9] = TagEntry::fill(3, BlockType::Following);
        let out = isolated(&mut s, &[Request::read(0, 3 * 64)]);
        assert_eq!(out[0].case_label, Case::B2);
        assert_eq!(out[0].bytes_cache, 192);
        let set = s.controller.set(0);
        assert_eq!(set.find(3), Some(3));
        assert!(set.ways[3].priority);
        assert!(!set.ways[9].valid);
        assert_eq!(s.controller.stats().migrations, 1);
    }

    #[test]
    fn dirty_static_occupant_written_back_on_leading_fill() {
        let mut s = sim();
        let mut occupant = TagEntry::fill(64 * 16, BlockType::Leading); // section 64 -> set 0, pos 0
        occupant.dirty = true;
        s.controller.set_mut(0).ways[0] = occupant;
        isolated(&mut s, &[Request::read(0, 0)]);
        let wbs: Vec<_> = s
            .ctx
            .memory
            .log()
            .iter()
            .filter(|l| l.txn.purpose == Purpose::Writeback)
            .collect();
        assert_eq!(wbs.len(), 1);
        assert_eq!(wbs[0].txn.bytes, 64);
    }

    #[test]
    fn clean_static_occupant_evicted_silently() {
        let mut s = sim();
        s.controller.set_mut(0).ways[0] = TagEntry::fill(64 * 16, BlockType::Leading);
        isolated(&mut s, &[Request::read(0, 0)]);
        assert!(s
            .ctx
            .memory
            .log()
            .iter()
            .all(|l| l.txn.purpose != Purpose::Writeback));
    }

    #[test]
    fn modified_batch_written_back_once_on_eviction() {
        let mut s = sim();
        let cfg = small_config();
        let sets = cfg.geometry.num_sets();
        // even sets collide in tag-cache set 0 (two sets of 8 ways)
        let reqs: Vec<_> = (0..10u64)
            .map(|i| Request::read(0, i * 2 * 16 * 64))
            .collect();
        isolated(&mut s, &reqs);
        assert!(sets >= 20);
        let tag_wbs: Vec<_> = s
            .ctx
            .cache
            .log()
            .iter()
            .filter(|l| l.txn.purpose == Purpose::TagWriteback)
            .map(|l| l.txn.loc)
            .collect();
        // sets 0 and 2 evicted, each modified by its own leading fill
        let g = s.controller.geometry();
        let grid = s.ctx.cache.grid();
        assert_eq!(
            tag_wbs,
            vec![g.tag_location(0, grid), g.tag_location(2, grid)]
        );
    }

    #[test]
    fn unmodified_batch_eviction_writes_nothing() {
        let mut s = sim();
        for i in 0..9u64 {
            let set = i * 2;
            s.controller.set_mut(set).ways[0] = TagEntry::fill(set * 16, BlockType::Leading);
        }
        let reqs: Vec<_> = (0..9u64)
            .map(|i| Request::read(0, i * 2 * 16 * 64))
            .collect();
        isolated(&mut s, &reqs);
        assert_eq!(s.controller.stats().tag_cache.evictions, 1);
        assert_eq!(s.controller.stats().batch_writebacks, 0);
    }

    #[test]
    fn writes_hit_in_place_and_miss_to_memory() {
        let mut s = sim();
        let out = isolated(
            &mut s,
            &[
                Request::read(0, 0),
                Request::write(0, 0),
                Request::write(0, 0x4000_0000),
            ],
        );
        assert_eq!(out[1].op, Op::Write);
        assert_eq!(out[1].bytes_cache, 64);
        assert_eq!(out[2].bytes_mem, 64);
        assert!(s.controller.set(0).ways[0].dirty);
        assert!(!s.controller.contains(0x4000_0000));
    }
}
