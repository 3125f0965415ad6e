use std::collections::{HashMap, HashSet};

use super::{
    Case, Controller, ControllerConfig, ControllerStats, Ctx, Design, Op, Pending, Request, Step,
    TypeRecord,
};
use crate::geometry::{BankGrid, CacheGeometry, DramLocation};
use crate::policy::{self, classify, BlockType, SetView};
use crate::tags::{Lookup, TagCache, TagEntry};
use crate::timing::{Purpose, Transaction};

#[derive(Debug, Clone, Copy)]
enum Plan {
    Hit,
    Miss,
}

/// Set-associative baseline: each DRAM row holds whole sets with their tags
/// next to the data, so a tag-cache miss reads the tags and then the data
/// from the same (by then open) row.
pub struct LhController {
    geom: CacheGeometry,
    grid: BankGrid,
    sets_per_row: u64,
    sets: Vec<SetView>,
    tag_cache: TagCache,
    modified_in_flight: HashSet<u64>,
    pending: HashMap<u64, Pending<Plan>>,
    fetching: HashMap<u64, u64>,
    writebacks: HashMap<u64, u64>,
    stats: ControllerStats,
}

impl LhController {
    /// Keeps the set count of the hybrid design's geometry with `lh_ways`
    /// ways per set.
    pub fn new(cfg: &ControllerConfig, grid: BankGrid) -> Self {
        let g = cfg.geometry;
        let geom = CacheGeometry::with_sets(
            g.num_sets(),
            cfg.lh_ways,
            g.block_size,
            g.tag_size,
            g.row_size,
        );
        let slots = g.row_size / g.block_size;
        let sets_per_row = slots / (cfg.lh_ways + 1);
        assert!(
            sets_per_row >= 1,
            "a row must hold at least one set and its tags"
        );
        Self {
            geom,
            grid,
            sets_per_row,
            sets: vec![SetView::new(cfg.lh_ways as usize); geom.num_sets() as usize],
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

    /// Row shared by a set's data and tags.
    pub fn row_of(&self, set_index: u64) -> DramLocation {
        self.grid.interleave(set_index / self.sets_per_row)
    }

    fn note_modified(&mut self, set: u64) {
        if !self.tag_cache.mark_modified(set) {
            self.modified_in_flight.insert(set);
        }
    }

    fn read(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        let loc = self.geom.locate(req.addr);
        let set_idx = loc.set_index;
        let state = self.tag_cache.lookup(set_idx);
        let current = classify(state);
        let set = &mut self.sets[set_idx as usize];
        let (hit, plan) = match set.find(loc.block_id) {
            Some(way) => {
                let changed = !set.ways[way].referenced;
                set.ways[way].referenced = true;
                if changed {
                    self.note_modified(set_idx);
                }
                (true, Plan::Hit)
            }
            None => {
                let way = policy::clock_victim(set);
                let victim = set.ways[way];
                set.ways[way] = TagEntry::fill(loc.block_id, BlockType::Following);
                if victim.valid && victim.dirty {
                    self.writebacks.insert(id, victim.block_id);
                }
                self.stats.fills += 1;
                self.note_modified(set_idx);
                (false, Plan::Miss)
            }
        };
        let case = match (current, hit) {
            (BlockType::Following, true) => Case::A,
            (BlockType::Following, false) => Case::C,
            (BlockType::Leading, true) => Case::B2,
            (BlockType::Leading, false) => Case::D,
        };
        if current == BlockType::Leading {
            self.tag_cache.begin_fetch(set_idx);
            self.fetching.insert(id, set_idx);
            self.stats.batch_fetches += 1;
        }
        ctx.record_type(TypeRecord {
            block_id: loc.block_id,
            current,
            stored: None,
            caused_batch_fetch: current == BlockType::Leading,
            filter_flag: None,
        });
        self.pending.insert(
            id,
            Pending {
                req,
                case,
                current,
                stored: None,
                bytes_cache: 0,
                bytes_mem: 0,
                plan,
            },
        );
        if state == Lookup::InFlight {
            self.tag_cache.wait_for(set_idx, id);
        } else {
            ctx.schedule(ctx.now() + self.tag_cache.latency(), id, Step::Lookup);
        }
    }

    fn write(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        let loc = self.geom.locate(req.addr);
        let set_idx = loc.set_index;
        let block = self.geom.block_size;
        let way = self.sets[set_idx as usize].find(loc.block_id);
        let mut p = Pending {
            req,
            case: Case::C,
            current: BlockType::Following,
            stored: None,
            bytes_cache: 0,
            bytes_mem: 0,
            plan: (),
        };
        let complete = match way {
            Some(w) => {
                p.case = Case::A;
                p.bytes_cache = block;
                let e = &mut self.sets[set_idx as usize].ways[w];
                if !e.dirty {
                    e.dirty = true;
                    if self.tag_cache.probe(set_idx) != Lookup::Miss {
                        self.note_modified(set_idx);
                    }
                }
                let row = self.row_of(set_idx);
                ctx.cache_txn(Transaction::write(row, block, Purpose::WriteRequest).for_request(id))
            }
            None => {
                p.bytes_mem = block;
                let mem = ctx.memory.block_location(loc.block_id, block);
                ctx.memory_txn(
                    Transaction::write(mem, block, Purpose::WriteRequest).for_request(id),
                )
            }
        };
        ctx.emit(p.outcome(id, complete));
    }

    /// Data read (hit) or memory read (miss) once the tags are known.
    fn resolve(&mut self, ctx: &mut Ctx, id: u64) {
        let block = self.geom.block_size;
        let p = self.pending.get_mut(&id).expect("unknown request");
        let loc = self.geom.locate(p.req.addr);
        let done = match p.plan {
            Plan::Hit => {
                p.bytes_cache += block;
                let row = self.grid.interleave(loc.set_index / self.sets_per_row);
                ctx.cache_txn(Transaction::read(row, block, Purpose::Demand).for_request(id))
            }
            Plan::Miss => {
                p.bytes_mem += block;
                let mem = ctx.memory.block_location(loc.block_id, block);
                ctx.memory_txn(Transaction::read(mem, block, Purpose::Demand).for_request(id))
            }
        };
        ctx.schedule(done, id, Step::Done);
    }

    fn lookup_done(&mut self, ctx: &mut Ctx, id: u64) {
        if self.fetching.contains_key(&id) {
            let block = self.geom.block_size;
            let p = self.pending.get_mut(&id).expect("unknown request");
            p.bytes_cache += block;
            let set_idx = self.geom.locate(p.req.addr).set_index;
            let row = self.row_of(set_idx);
            let done =
                ctx.cache_txn(Transaction::read(row, block, Purpose::TagBatch).for_request(id));
            ctx.schedule(done, id, Step::TagsArrived);
        } else {
            self.resolve(ctx, id);
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
            let row = self.row_of(e.key);
            ctx.cache_txn(Transaction::write(
                row,
                self.geom.block_size,
                Purpose::TagWriteback,
            ));
        }
        for w in waiters {
            let ready = self.pending[&w].req.arrival_cycle + self.tag_cache.latency();
            if ready <= ctx.now() {
                self.resolve(ctx, w);
            } else {
                ctx.schedule(ready, w, Step::Lookup);
            }
        }
        self.resolve(ctx, id);
    }

    fn done(&mut self, ctx: &mut Ctx, id: u64) {
        let block = self.geom.block_size;
        let p = self.pending.remove(&id).expect("unknown request");
        ctx.emit(p.outcome(id, ctx.now()));
        let set_idx = self.geom.locate(p.req.addr).set_index;
        if let Plan::Miss = p.plan {
            let row = self.row_of(set_idx);
            ctx.cache_txn(Transaction::write(row, block, Purpose::Fill));
        }
        if let Some(victim) = self.writebacks.remove(&id) {
            self.stats.writebacks += 1;
            let mem = ctx.memory.block_location(victim, block);
            ctx.memory_txn(Transaction::write(mem, block, Purpose::Writeback));
        }
    }
}

impl Controller for LhController {
    fn design(&self) -> Design {
        Design::Lh
    }

    fn arrive(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        match req.op {
            Op::Read => self.read(ctx, id, req),
            Op::Write => self.write(ctx, id, req),
        }
    }

    fn wake(&mut self, ctx: &mut Ctx, id: u64, step: Step) {
        match step {
            Step::Lookup => self.lookup_done(ctx, id),
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
