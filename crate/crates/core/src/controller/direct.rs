use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Case, Controller, ControllerConfig, ControllerStats, Ctx, Design, Op, Pending, Request, Step,
    TypeRecord,
};
use crate::geometry::{BankGrid, DramLocation};
use crate::policy::{classify, BlockType};
use crate::tags::{Lookup, TagCache};
use crate::timing::{DramDevice, Purpose, Transaction};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Line {
    valid: bool,
    block_id: u64,
    dirty: bool,
}

#[derive(Debug, Clone, Copy)]
struct Plan {
    hit: bool,
    fill: bool,
}

/// Direct-mapped cache storing each line as a tag-and-data unit. A tag-cache
/// miss streams the whole unit, which answers hit or miss and returns the
/// data on a hit in one access.
pub struct DirectController {
    block_size: u64,
    tad_bytes: u64,
    tads_per_row: u64,
    grid: BankGrid,
    lines: Vec<Line>,
    tag_cache: TagCache,
    p_bypass: f64,
    rng: ChaCha8Rng,
    pending: HashMap<u64, Pending<Plan>>,
    fetching: HashMap<u64, u64>,
    writebacks: HashMap<u64, u64>,
    stats: ControllerStats,
}

impl DirectController {
    pub fn new(cfg: &ControllerConfig, cache: &DramDevice) -> Self {
        let g = cfg.geometry;
        let tad_bytes = g.block_size + cfg.tad_extra_bytes;
        let tags_per_batch = g.ways_per_set as usize;
        let tads_per_row = (g.row_size / tad_bytes).max(1);
        // the units are wider than a block, so fewer lines fit in the same rows
        let rows = (g.cache_capacity / g.row_size).max(1);
        Self {
            block_size: g.block_size,
            tad_bytes,
            tads_per_row,
            grid: cache.grid(),
            lines: vec![Line::default(); (rows * tads_per_row) as usize],
            // same SRAM budget, holding single tags instead of batches
            tag_cache: TagCache::new(
                cfg.tag_cache.entries * tags_per_batch,
                cfg.tag_cache.assoc,
                cfg.tag_cache.latency,
            ),
            p_bypass: cfg.p_bypass,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            pending: HashMap::new(),
            fetching: HashMap::new(),
            writebacks: HashMap::new(),
            stats: ControllerStats::default(),
        }
    }

    pub fn num_lines(&self) -> u64 {
        self.lines.len() as u64
    }

    pub fn tag_cache(&self) -> &TagCache {
        &self.tag_cache
    }

    pub fn line_of(&self, block_id: u64) -> u64 {
        block_id % self.num_lines()
    }

    pub fn contains(&self, block_id: u64) -> bool {
        let l = self.lines[self.line_of(block_id) as usize];
        l.valid && l.block_id == block_id
    }

    /// Places a clean copy of `block_id` in its line, replacing the occupant.
    pub fn preload(&mut self, block_id: u64) {
        let line = self.line_of(block_id) as usize;
        self.lines[line] = Line {
            valid: true,
            block_id,
            dirty: false,
        };
    }

    pub fn location(&self, line: u64) -> DramLocation {
        self.grid.interleave(line / self.tads_per_row)
    }

    /// The other line of an aligned pair, whose tag arrives with the unit.
    fn neighbour(&self, line: u64) -> u64 {
        let n = line ^ 1;
        if n < self.num_lines() {
            n
        } else {
            line
        }
    }

    fn read(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        let block_id = req.addr / self.block_size;
        let line = self.line_of(block_id);
        let state = self.tag_cache.lookup(line);
        let current = classify(state);
        let hit = self.contains(block_id);
        let mut fill = false;
        if !hit {
            if self.p_bypass > 0.0 && self.rng.random_bool(self.p_bypass) {
                self.stats.bypassed_fills += 1;
            } else {
                let old = std::mem::replace(
                    &mut self.lines[line as usize],
                    Line {
                        valid: true,
                        block_id,
                        dirty: false,
                    },
                );
                if old.valid && old.dirty {
                    self.writebacks.insert(id, old.block_id);
                }
                self.stats.fills += 1;
                fill = true;
            }
        }
        let case = match (current, hit) {
            (BlockType::Following, true) => Case::A,
            (BlockType::Following, false) => Case::C,
            (BlockType::Leading, true) => Case::B1,
            (BlockType::Leading, false) => Case::D,
        };
        if current == BlockType::Leading {
            self.tag_cache.begin_fetch(line);
            self.fetching.insert(id, line);
            self.stats.batch_fetches += 1;
        }
        ctx.record_type(TypeRecord {
            block_id,
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
                plan: Plan { hit, fill },
            },
        );
        if state == Lookup::InFlight {
            self.tag_cache.wait_for(line, id);
        } else {
            ctx.schedule(ctx.now() + self.tag_cache.latency(), id, Step::Lookup);
        }
    }

    fn write(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        let block_id = req.addr / self.block_size;
        let line = self.line_of(block_id);
        let mut p = Pending {
            req,
            case: Case::C,
            current: BlockType::Following,
            stored: None,
            bytes_cache: 0,
            bytes_mem: 0,
            plan: (),
        };
        let complete = if self.contains(block_id) {
            p.case = Case::A;
            p.bytes_cache = self.block_size;
            self.lines[line as usize].dirty = true;
            let loc = self.location(line);
            ctx.cache_txn(
                Transaction::write(loc, self.block_size, Purpose::WriteRequest).for_request(id),
            )
        } else {
            p.bytes_mem = self.block_size;
            let mem = ctx.memory.block_location(block_id, self.block_size);
            ctx.memory_txn(
                Transaction::write(mem, self.block_size, Purpose::WriteRequest).for_request(id),
            )
        };
        ctx.emit(p.outcome(id, complete));
    }

    fn lookup_done(&mut self, ctx: &mut Ctx, id: u64) {
        let p = self.pending.get_mut(&id).expect("unknown request");
        let block_id = p.req.addr / self.block_size;
        let line = block_id % self.lines.len() as u64;
        let done = if self.fetching.contains_key(&id) {
            p.bytes_cache += self.tad_bytes;
            let loc = self.grid.interleave(line / self.tads_per_row);
            let done = ctx.cache_txn(
                Transaction::read(loc, self.tad_bytes, Purpose::TagBatch).for_request(id),
            );
            ctx.schedule(done, id, Step::TagsArrived);
            return;
        } else if p.plan.hit {
            p.bytes_cache += self.block_size;
            let loc = self.grid.interleave(line / self.tads_per_row);
            ctx.cache_txn(Transaction::read(loc, self.block_size, Purpose::Demand).for_request(id))
        } else {
            p.bytes_mem += self.block_size;
            let mem = ctx.memory.block_location(block_id, self.block_size);
            ctx.memory_txn(Transaction::read(mem, self.block_size, Purpose::Demand).for_request(id))
        };
        ctx.schedule(done, id, Step::Done);
    }

    fn tags_arrived(&mut self, ctx: &mut Ctx, id: u64) {
        let line = self.fetching.remove(&id).expect("no tag probe for request");
        let (_, waiters) = self.tag_cache.install(line);
        let n = self.neighbour(line);
        self.tag_cache.install_if_absent(n);
        for w in waiters {
            let ready = self.pending[&w].req.arrival_cycle + self.tag_cache.latency();
            ctx.schedule(ready.max(ctx.now()), w, Step::Lookup);
        }
        let p = self.pending.get_mut(&id).expect("unknown request");
        if p.plan.hit {
            ctx.schedule(ctx.now(), id, Step::Done);
        } else {
            p.bytes_mem += self.block_size;
            let block_id = p.req.addr / self.block_size;
            let mem = ctx.memory.block_location(block_id, self.block_size);
            let done = ctx.memory_txn(
                Transaction::read(mem, self.block_size, Purpose::Demand).for_request(id),
            );
            ctx.schedule(done, id, Step::Done);
        }
    }

    fn done(&mut self, ctx: &mut Ctx, id: u64) {
        let p = self.pending.remove(&id).expect("unknown request");
        ctx.emit(p.outcome(id, ctx.now()));
        if p.plan.fill {
            let line = self.line_of(p.req.addr / self.block_size);
            ctx.cache_txn(Transaction::write(
                self.location(line),
                self.tad_bytes,
                Purpose::Fill,
            ));
        }
        if let Some(victim) = self.writebacks.remove(&id) {
            self.stats.writebacks += 1;
            let mem = ctx.memory.block_location(victim, self.block_size);
            ctx.memory_txn(Transaction::write(mem, self.block_size, Purpose::Writeback));
        }
    }
}

impl Controller for DirectController {
    fn design(&self) -> Design {
        Design::Direct
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
        self.block_size
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::*;
    use super::*;
    use proptest::prelude::*;

    fn sim_with(p_bypass: f64) -> Simulator<DirectController> {
        let (c, m) = devices();
        let cfg = ControllerConfig {
            p_bypass,
            ..small_config()
        };
        let ctl = DirectController::new(&cfg, &c);
        Simulator::new(ctl, c, m)
    }

    #[test]
    fn zero_load_probe_hit() {
        let mut s = sim_with(0.0);
        s.controller.lines[7] = Line {
            valid: true,
            block_id: 7,
            dirty: false,
        };
        let mut out = Vec::new();
        s.run([Request::read(0, 7 * 64)], &mut out);
        assert_eq!(out[0].case_label, Case::B1);
        assert_eq!(out[0].latency, 9 + 36 + 36 + 6);
        assert_eq!(out[0].bytes_cache, 80);
    }

    #[test]
    fn neighbour_tag_arrives_with_probe() {
        let mut s = sim_with(0.0);
        let out = isolated(
            &mut s,
            &[Request::read(0, 2 * 64), Request::read(0, 3 * 64)],
        );
        assert_eq!(out[0].case_label, Case::D);
        assert_eq!(out[1].case_label, Case::C);
    }

    #[test]
    fn two_aliasing_blocks_always_miss() {
        let mut s = sim_with(0.0);
        let lines = s.controller.num_lines();
        let reqs: Vec<_> = (0..20u64)
            .map(|i| Request::read(0, (i % 2) * lines * 64))
            .collect();
        let out = isolated(&mut s, &reqs);
        assert!(out.iter().all(|o| !o.dram_cache_hit));
        assert_eq!(s.controller.stats().fills, 20);
    }

    #[test]
    fn bypass_skips_fills() {
        let mut s = sim_with(1.0);
        let out = isolated(&mut s, &[Request::read(0, 0), Request::read(0, 0)]);
        assert!(out.iter().all(|o| !o.dram_cache_hit));
        assert_eq!(s.controller.stats().bypassed_fills, 2);
        assert!(s
            .ctx
            .cache
            .log()
            .iter()
            .all(|l| l.txn.purpose != Purpose::Fill));
    }

    #[test]
    fn fill_writes_a_whole_unit() {
        let mut s = sim_with(0.0);
        isolated(&mut s, &[Request::read(0, 0)]);
        let fills: Vec<_> = s
            .ctx
            .cache
            .log()
            .iter()
            .filter(|l| l.txn.purpose == Purpose::Fill)
            .collect();
        assert_eq!(fills.len(), 1);
        assert_eq!(fills[0].txn.bytes, 80);
    }

    proptest! {
        #[test]
        fn matches_reference_direct_mapped_cache(blocks in proptest::collection::vec(0u64..4096, 1..300)) {
            let mut s = sim_with(0.0);
            let lines = s.controller.num_lines();
            let reqs: Vec<_> = blocks.iter().enumerate().map(|(i, b)| Request::read(i as u64 * 7, b * 64)).collect();
            let mut out = Vec::new();
            s.run(reqs, &mut out);
            out.sort_by_key(|o| o.id);
            let mut reference: HashMap<u64, u64> = HashMap::new();
            for (o, b) in out.iter().zip(&blocks) {
                let hit = reference.get(&(b % lines)) == Some(b);
                prop_assert_eq!(o.dram_cache_hit, hit);
                reference.insert(b % lines, *b);
            }
        }
    }
}
