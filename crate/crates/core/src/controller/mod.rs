//! Per-request access paths of the three DRAM cache designs and the
//! discrete-event loop that drives them.
//!
//! A controller makes every functional decision (hit or miss, block type,
//! fills, evictions, policy updates) when a request arrives, then plays the
//! request's DRAM transactions out over time through staged wake-ups. Only
//! the timing engine decides when things finish.

mod direct;
mod gemini;
mod lh;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub use direct::DirectController;
pub use gemini::GeminiController;
pub use lh::LhController;

use crate::geometry::CacheGeometry;
use crate::policy::{BlockType, PolicyConfig};
use crate::tags::TagCacheStats;
use crate::timing::{DramDevice, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Op {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub arrival_cycle: u64,
    pub op: Op,
    pub addr: u64,
    pub origin: u32,
}

impl Request {
    pub fn read(arrival_cycle: u64, addr: u64) -> Self {
        Self {
            arrival_cycle,
            op: Op::Read,
            addr,
            origin: 0,
        }
    }

    pub fn write(arrival_cycle: u64, addr: u64) -> Self {
        Self {
            op: Op::Write,
            ..Self::read(arrival_cycle, addr)
        }
    }
}

/// Access path of a request.
///
/// * `A`: tag cache hit, DRAM cache hit.
/// * `B1`: tag cache miss, DRAM cache hit, tag and data fetched concurrently.
/// * `B2`: tag cache miss, DRAM cache hit, data fetched after the tags.
/// * `C`: tag cache hit, DRAM cache miss; straight to memory.
/// * `D`: tag cache miss, DRAM cache miss; memory after the tag probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Case {
    A,
    B1,
    B2,
    C,
    D,
}

impl Case {
    pub const ALL: [Case; 5] = [Case::A, Case::B1, Case::B2, Case::C, Case::D];

    pub fn is_hit(self) -> bool {
        matches!(self, Case::A | Case::B1 | Case::B2)
    }

    pub fn tag_cache_hit(self) -> bool {
        matches!(self, Case::A | Case::C)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Gemini,
    Lh,
    Direct,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::Gemini, Design::Lh, Design::Direct];

    pub fn name(self) -> &'static str {
        match self {
            Design::Gemini => "gemini",
            Design::Lh => "lh",
            Design::Direct => "direct",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gemini" => Ok(Design::Gemini),
            "lh" => Ok(Design::Lh),
            "direct" => Ok(Design::Direct),
            other => Err(format!(
                "unknown design `{other}` (expected gemini, lh or direct)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessOutcome {
    pub id: u64,
    pub op: Op,
    pub case_label: Case,
    pub dram_cache_hit: bool,
    pub tag_cache_hit: bool,
    pub arrival: u64,
    pub latency: u64,
    /// Cache-device bytes on this request's critical path.
    pub bytes_cache: u64,
    /// Memory bytes on this request's critical path.
    pub bytes_mem: u64,
    pub block_type_current: BlockType,
    pub block_type_stored: Option<BlockType>,
}

/// Per-access block-type observation, recorded in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypeRecord {
    pub block_id: u64,
    pub current: BlockType,
    pub stored: Option<BlockType>,
    pub caused_batch_fetch: bool,
    /// Set on a following-to-leading transition of a resident block: whether
    /// the type-variation filter had flagged it.
    pub filter_flag: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagCacheConfig {
    pub entries: usize,
    pub assoc: usize,
    pub latency: u64,
}

impl Default for TagCacheConfig {
    fn default() -> Self {
        Self {
            entries: 128,
            assoc: 8,
            latency: 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub geometry: CacheGeometry,
    /// Associativity of the set-associative baseline.
    pub lh_ways: u64,
    pub tag_cache: TagCacheConfig,
    pub policy: PolicyConfig,
    pub p_bypass: f64,
    /// Extra bytes streamed with a tag-and-data unit.
    pub tad_extra_bytes: u64,
    pub seed: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            geometry: CacheGeometry::default(),
            lh_ways: 14,
            tag_cache: TagCacheConfig::default(),
            policy: PolicyConfig::default(),
            p_bypass: 0.0,
            tad_extra_bytes: 16,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ControllerStats {
    pub tag_cache: TagCacheStats,
    pub batch_fetches: u64,
    pub batch_writebacks: u64,
    pub migrations: u64,
    pub reference_clears: u64,
    pub fills: u64,
    pub bypassed_fills: u64,
    pub writebacks: u64,
}

/// What a controller is woken up for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Step {
    /// Tag-cache lookup latency has elapsed.
    Lookup,
    /// The tag batch (or tag probe) this request fetched has arrived.
    TagsArrived,
    /// The request's last critical-path transaction completed.
    Done,
}

/// Shared simulation state handed to controllers.
pub struct Ctx {
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, u64, Step)>>,
    pub cache: DramDevice,
    pub memory: DramDevice,
    outcomes: Vec<AccessOutcome>,
    types: Vec<TypeRecord>,
}

impl Ctx {
    pub fn new(cache: DramDevice, memory: DramDevice) -> Self {
        Self {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            cache,
            memory,
            outcomes: Vec::new(),
            types: Vec::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn schedule(&mut self, at: u64, request: u64, step: Step) {
        debug_assert!(at >= self.now);
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, request, step)));
    }

    pub fn cache_txn(&mut self, txn: Transaction) -> u64 {
        self.cache.service(txn, self.now).complete
    }

    pub fn memory_txn(&mut self, txn: Transaction) -> u64 {
        self.memory.service(txn, self.now).complete
    }

    pub fn emit(&mut self, outcome: AccessOutcome) {
        self.outcomes.push(outcome);
    }

    pub fn record_type(&mut self, record: TypeRecord) {
        self.types.push(record);
    }
}

pub trait Controller {
    fn design(&self) -> Design;
    fn arrive(&mut self, ctx: &mut Ctx, id: u64, req: Request);
    fn wake(&mut self, ctx: &mut Ctx, id: u64, step: Step);
    fn stats(&self) -> ControllerStats;
    fn block_size(&self) -> u64;
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn design(&self) -> Design {
        (**self).design()
    }
    fn arrive(&mut self, ctx: &mut Ctx, id: u64, req: Request) {
        (**self).arrive(ctx, id, req)
    }
    fn wake(&mut self, ctx: &mut Ctx, id: u64, step: Step) {
        (**self).wake(ctx, id, step)
    }
    fn stats(&self) -> ControllerStats {
        (**self).stats()
    }
    fn block_size(&self) -> u64 {
        (**self).block_size()
    }
}

/// Builds the controller for `design`.
pub fn build(
    design: Design,
    cfg: &ControllerConfig,
    cache: &DramDevice,
) -> Box<dyn Controller + Send> {
    match design {
        Design::Gemini => Box::new(GeminiController::new(cfg, cache.grid())),
        Design::Lh => Box::new(LhController::new(cfg, cache.grid())),
        Design::Direct => Box::new(DirectController::new(cfg, cache)),
    }
}

/// Receives simulation results as they are produced.
pub trait Sink {
    fn outcome(&mut self, outcome: &AccessOutcome);
    fn type_record(&mut self, record: &TypeRecord);
}

impl Sink for Vec<AccessOutcome> {
    fn outcome(&mut self, outcome: &AccessOutcome) {
        self.push(*outcome);
    }
    fn type_record(&mut self, _: &TypeRecord) {}
}

/// Collects both outcome and type streams; handy in tests.
#[derive(Debug, Default, Clone)]
pub struct Recorder {
    pub outcomes: Vec<AccessOutcome>,
    pub types: Vec<TypeRecord>,
}

impl Sink for Recorder {
    fn outcome(&mut self, outcome: &AccessOutcome) {
        self.outcomes.push(*outcome);
    }
    fn type_record(&mut self, record: &TypeRecord) {
        self.types.push(*record);
    }
}

/// Event loop: feeds requests in arrival order and processes controller
/// wake-ups in (time, issue order).
pub struct Simulator<C: Controller> {
    pub controller: C,
    pub ctx: Ctx,
    next_id: u64,
    last_arrival: u64,
}

impl<C: Controller> Simulator<C> {
    pub fn new(controller: C, cache: DramDevice, memory: DramDevice) -> Self {
        Self {
            controller,
            ctx: Ctx::new(cache, memory),
            next_id: 0,
            last_arrival: 0,
        }
    }

    /// Processes every pending event scheduled at or before `t`.
    pub fn advance_to(&mut self, t: u64, sink: &mut dyn Sink) {
        while let Some(&Reverse((at, _, id, step))) = self.ctx.queue.peek() {
            if at > t {
                break;
            }
            self.ctx.queue.pop();
            self.ctx.now = at;
            self.controller.wake(&mut self.ctx, id, step);
            self.drain(sink);
        }
    }

    /// Submits one request; returns its id.
    pub fn submit(&mut self, req: Request, sink: &mut dyn Sink) -> u64 {
        assert!(
            req.arrival_cycle >= self.last_arrival,
            "requests must arrive in nondecreasing cycle order"
        );
        self.last_arrival = req.arrival_cycle;
        self.advance_to(req.arrival_cycle, sink);
        self.ctx.now = req.arrival_cycle;
        let id = self.next_id;
        self.next_id += 1;
        self.controller.arrive(&mut self.ctx, id, req);
        self.drain(sink);
        id
    }

    /// Runs until no events remain.
    pub fn finish(&mut self, sink: &mut dyn Sink) {
        self.advance_to(u64::MAX, sink);
    }

    pub fn run(&mut self, requests: impl IntoIterator<Item = Request>, sink: &mut dyn Sink) {
        for r in requests {
            self.submit(r, sink);
        }
        self.finish(sink);
    }

    pub fn submitted(&self) -> u64 {
        self.next_id
    }

    fn drain(&mut self, sink: &mut dyn Sink) {
        for t in self.ctx.types.drain(..) {
            sink.type_record(&t);
        }
        for o in self.ctx.outcomes.drain(..) {
            sink.outcome(&o);
        }
    }
}

/// Bookkeeping shared by the controllers for a request in flight.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Pending<P> {
    pub req: Request,
    pub case: Case,
    pub current: BlockType,
    pub stored: Option<BlockType>,
    pub bytes_cache: u64,
    pub bytes_mem: u64,
    pub plan: P,
}

impl<P> Pending<P> {
    pub fn outcome(&self, id: u64, now: u64) -> AccessOutcome {
        AccessOutcome {
            id,
            op: self.req.op,
            case_label: self.case,
            dram_cache_hit: self.case.is_hit(),
            tag_cache_hit: self.case.tag_cache_hit(),
            arrival: self.req.arrival_cycle,
            latency: now - self.req.arrival_cycle,
            bytes_cache: self.bytes_cache,
            bytes_mem: self.bytes_mem,
            block_type_current: self.current,
            block_type_stored: self.stored,
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::timing::{DeviceKind, DeviceTiming};

    pub fn devices() -> (DramDevice, DramDevice) {
        (
            DramDevice::new(DeviceKind::Cache, DeviceTiming::stacked_cache(), 3200).with_log(),
            DramDevice::new(DeviceKind::Memory, DeviceTiming::main_memory(), 3200).with_log(),
        )
    }

    /// Small cache: 64 sets of 16 ways, 16-entry tag cache.
    pub fn small_config() -> ControllerConfig {
        ControllerConfig {
            geometry: CacheGeometry {
                cache_capacity: 64 * 1024,
                ..CacheGeometry::default()
            },
            tag_cache: TagCacheConfig {
                entries: 16,
                assoc: 8,
                latency: 9,
            },
            ..ControllerConfig::default()
        }
    }

    /// Runs requests one at a time, far enough apart that each sees an idle
    /// system, and returns their outcomes in order.
    pub fn isolated<C: Controller>(sim: &mut Simulator<C>, reqs: &[Request]) -> Vec<AccessOutcome> {
        let mut out = Vec::new();
        let mut t = sim.last_arrival + 100_000;
        for r in reqs {
            let mut r = *r;
            r.arrival_cycle = t;
            sim.submit(r, &mut out);
            sim.advance_to(t + 50_000, &mut out);
            t += 100_000;
        }
        sim.finish(&mut out);
        out
    }
}
