//! DRAM timing for the stacked cache and off-chip memory.
//!
//! Each device is a grid of banks behind per-channel data buses. Banks use an
//! open-page policy and serve transactions in issue order; a transaction
//! reserves its bank until its data has crossed the bus. Bus slots are handed
//! out in issue order but a transaction may take an earlier idle gap, so a
//! channel never sits idle while a ready burst waits for it.
//!
//! All times are CPU cycles.

use std::collections::VecDeque;

use crate::error::ConfigIssue;
use crate::geometry::{BankGrid, DramLocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DeviceTiming {
    pub tcas: i64,
    pub trcd: i64,
    pub trp: i64,
    pub tras: i64,
    pub channels: i64,
    pub bus_width_bits: i64,
    pub bus_clock_mhz: i64,
    pub banks: i64,
    pub row_buffer_bytes: i64,
}

impl DeviceTiming {
    pub fn stacked_cache() -> Self {
        Self {
            tcas: 36,
            trcd: 36,
            trp: 36,
            tras: 144,
            channels: 4,
            bus_width_bits: 128,
            bus_clock_mhz: 1600,
            banks: 16,
            row_buffer_bytes: 2048,
        }
    }

    pub fn main_memory() -> Self {
        Self {
            channels: 2,
            bus_width_bits: 64,
            bus_clock_mhz: 800,
            banks: 8,
            ..Self::stacked_cache()
        }
    }

    pub fn validate(&self, section: &str) -> Vec<ConfigIssue> {
        let fields = [
            ("tcas", self.tcas),
            ("trcd", self.trcd),
            ("trp", self.trp),
            ("tras", self.tras),
            ("channels", self.channels),
            ("bus_width_bits", self.bus_width_bits),
            ("bus_clock_mhz", self.bus_clock_mhz),
            ("banks", self.banks),
            ("row_buffer_bytes", self.row_buffer_bytes),
        ];
        let mut issues: Vec<ConfigIssue> = fields
            .iter()
            .filter(|(_, v)| *v <= 0)
            .map(|(k, v)| {
                ConfigIssue::new(
                    format!("{section}.{k}"),
                    format!("must be positive, got {v}"),
                )
            })
            .collect();
        if self.bus_width_bits > 0 && self.bus_width_bits % 8 != 0 {
            issues.push(ConfigIssue::new(
                format!("{section}.bus_width_bits"),
                "must be a whole number of bytes",
            ));
        }
        issues
    }

    pub fn grid(&self) -> BankGrid {
        BankGrid {
            channels: self.channels as usize,
            banks_per_channel: self.banks as usize,
        }
    }

    /// Bytes moved per bus cycle (double data rate).
    pub fn bytes_per_bus_cycle(&self) -> u64 {
        (self.bus_width_bits as u64 / 8) * 2
    }

    /// CPU cycles the data bus is occupied by a transfer of `bytes`.
    pub fn burst_cycles(&self, bytes: u64, cpu_mhz: u64) -> u64 {
        let bus_cycles = bytes.div_ceil(self.bytes_per_bus_cycle());
        (bus_cycles * cpu_mhz).div_ceil(self.bus_clock_mhz as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Cache,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TxnKind {
    Read,
    Write,
}

/// Why a transaction was issued; used for byte accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Purpose {
    /// Data read on the critical path of a read request.
    Demand,
    /// Tag batch (or tag-and-data probe) read.
    TagBatch,
    TagWriteback,
    Fill,
    Migration,
    /// Dirty victim written back to memory.
    Writeback,
    /// A write request forwarded to its device.
    WriteRequest,
}

impl Purpose {
    pub const ALL: [Purpose; 7] = [
        Purpose::Demand,
        Purpose::TagBatch,
        Purpose::TagWriteback,
        Purpose::Fill,
        Purpose::Migration,
        Purpose::Writeback,
        Purpose::WriteRequest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Purpose::Demand => "demand",
            Purpose::TagBatch => "tag_batch",
            Purpose::TagWriteback => "tag_writeback",
            Purpose::Fill => "fill",
            Purpose::Migration => "migration",
            Purpose::Writeback => "writeback",
            Purpose::WriteRequest => "write_request",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transaction {
    pub kind: TxnKind,
    pub purpose: Purpose,
    pub loc: DramLocation,
    pub bytes: u64,
    /// Request this transaction is charged to, when it is on a request's
    /// critical path.
    pub request: Option<u64>,
}

impl Transaction {
    pub fn read(loc: DramLocation, bytes: u64, purpose: Purpose) -> Self {
        Self {
            kind: TxnKind::Read,
            purpose,
            loc,
            bytes,
            request: None,
        }
    }

    pub fn write(loc: DramLocation, bytes: u64, purpose: Purpose) -> Self {
        Self {
            kind: TxnKind::Write,
            ..Self::read(loc, bytes, purpose)
        }
    }

    pub fn for_request(mut self, id: u64) -> Self {
        self.request = Some(id);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOutcome {
    Hit,
    Closed,
    Conflict,
}

/// Timing of one serviced transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceRecord {
    pub issue: u64,
    pub data_ready: u64,
    pub bus_start: u64,
    pub complete: u64,
    /// Service time with no waiting, given the row state it found.
    pub service_min: u64,
    pub queue_delay: u64,
    pub row: RowOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BankState {
    pub open_row: Option<u64>,
    pub busy_until: u64,
    pub last_activate: u64,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct DeviceStats {
    pub transactions: u64,
    pub reads: u64,
    pub writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub bytes_by_purpose: std::collections::BTreeMap<&'static str, u64>,
    pub row_hits: u64,
    pub row_closed: u64,
    pub row_conflicts: u64,
    pub queue_delay_total: u64,
    pub queue_delay_max: u64,
    /// Parallel fetches whose members shared a bank and were serialized.
    pub serialized_parallel_fetches: u64,
}

impl DeviceStats {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_read + self.bytes_written
    }

    pub fn mean_queue_delay(&self) -> f64 {
        if self.transactions == 0 {
            0.0
        } else {
            self.queue_delay_total as f64 / self.transactions as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoggedTransaction {
    pub txn: Transaction,
    pub channel: usize,
    pub record: ServiceRecord,
}

#[derive(Debug, Clone)]
pub struct DramDevice {
    pub kind: DeviceKind,
    timing: DeviceTiming,
    cpu_mhz: u64,
    grid: BankGrid,
    banks: Vec<BankState>,
    // busy bus intervals per channel, sorted and disjoint
    buses: Vec<VecDeque<(u64, u64)>>,
    last_issue: u64,
    pub stats: DeviceStats,
    log: Option<Vec<LoggedTransaction>>,
}

impl DramDevice {
    pub fn new(kind: DeviceKind, timing: DeviceTiming, cpu_mhz: u64) -> Self {
        let grid = timing.grid();
        Self {
            kind,
            timing,
            cpu_mhz,
            grid,
            banks: vec![BankState::default(); grid.total()],
            buses: vec![VecDeque::new(); grid.channels],
            last_issue: 0,
            stats: DeviceStats::default(),
            log: None,
        }
    }

    /// Keeps every serviced transaction for later inspection.
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn log(&self) -> &[LoggedTransaction] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn timing(&self) -> &DeviceTiming {
        &self.timing
    }

    pub fn grid(&self) -> BankGrid {
        self.grid
    }

    pub fn bank(&self, bank: usize) -> &BankState {
        &self.banks[bank]
    }

    pub fn burst_cycles(&self, bytes: u64) -> u64 {
        self.timing.burst_cycles(bytes, self.cpu_mhz)
    }

    /// Consecutive blocks rotate over channels and banks; each bank fills a
    /// row with every n-th block before moving to its next row.
    pub fn block_location(&self, block_id: u64, block_size: u64) -> DramLocation {
        let blocks_per_row = (self.timing.row_buffer_bytes as u64 / block_size).max(1);
        let banks = self.grid.total() as u64;
        DramLocation {
            bank: (block_id % banks) as usize,
            row: block_id / banks / blocks_per_row,
        }
    }

    /// Zero-load latency of a transfer of `bytes`, given the row state.
    pub fn unloaded_latency(&self, row: RowOutcome, bytes: u64) -> u64 {
        let t = &self.timing;
        let access = match row {
            RowOutcome::Hit => t.tcas,
            RowOutcome::Closed => t.trcd + t.tcas,
            RowOutcome::Conflict => t.trp + t.trcd + t.tcas,
        } as u64;
        access + self.burst_cycles(bytes)
    }

    /// Serves one transaction issued at `issue`.
    pub fn service(&mut self, txn: Transaction, issue: u64) -> ServiceRecord {
        debug_assert!(
            issue >= self.last_issue,
            "transactions must be issued in time order"
        );
        self.last_issue = issue;
        let t = self.timing;
        let burst = self.burst_cycles(txn.bytes);
        let bank = &mut self.banks[txn.loc.bank];
        let start = issue.max(bank.busy_until);
        let (row, data_ready) = match bank.open_row {
            Some(r) if r == txn.loc.row => (RowOutcome::Hit, start + t.tcas as u64),
            None => {
                bank.last_activate = start;
                (RowOutcome::Closed, start + (t.trcd + t.tcas) as u64)
            }
            Some(_) => {
                let precharge = start.max(bank.last_activate + t.tras as u64);
                let activate = precharge + t.trp as u64;
                bank.last_activate = activate;
                (RowOutcome::Conflict, activate + (t.trcd + t.tcas) as u64)
            }
        };
        bank.open_row = Some(txn.loc.row);

        let channel = self.grid.channel_of(txn.loc.bank);
        let bus = &mut self.buses[channel];
        while bus.front().is_some_and(|&(_, end)| end <= issue) {
            bus.pop_front();
        }
        let bus_start = reserve(bus, data_ready, burst);
        let complete = bus_start + burst;
        self.banks[txn.loc.bank].busy_until = complete;

        let service_min = self.unloaded_latency(row, txn.bytes);
        let queue_delay = complete - issue - service_min;
        let record = ServiceRecord {
            issue,
            data_ready,
            bus_start,
            complete,
            service_min,
            queue_delay,
            row,
        };

        let s = &mut self.stats;
        s.transactions += 1;
        match txn.kind {
            TxnKind::Read => {
                s.reads += 1;
                s.bytes_read += txn.bytes;
            }
            TxnKind::Write => {
                s.writes += 1;
                s.bytes_written += txn.bytes;
            }
        }
        *s.bytes_by_purpose.entry(txn.purpose.name()).or_default() += txn.bytes;
        match row {
            RowOutcome::Hit => s.row_hits += 1,
            RowOutcome::Closed => s.row_closed += 1,
            RowOutcome::Conflict => s.row_conflicts += 1,
        }
        s.queue_delay_total += queue_delay;
        s.queue_delay_max = s.queue_delay_max.max(queue_delay);
        if let Some(log) = &mut self.log {
            log.push(LoggedTransaction {
                txn,
                channel,
                record,
            });
        }
        record
    }

    /// Issues several transactions at once; completes when the last one does.
    pub fn parallel_fetch(&mut self, txns: &[Transaction], issue: u64) -> u64 {
        let mut banks: Vec<usize> = txns.iter().map(|t| t.loc.bank).collect();
        banks.sort_unstable();
        banks.dedup();
        if banks.len() < txns.len() {
            self.stats.serialized_parallel_fetches += 1;
        }
        txns.iter()
            .map(|&t| self.service(t, issue).complete)
            .max()
            .unwrap_or(issue)
    }
}

/// Reserves the earliest bus slot of `len` cycles starting no earlier than
/// `ready`.
fn reserve(bus: &mut VecDeque<(u64, u64)>, ready: u64, len: u64) -> u64 {
    let mut start = ready;
    let mut pos = bus.len();
    for (i, &(s, e)) in bus.iter().enumerate() {
        if e <= start {
            continue;
        }
        if s >= start + len {
            pos = i;
            break;
        }
        start = start.max(e);
    }
    if len > 0 {
        bus.insert(pos, (start, start + len));
    }
    start
}

/// Checks from a transaction log that no channel left a gap idle that a
/// ready burst would have fit into. Returns the first offending transaction.
pub fn check_work_conservation(log: &[LoggedTransaction]) -> Result<(), LoggedTransaction> {
    let mut per_channel: std::collections::HashMap<usize, Vec<(u64, u64)>> = Default::default();
    for l in log {
        per_channel
            .entry(l.channel)
            .or_default()
            .push((l.record.bus_start, l.record.complete));
    }
    for v in per_channel.values_mut() {
        v.sort_unstable();
    }
    for l in log {
        let busy = &per_channel[&l.channel];
        let len = l.record.complete - l.record.bus_start;
        // every idle gap between readiness and the burst must be too short for it
        let mut free_from = l.record.data_ready;
        for &(s, e) in busy {
            if s >= l.record.bus_start {
                break;
            }
            if e <= free_from {
                continue;
            }
            if s >= free_from + len {
                return Err(*l);
            }
            free_from = free_from.max(e);
        }
        if free_from < l.record.bus_start && free_from + len <= l.record.bus_start {
            return Err(*l);
        }
    }
    Ok(())
}
