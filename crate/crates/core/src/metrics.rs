//! Aggregation of simulation results into run statistics, and their JSON and
//! CSV renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::controller::{AccessOutcome, Case, ControllerStats, Op, Sink, TypeRecord};
use crate::policy::BlockType;
use crate::timing::DeviceStats;
use crate::workload::{TypeAnalyzer, TypeSummary};

pub const SCHEMA_VERSION: u32 = 1;
pub const LATENCY_BUCKET: u64 = 8;
pub const LATENCY_CAP: u64 = 2048;
const BUCKETS: usize = (LATENCY_CAP / LATENCY_BUCKET) as usize;

/// Fixed-width latency histogram; everything at or above the cap shares the
/// last bucket. Means are exact.
#[derive(Debug, Clone)]
pub struct LatencyHistogram {
    counts: [u64; BUCKETS + 1],
    n: u64,
    sum: u64,
    max: u64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self {
            counts: [0; BUCKETS + 1],
            n: 0,
            sum: 0,
            max: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean: f64,
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

impl LatencyHistogram {
    pub fn record(&mut self, latency: u64) {
        let b = ((latency / LATENCY_BUCKET) as usize).min(BUCKETS);
        self.counts[b] += 1;
        self.n += 1;
        self.sum += latency;
        self.max = self.max.max(latency);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum as f64 / self.n as f64
        }
    }

    /// Upper edge of the bucket holding the `q` quantile, clipped to the
    /// largest value seen.
    pub fn percentile(&self, q: f64) -> u64 {
        if self.n == 0 {
            return 0;
        }
        let rank = ((q * self.n as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= rank {
                let edge = if i == BUCKETS {
                    self.max
                } else {
                    (i as u64 + 1) * LATENCY_BUCKET - 1
                };
                return edge.min(self.max);
            }
        }
        self.max
    }

    pub fn summary(&self) -> LatencySummary {
        LatencySummary {
            count: self.n,
            mean: self.mean(),
            p50: self.percentile(0.5),
            p90: self.percentile(0.9),
            p99: self.percentile(0.99),
            max: self.max,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[allow(non_snake_case)]
pub struct CaseCounts {
    pub A: u64,
    pub B1: u64,
    pub B2: u64,
    pub C: u64,
    pub D: u64,
}

impl CaseCounts {
    pub fn get(&self, case: Case) -> u64 {
        match case {
            Case::A => self.A,
            Case::B1 => self.B1,
            Case::B2 => self.B2,
            Case::C => self.C,
            Case::D => self.D,
        }
    }

    fn bump(&mut self, case: Case) {
        match case {
            Case::A => self.A += 1,
            Case::B1 => self.B1 += 1,
            Case::B2 => self.B2 += 1,
            Case::C => self.C += 1,
            Case::D => self.D += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.A + self.B1 + self.B2 + self.C + self.D
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[allow(non_snake_case)]
pub struct CaseFractions {
    pub A: f64,
    pub B1: f64,
    pub B2: f64,
    pub C: f64,
    pub D: f64,
}

impl CaseFractions {
    pub fn get(&self, case: Case) -> f64 {
        match case {
            Case::A => self.A,
            Case::B1 => self.B1,
            Case::B2 => self.B2,
            Case::C => self.C,
            Case::D => self.D,
        }
    }

    pub fn sum(&self) -> f64 {
        self.A + self.B1 + self.B2 + self.C + self.D
    }
}

/// Transaction-log summary of one DRAM device.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeviceSummary {
    pub transactions: u64,
    pub reads: u64,
    pub writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub bytes_by_purpose: BTreeMap<String, u64>,
    pub row_hits: u64,
    pub row_closed: u64,
    pub row_conflicts: u64,
    pub mean_queue_delay: f64,
    pub max_queue_delay: u64,
}

impl From<&DeviceStats> for DeviceSummary {
    fn from(s: &DeviceStats) -> Self {
        Self {
            transactions: s.transactions,
            reads: s.reads,
            writes: s.writes,
            bytes_read: s.bytes_read,
            bytes_written: s.bytes_written,
            bytes_by_purpose: s
                .bytes_by_purpose
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            row_hits: s.row_hits,
            row_closed: s.row_closed,
            row_conflicts: s.row_conflicts,
            mean_queue_delay: s.mean_queue_delay(),
            max_queue_delay: s.queue_delay_max,
        }
    }
}

impl DeviceSummary {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_read + self.bytes_written
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunStats {
    pub schema: u32,
    pub design: String,
    pub workload: String,
    /// Requests of either kind.
    pub record_count: u64,
    pub reads: u64,
    pub writes: u64,
    pub dram_hit_rate: f64,
    pub tag_cache_hit_rate: f64,
    pub case_counts: CaseCounts,
    pub case_fractions: CaseFractions,
    pub hit_latency: LatencySummary,
    pub hit_latency_leading: LatencySummary,
    pub hit_latency_following: LatencySummary,
    pub miss_latency: LatencySummary,
    pub miss_latency_leading: LatencySummary,
    pub miss_latency_following: LatencySummary,
    pub miss_penalty_leading: f64,
    pub miss_penalty_following: f64,
    /// Bytes on the critical path of read requests.
    pub critical_bytes_cache: u64,
    pub critical_bytes_memory: u64,
    pub cache: DeviceSummary,
    pub memory: DeviceSummary,
    pub mean_memory_queue_delay: f64,
    pub transition_ratio: f64,
    pub l_stable: BTreeMap<u64, u64>,
    pub tag_fetch_attribution: f64,
    pub filter_flag_rate: BTreeMap<u64, f64>,
    pub migration_count: u64,
    pub controller: ControllerStats,
    /// Completion time of the last request.
    pub last_cycle: u64,
}

impl RunStats {
    pub fn hit_count(&self) -> u64 {
        self.case_counts.A + self.case_counts.B1 + self.case_counts.B2
    }

    /// Share of cache hits served through the serialized tag-then-data path.
    pub fn b2_share_of_hits(&self) -> f64 {
        ratio(self.case_counts.B2, self.hit_count())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Single-pass reducer over a run's outcome and type streams.
#[derive(Debug, Clone, Default)]
pub struct StatsFolder {
    reads: u64,
    writes: u64,
    cases: CaseCounts,
    // [hit, miss] x [leading, following]
    latency: [[LatencyHistogram; 2]; 2],
    bytes_cache: u64,
    bytes_mem: u64,
    types: TypeAnalyzer,
    last_cycle: u64,
}

fn type_index(t: BlockType) -> usize {
    match t {
        BlockType::Leading => 0,
        BlockType::Following => 1,
    }
}

impl StatsFolder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn types(&self) -> TypeSummary {
        self.types.summary()
    }

    pub fn finish(
        &self,
        design: &str,
        workload: &str,
        controller: &ControllerStats,
        cache: &DeviceStats,
        memory: &DeviceStats,
    ) -> RunStats {
        let total = self.cases.total();
        let frac = |c: u64| ratio(c, total);
        let merged = |h: &[LatencyHistogram; 2]| {
            let mut m = h[0].clone();
            for (i, c) in h[1].counts.iter().enumerate() {
                m.counts[i] += c;
            }
            m.n += h[1].n;
            m.sum += h[1].sum;
            m.max = m.max.max(h[1].max);
            m
        };
        let penalty = |t: usize| {
            let (h, m) = (&self.latency[0][t], &self.latency[1][t]);
            if h.count() == 0 || m.count() == 0 {
                0.0
            } else {
                m.mean() - h.mean()
            }
        };
        let types = self.types.summary();
        let c = &self.cases;
        RunStats {
            schema: SCHEMA_VERSION,
            design: design.to_string(),
            workload: workload.to_string(),
            record_count: self.reads + self.writes,
            reads: self.reads,
            writes: self.writes,
            dram_hit_rate: frac(c.A + c.B1 + c.B2),
            tag_cache_hit_rate: frac(c.A + c.C),
            case_counts: *c,
            case_fractions: CaseFractions {
                A: frac(c.A),
                B1: frac(c.B1),
                B2: frac(c.B2),
                C: frac(c.C),
                D: frac(c.D),
            },
            hit_latency: merged(&self.latency[0]).summary(),
            hit_latency_leading: self.latency[0][0].summary(),
            hit_latency_following: self.latency[0][1].summary(),
            miss_latency: merged(&self.latency[1]).summary(),
            miss_latency_leading: self.latency[1][0].summary(),
            miss_latency_following: self.latency[1][1].summary(),
            miss_penalty_leading: penalty(0),
            miss_penalty_following: penalty(1),
            critical_bytes_cache: self.bytes_cache,
            critical_bytes_memory: self.bytes_mem,
            cache: cache.into(),
            memory: memory.into(),
            mean_memory_queue_delay: memory.mean_queue_delay(),
            transition_ratio: types.transition_ratio,
            l_stable: types.l_stable.clone(),
            tag_fetch_attribution: types.tag_fetch_attribution,
            filter_flag_rate: types
                .filter_flags
                .iter()
                .map(|(&k, &(f, n))| (k, ratio(f, n)))
                .collect(),
            migration_count: controller.migrations,
            controller: controller.clone(),
            last_cycle: self.last_cycle,
        }
    }
}

impl Sink for StatsFolder {
    fn outcome(&mut self, o: &AccessOutcome) {
        self.last_cycle = self.last_cycle.max(o.arrival + o.latency);
        if o.op == Op::Write {
            self.writes += 1;
            return;
        }
        self.reads += 1;
        self.cases.bump(o.case_label);
        let hit = if o.dram_cache_hit { 0 } else { 1 };
        self.latency[hit][type_index(o.block_type_current)].record(o.latency);
        self.bytes_cache += o.bytes_cache;
        self.bytes_mem += o.bytes_mem;
    }

    fn type_record(&mut self, r: &TypeRecord) {
        self.types.observe(r);
    }
}

/// Folds a bare outcome stream (no device or controller data).
pub fn fold<'a>(outcomes: impl IntoIterator<Item = &'a AccessOutcome>) -> RunStats {
    let mut f = StatsFolder::new();
    for o in outcomes {
        f.outcome(o);
    }
    f.finish(
        "",
        "",
        &ControllerStats::default(),
        &DeviceStats::default(),
        &DeviceStats::default(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

pub const CSV_COLUMNS: [&str; 30] = [
    "schema",
    "design",
    "workload",
    "record_count",
    "reads",
    "writes",
    "dram_hit_rate",
    "tag_cache_hit_rate",
    "frac_a",
    "frac_b1",
    "frac_b2",
    "frac_c",
    "frac_d",
    "hit_latency_mean",
    "hit_latency_p50",
    "hit_latency_p90",
    "hit_latency_p99",
    "hit_latency_leading_mean",
    "hit_latency_following_mean",
    "miss_latency_mean",
    "miss_penalty_leading",
    "miss_penalty_following",
    "cache_bytes",
    "memory_bytes",
    "mean_memory_queue_delay",
    "transition_ratio",
    "tag_fetch_attribution",
    "migration_count",
    "tag_batch_fetches",
    "last_cycle",
];

pub fn csv_row(s: &RunStats) -> String {
    let f = &s.case_fractions;
    let fields: Vec<String> = vec![
        s.schema.to_string(),
        s.design.clone(),
        s.workload.clone(),
        s.record_count.to_string(),
        s.reads.to_string(),
        s.writes.to_string(),
        s.dram_hit_rate.to_string(),
        s.tag_cache_hit_rate.to_string(),
        f.A.to_string(),
        f.B1.to_string(),
        f.B2.to_string(),
        f.C.to_string(),
        f.D.to_string(),
        s.hit_latency.mean.to_string(),
        s.hit_latency.p50.to_string(),
        s.hit_latency.p90.to_string(),
        s.hit_latency.p99.to_string(),
        s.hit_latency_leading.mean.to_string(),
        s.hit_latency_following.mean.to_string(),
        s.miss_latency.mean.to_string(),
        s.miss_penalty_leading.to_string(),
        s.miss_penalty_following.to_string(),
        s.cache.total_bytes().to_string(),
        s.memory.total_bytes().to_string(),
        s.mean_memory_queue_delay.to_string(),
        s.transition_ratio.to_string(),
        s.tag_fetch_attribution.to_string(),
        s.migration_count.to_string(),
        s.controller.batch_fetches.to_string(),
        s.last_cycle.to_string(),
    ];
    debug_assert_eq!(fields.len(), CSV_COLUMNS.len());
    fields.join(",")
}

/// Renders one run's statistics.
pub fn emit(stats: &RunStats, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(stats).expect("stats serialize") + "\n",
        Format::Csv => {
            let mut out = CSV_COLUMNS.join(",");
            out.push('\n');
            let _ = writeln!(out, "{}", csv_row(stats));
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(case: Case, latency: u64, current: BlockType) -> AccessOutcome {
        AccessOutcome {
            id: 0,
            op: Op::Read,
            case_label: case,
            dram_cache_hit: case.is_hit(),
            tag_cache_hit: case.tag_cache_hit(),
            arrival: 0,
            latency,
            bytes_cache: 0,
            bytes_mem: 0,
            block_type_current: current,
            block_type_stored: None,
        }
    }

    #[test]
    fn single_case_a() {
        let s = fold(&[outcome(Case::A, 49, BlockType::Following)]);
        assert_eq!(s.dram_hit_rate, 1.0);
        assert_eq!(s.case_fractions.A, 1.0);
        assert_eq!(s.hit_latency.mean, 49.0);
        assert_eq!(s.schema, 1);
    }

    #[test]
    fn empty_log_is_all_zero() {
        let s = fold(&[]);
        assert_eq!(s.record_count, 0);
        assert_eq!(s.dram_hit_rate, 0.0);
        assert_eq!(s.case_fractions.sum(), 0.0);
        for f in [Format::Json, Format::Csv] {
            assert!(!emit(&s, f).is_empty());
        }
    }

    #[test]
    fn leading_miss_penalty_is_difference_of_means() {
        let s = fold(&[
            outcome(Case::B1, 85, BlockType::Leading),
            outcome(Case::D, 173, BlockType::Leading),
            outcome(Case::D, 201, BlockType::Leading),
        ]);
        assert_eq!(s.miss_penalty_leading, 187.0 - 85.0);
        assert_eq!(s.miss_penalty_following, 0.0);
    }

    #[test]
    fn writes_do_not_enter_case_statistics() {
        let mut w = outcome(Case::C, 500, BlockType::Following);
        w.op = Op::Write;
        let s = fold(&[w, outcome(Case::A, 49, BlockType::Following)]);
        assert_eq!((s.reads, s.writes, s.record_count), (1, 1, 2));
        assert_eq!(s.case_counts.total(), 1);
    }

    #[test]
    fn histogram_percentiles() {
        let mut h = LatencyHistogram::default();
        for l in 1..=100 {
            h.record(l);
        }
        assert_eq!(h.percentile(0.5), 55);
        assert_eq!(h.percentile(0.99), 100);
        h.record(10_000);
        assert_eq!(h.percentile(1.0), 10_000);
        assert_eq!(h.summary().max, 10_000);
    }

    #[test]
    fn json_round_trip() {
        let mut s = fold(&[
            outcome(Case::B2, 125, BlockType::Leading),
            outcome(Case::C, 97, BlockType::Following),
        ]);
        s.l_stable.insert(3, 7);
        s.filter_flag_rate.insert(1, 0.5);
        let back: RunStats = serde_json::from_str(&emit(&s, Format::Json)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_header_matches_row() {
        let s = fold(&[outcome(Case::A, 49, BlockType::Following)]);
        let text = emit(&s, Format::Csv);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }
}
