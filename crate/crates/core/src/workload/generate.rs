//! Synthetic workload generators for the four workload classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::trace::TraceRecord;
use crate::controller::Op;
use crate::error::{ConfigIssue, Result, SimError};
use crate::geometry::{CacheGeometry, ADDRESS_BITS};

/// Share of CD visits that go to the hot sections.
pub const HOT_VISIT_SHARE: f64 = 0.8;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadClass {
    /// Contention-dominated: large footprint, sequential bursts in sections.
    Cd,
    /// Locality-dominated: small footprint, random single-block picks.
    Ld,
    /// Both-friendly: small footprint, long section bursts.
    Bf,
    /// Non-beneficial: huge footprint, random single-block picks.
    Nb,
}

impl WorkloadClass {
    pub const ALL: [WorkloadClass; 4] = [
        WorkloadClass::Cd,
        WorkloadClass::Ld,
        WorkloadClass::Bf,
        WorkloadClass::Nb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadClass::Cd => "cd",
            WorkloadClass::Ld => "ld",
            WorkloadClass::Bf => "bf",
            WorkloadClass::Nb => "nb",
        }
    }
}

impl std::str::FromStr for WorkloadClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cd" => Ok(WorkloadClass::Cd),
            "ld" => Ok(WorkloadClass::Ld),
            "bf" => Ok(WorkloadClass::Bf),
            "nb" => Ok(WorkloadClass::Nb),
            _ => Err(format!(
                "unknown workload class `{s}` (expected cd, ld, bf or nb)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WorkloadProfile {
    pub class: WorkloadClass,
    /// Footprint in bytes, starting at address 0.
    pub working_set: u64,
    /// Blocks touched back to back on each section visit.
    pub section_burst_len: u64,
    /// CD only: mean accesses between two visits of the same hot section.
    /// Sets the size of the hot region.
    pub reuse_distance: u64,
    pub num_records: u64,
    pub seed: u64,
    /// Mean cycles between consecutive records (exponential gaps).
    pub mean_gap: f64,
    pub write_ratio: f64,
    /// Records are tagged with cores round-robin.
    pub cores: u32,
}

impl WorkloadProfile {
    /// Class defaults scaled to the cache described by `geom`.
    pub fn new(class: WorkloadClass, geom: &CacheGeometry) -> Self {
        let cap = geom.cache_capacity;
        let ways = geom.ways_per_set;
        let (working_set, burst, reuse) = match class {
            // hot sections for three sets in four, 8 blocks each
            WorkloadClass::Cd => (
                3 * cap,
                8,
                (geom.num_sets() as f64 * 6.0 / HOT_VISIT_SHARE) as u64,
            ),
            WorkloadClass::Ld => (cap / 2, 1, 0),
            WorkloadClass::Bf => (cap / 2, ways, 0),
            WorkloadClass::Nb => (8 * cap, 1, 0),
        };
        Self {
            class,
            working_set,
            section_burst_len: burst,
            reuse_distance: reuse,
            num_records: 1_000_000,
            seed: 1,
            mean_gap: 16.0,
            write_ratio: 0.1,
            cores: 4,
        }
    }

    /// Checks the profile against the class semantics for `geom`.
    pub fn validate(&self, geom: &CacheGeometry) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let key = |k: &str| format!("workload.{}.{k}", self.class.name());
        let section = geom.set_bytes();
        let cap = geom.cache_capacity as f64;
        let ws = self.working_set as f64;
        if self.working_set < section {
            issues.push(ConfigIssue::new(
                key("working_set"),
                format!(
                    "{} bytes is smaller than one {section}-byte section",
                    self.working_set
                ),
            ));
            return issues;
        }
        if !self.working_set.is_multiple_of(section) {
            issues.push(ConfigIssue::new(
                key("working_set"),
                format!("must be a multiple of the section size {section}"),
            ));
        }
        if self.working_set > 1 << ADDRESS_BITS {
            issues.push(ConfigIssue::new(
                key("working_set"),
                "exceeds the address space",
            ));
        }
        if self.section_burst_len == 0 || self.section_burst_len > geom.ways_per_set {
            issues.push(ConfigIssue::new(
                key("burst_len"),
                format!(
                    "must be in [1, {}], got {}",
                    geom.ways_per_set, self.section_burst_len
                ),
            ));
        }
        let (ws_ok, ws_rule, burst_ok, burst_rule) = match self.class {
            WorkloadClass::Cd => (
                (2.0 * cap..=4.0 * cap).contains(&ws),
                "2-4x the cache capacity",
                self.section_burst_len >= 8,
                ">= 8",
            ),
            WorkloadClass::Ld => (
                ws <= 0.5 * cap,
                "at most half the cache capacity",
                self.section_burst_len == 1,
                "1",
            ),
            WorkloadClass::Bf => (
                ws <= 0.5 * cap,
                "at most half the cache capacity",
                self.section_burst_len >= 8,
                ">= 8",
            ),
            WorkloadClass::Nb => (
                ws >= 8.0 * cap,
                "at least 8x the cache capacity",
                self.section_burst_len == 1,
                "1",
            ),
        };
        if !ws_ok {
            issues.push(ConfigIssue::new(
                key("working_set"),
                format!("must be {ws_rule}"),
            ));
        }
        if !burst_ok {
            issues.push(ConfigIssue::new(
                key("burst_len"),
                format!("must be {burst_rule} for this class"),
            ));
        }
        if self.class == WorkloadClass::Cd && self.reuse_distance == 0 {
            issues.push(ConfigIssue::new(key("reuse_distance"), "must be positive"));
        }
        if !(self.mean_gap.is_finite() && self.mean_gap >= 0.0) {
            issues.push(ConfigIssue::new(
                key("mean_gap"),
                "must be a nonnegative number",
            ));
        }
        if !(0.0..=1.0).contains(&self.write_ratio) {
            issues.push(ConfigIssue::new(key("write_ratio"), "must be in [0, 1]"));
        }
        if self.cores == 0 || self.cores > 256 {
            issues.push(ConfigIssue::new(key("cores"), "must be in [1, 256]"));
        }
        issues
    }

    /// Number of hot sections a CD profile cycles through.
    pub fn hot_sections(&self, geom: &CacheGeometry) -> u64 {
        let sections = self.working_set / geom.set_bytes();
        let n = (self.reuse_distance as f64 * HOT_VISIT_SHARE / self.section_burst_len as f64)
            .round() as u64;
        n.clamp(1, sections)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Deterministic record stream for one profile.
pub struct Generator {
    profile: WorkloadProfile,
    block_size: u64,
    ways: u64,
    sections: u64,
    hot_sections: u64,
    // hot section k is (k * stride) % sections, scattering the hot region
    stride: u64,
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    cycle: u64,
    emitted: u64,
    // current burst: section base block, next offset, blocks left
    burst: (u64, u64, u64),
    // CD cold-stream position, in blocks
    stream: u64,
}

impl Generator {
    pub fn new(profile: WorkloadProfile, geom: &CacheGeometry) -> Result<Self> {
        let issues = profile.validate(geom);
        if !issues.is_empty() {
            return Err(SimError::Config(issues));
        }
        let sections = profile.working_set / geom.set_bytes();
        let mut stride = ((sections as f64 * 0.618_033_988_7) as u64) | 1;
        while gcd(stride, sections) != 1 {
            stride += 2;
        }
        let gap = (profile.mean_gap > 0.0)
            .then(|| {
                Exp::new(1.0 / profile.mean_gap).map_err(|e| SimError::Workload(e.to_string()))
            })
            .transpose()?;
        Ok(Self {
            profile,
            block_size: geom.block_size,
            ways: geom.ways_per_set,
            sections,
            hot_sections: profile.hot_sections(geom),
            stride: stride % sections.max(1),
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
            gap,
            cycle: 0,
            emitted: 0,
            burst: (0, 0, 0),
            stream: 0,
        })
    }

    /// Fixed starting offset of bursts into `section`.
    fn offset(&self, section: u64) -> u64 {
        splitmix(section) % self.ways
    }

    fn start_visit(&mut self) {
        let p = &self.profile;
        let burst = p.section_burst_len;
        let blocks = self.sections * self.ways;
        self.burst = match p.class {
            WorkloadClass::Ld | WorkloadClass::Nb => {
                let b = self.rng.random_range(0..blocks);
                (b - b % self.ways, b % self.ways, 1)
            }
            WorkloadClass::Bf => {
                let s = self.rng.random_range(0..self.sections);
                (s * self.ways, self.offset(s), burst)
            }
            WorkloadClass::Cd => {
                if self.rng.random_bool(HOT_VISIT_SHARE) {
                    let k = self.rng.random_range(0..self.hot_sections);
                    let s = (k as u128 * self.stride.max(1) as u128 % self.sections as u128) as u64;
                    (s * self.ways, self.offset(s), burst)
                } else {
                    let b = self.stream;
                    let base = b - b % self.ways;
                    let len = burst.min(self.ways - b % self.ways);
                    self.stream = (b + len) % blocks;
                    (base, b % self.ways, len)
                }
            }
        };
    }
}

impl Iterator for Generator {
    type Item = TraceRecord;

    fn next(&mut self) -> Option<TraceRecord> {
        if self.emitted == self.profile.num_records {
            return None;
        }
        if self.burst.2 == 0 {
            self.start_visit();
        }
        let (base, off, left) = self.burst;
        let block = base + off % self.ways;
        self.burst = (base, off + 1, left - 1);
        if self.emitted > 0 {
            if let Some(gap) = &self.gap {
                self.cycle += gap.sample(&mut self.rng).round() as u64;
            }
        }
        let op = if self.profile.write_ratio > 0.0 && self.rng.random_bool(self.profile.write_ratio)
        {
            Op::Write
        } else {
            Op::Read
        };
        let core = (self.emitted % self.profile.cores as u64) as u32;
        self.emitted += 1;
        Some(TraceRecord {
            cycle: self.cycle,
            op,
            addr: block * self.block_size,
            core,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.profile.num_records - self.emitted) as usize;
        (left, Some(left))
    }
}

/// Generates the record stream for `profile`.
pub fn generate(profile: WorkloadProfile, geom: &CacheGeometry) -> Result<Generator> {
    Generator::new(profile, geom)
}
