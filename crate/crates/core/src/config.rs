//! Experiment configuration: a flat `section.key = value` document (valid
//! TOML), environment overrides, and validation.
//!
//! Environment variables named `DCSIM_<SECTION>__<KEY>` override file values,
//! e.g. `DCSIM_CACHE__TCAS=40` sets `cache.tcas`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::controller::{ControllerConfig, Design, TagCacheConfig};
use crate::error::{ConfigIssue, Result, SimError};
use crate::geometry::CacheGeometry;
use crate::metrics::Format;
use crate::policy::PolicyConfig;
use crate::timing::DeviceTiming;
use crate::workload::{WorkloadClass, WorkloadProfile};

pub const ENV_PREFIX: &str = "DCSIM_";

const DEVICE_KEYS: [&str; 9] = [
    "tcas",
    "trcd",
    "trp",
    "tras",
    "channels",
    "bus_width_bits",
    "bus_clock_mhz",
    "banks",
    "row_buffer_bytes",
];

/// Per-class generator overrides; unset fields use the class defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassOverrides {
    pub working_set: Option<u64>,
    pub burst_len: Option<u64>,
    pub reuse_distance: Option<u64>,
    pub mean_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSettings {
    /// A workload class name, or a path to a trace file.
    pub name: String,
    pub num_records: u64,
    pub mean_gap: f64,
    pub write_ratio: f64,
    pub cores: u32,
    pub classes: BTreeMap<WorkloadClass, ClassOverrides>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub design: Design,
    pub seed: u64,
    pub cpu_mhz: u64,
    pub geometry: CacheGeometry,
    pub cache: DeviceTiming,
    pub memory: DeviceTiming,
    pub tag_cache: TagCacheConfig,
    pub policy: PolicyConfig,
    pub p_bypass: f64,
    pub lh_ways: u64,
    pub tad_extra_bytes: u64,
    pub workload: WorkloadSettings,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ctl = ControllerConfig::default();
        let base = WorkloadProfile::new(WorkloadClass::Ld, &ctl.geometry);
        Self {
            design: Design::Gemini,
            seed: 1,
            cpu_mhz: 3200,
            geometry: ctl.geometry,
            cache: DeviceTiming::stacked_cache(),
            memory: DeviceTiming::main_memory(),
            tag_cache: ctl.tag_cache,
            policy: ctl.policy,
            p_bypass: ctl.p_bypass,
            lh_ways: ctl.lh_ways,
            tad_extra_bytes: ctl.tad_extra_bytes,
            workload: WorkloadSettings {
                name: "ld".into(),
                num_records: base.num_records,
                mean_gap: base.mean_gap,
                write_ratio: base.write_ratio,
                cores: base.cores,
                classes: WorkloadClass::ALL
                    .iter()
                    .map(|&c| (c, ClassOverrides::default()))
                    .collect(),
            },
            output_path: None,
            format: Format::Json,
        }
    }
}

fn type_name(v: &toml::Value) -> &'static str {
    v.type_str()
}

fn as_u64(v: &toml::Value) -> std::result::Result<u64, String> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        toml::Value::Integer(i) => Err(format!("must be nonnegative, got {i}")),
        other => Err(format!("expected an integer, got {}", type_name(other))),
    }
}

fn as_i64(v: &toml::Value) -> std::result::Result<i64, String> {
    match v {
        toml::Value::Integer(i) => Ok(*i),
        other => Err(format!("expected an integer, got {}", type_name(other))),
    }
}

fn as_f64(v: &toml::Value) -> std::result::Result<f64, String> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, got {}", type_name(other))),
    }
}

fn as_bool(v: &toml::Value) -> std::result::Result<bool, String> {
    v.as_bool()
        .ok_or_else(|| format!("expected a boolean, got {}", type_name(v)))
}

fn as_str(v: &toml::Value) -> std::result::Result<&str, String> {
    v.as_str()
        .ok_or_else(|| format!("expected a string, got {}", type_name(v)))
}

fn device_field<'a>(d: &'a mut DeviceTiming, key: &str) -> Option<&'a mut i64> {
    Some(match key {
        "tcas" => &mut d.tcas,
        "trcd" => &mut d.trcd,
        "trp" => &mut d.trp,
        "tras" => &mut d.tras,
        "channels" => &mut d.channels,
        "bus_width_bits" => &mut d.bus_width_bits,
        "bus_clock_mhz" => &mut d.bus_clock_mhz,
        "banks" => &mut d.banks,
        "row_buffer_bytes" => &mut d.row_buffer_bytes,
        _ => return None,
    })
}

fn device_value(d: &DeviceTiming, key: &str) -> i64 {
    let mut copy = *d;
    *device_field(&mut copy, key).expect("known device key")
}

/// Flattens nested tables into dotted key paths.
fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Parses an environment value as a TOML scalar, falling back to a string.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ExperimentConfig {
    /// Sets one dotted key. Unknown keys and ill-typed values are errors.
    pub fn set(&mut self, key: &str, value: &toml::Value) -> std::result::Result<(), ConfigIssue> {
        let issue = |m: String| ConfigIssue::new(key, m);
        let r: std::result::Result<(), String> = (|| {
            match key {
                "run.design" => self.design = as_str(value)?.parse()?,
                "run.seed" => self.seed = as_u64(value)?,
                "run.cpu_mhz" => self.cpu_mhz = as_u64(value)?,
                "geometry.block_size" => self.geometry.block_size = as_u64(value)?,
                "geometry.ways" => self.geometry.ways_per_set = as_u64(value)?,
                "geometry.cache_capacity" => self.geometry.cache_capacity = as_u64(value)?,
                "geometry.tag_size" => self.geometry.tag_size = as_u64(value)?,
                "geometry.row_size" => self.geometry.row_size = as_u64(value)?,
                "tag_cache.entries" => self.tag_cache.entries = as_u64(value)? as usize,
                "tag_cache.assoc" => self.tag_cache.assoc = as_u64(value)? as usize,
                "tag_cache.latency" => self.tag_cache.latency = as_u64(value)?,
                "policy.p_bypass" => self.p_bypass = as_f64(value)?,
                "policy.filter_enabled" => self.policy.filter_enabled = as_bool(value)?,
                "policy.reservation_enabled" => self.policy.reservation_enabled = as_bool(value)?,
                "lh.ways" => self.lh_ways = as_u64(value)?,
                "direct.tad_extra_bytes" => self.tad_extra_bytes = as_u64(value)?,
                "workload.name" => self.workload.name = as_str(value)?.to_string(),
                "workload.num_records" => self.workload.num_records = as_u64(value)?,
                "workload.mean_gap" => self.workload.mean_gap = as_f64(value)?,
                "workload.write_ratio" => self.workload.write_ratio = as_f64(value)?,
                "workload.cores" => {
                    self.workload.cores =
                        u32::try_from(as_u64(value)?).map_err(|e| e.to_string())?
                }
                "output.path" => {
                    let p = as_str(value)?;
                    self.output_path = (!p.is_empty()).then(|| PathBuf::from(p));
                }
                "output.format" => self.format = as_str(value)?.parse()?,
                _ => return self.set_nested(key, value),
            }
            Ok(())
        })();
        r.map_err(issue)
    }

    fn set_nested(&mut self, key: &str, value: &toml::Value) -> std::result::Result<(), String> {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            [dev @ ("cache" | "memory"), field] => {
                let d = if *dev == "cache" {
                    &mut self.cache
                } else {
                    &mut self.memory
                };
                let slot = device_field(d, field).ok_or("unknown key")?;
                *slot = as_i64(value)?;
                Ok(())
            }
            ["workload", class, field] => {
                let class: WorkloadClass = class.parse().map_err(|_| "unknown key".to_string())?;
                let o = self.workload.classes.entry(class).or_default();
                match *field {
                    "working_set" => o.working_set = Some(as_u64(value)?),
                    "burst_len" => o.burst_len = Some(as_u64(value)?),
                    "reuse_distance" => o.reuse_distance = Some(as_u64(value)?),
                    "mean_gap" => o.mean_gap = Some(as_f64(value)?),
                    _ => return Err("unknown key".into()),
                }
                Ok(())
            }
            _ => Err("unknown key".into()),
        }
    }

    /// Applies every entry of a TOML document; returns all problems found.
    pub fn apply_toml(&mut self, text: &str) -> Vec<ConfigIssue> {
        let table: toml::Table = match toml::from_str(text) {
            Ok(t) => t,
            Err(e) => return vec![ConfigIssue::new("<document>", e.message().to_string())],
        };
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        entries
            .iter()
            .filter_map(|(k, v)| self.set(k, v).err())
            .collect()
    }

    /// Applies `DCSIM_SECTION__KEY=value` overrides from `vars`.
    pub fn apply_env(
        &mut self,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(ENV_PREFIX)
                    .map(|rest| (rest.to_ascii_lowercase().replace("__", "."), v))
            })
            .collect();
        overrides.sort();
        for (key, raw) in overrides {
            if let Err(e) = self.set(&key, &env_value(&raw)) {
                issues.push(e);
            }
        }
        issues
    }

    /// Parses a document on top of the defaults, without environment
    /// overrides or validation.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let issues = cfg.apply_toml(text);
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(SimError::Config(issues))
        }
    }

    /// Reads `path`, applies process environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        let mut issues = cfg.apply_toml(&text);
        issues.extend(cfg.apply_env(std::env::vars()));
        issues.extend(cfg.validate());
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(SimError::Config(issues))
        }
    }

    /// Every configuration problem, not just the first.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = self.geometry.validate();
        let geometry_ok = issues.is_empty();
        issues.extend(self.cache.validate("cache"));
        issues.extend(self.memory.validate("memory"));
        if self.cpu_mhz == 0 {
            issues.push(ConfigIssue::new("run.cpu_mhz", "must be positive"));
        }
        if self.cache.row_buffer_bytes > 0
            && self.geometry.row_size != self.cache.row_buffer_bytes as u64
        {
            issues.push(ConfigIssue::new(
                "geometry.row_size",
                format!(
                    "must equal cache.row_buffer_bytes ({})",
                    self.cache.row_buffer_bytes
                ),
            ));
        }
        let tc = &self.tag_cache;
        if tc.entries == 0 || tc.assoc == 0 || !tc.entries.is_multiple_of(tc.assoc) {
            issues.push(ConfigIssue::new(
                "tag_cache.entries",
                format!(
                    "{} entries is not a positive multiple of assoc {}",
                    tc.entries, tc.assoc
                ),
            ));
        } else if !(tc.entries / tc.assoc).is_power_of_two() {
            issues.push(ConfigIssue::new(
                "tag_cache.entries",
                format!(
                    "entries / assoc = {} sets is not a power of two",
                    tc.entries / tc.assoc
                ),
            ));
        } else if geometry_ok
            && !(tc.entries * self.geometry.ways_per_set as usize / tc.assoc).is_power_of_two()
        {
            issues.push(ConfigIssue::new(
                "geometry.ways",
                "the per-tag cache of the direct-mapped design needs a power-of-two set count",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_bypass) {
            issues.push(ConfigIssue::new("policy.p_bypass", "must be in [0, 1]"));
        }
        if self.lh_ways == 0 {
            issues.push(ConfigIssue::new("lh.ways", "must be at least 1"));
        } else if geometry_ok
            && self.geometry.row_size / self.geometry.block_size < self.lh_ways + 1
        {
            issues.push(ConfigIssue::new(
                "lh.ways",
                "a row must hold one set plus its tag block",
            ));
        }
        if self.workload.name.is_empty() {
            issues.push(ConfigIssue::new(
                "workload.name",
                "must name a workload class or a trace file",
            ));
        }
        if geometry_ok {
            for class in WorkloadClass::ALL {
                issues.extend(self.profile(class).validate(&self.geometry));
            }
        }
        issues
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            geometry: self.geometry,
            lh_ways: self.lh_ways,
            tag_cache: self.tag_cache,
            policy: self.policy,
            p_bypass: self.p_bypass,
            tad_extra_bytes: self.tad_extra_bytes,
            seed: self.seed,
        }
    }

    /// Generator profile for `class` with all overrides applied.
    pub fn profile(&self, class: WorkloadClass) -> WorkloadProfile {
        let base = WorkloadProfile::new(class, &self.geometry);
        let o = self
            .workload
            .classes
            .get(&class)
            .copied()
            .unwrap_or_default();
        WorkloadProfile {
            working_set: o.working_set.unwrap_or(base.working_set),
            section_burst_len: o.burst_len.unwrap_or(base.section_burst_len),
            reuse_distance: o.reuse_distance.unwrap_or(base.reuse_distance),
            mean_gap: o.mean_gap.unwrap_or(self.workload.mean_gap),
            num_records: self.workload.num_records,
            seed: self.seed,
            write_ratio: self.workload.write_ratio,
            cores: self.workload.cores,
            ..base
        }
    }

    /// All keys with their current values, in document order.
    pub fn entries(&self) -> Vec<(String, toml::Value)> {
        use toml::Value::{Boolean, Float, Integer, String as Str};
        let mut v: Vec<(String, toml::Value)> = vec![
            ("run.design".into(), Str(self.design.name().into())),
            ("run.seed".into(), Integer(self.seed as i64)),
            ("run.cpu_mhz".into(), Integer(self.cpu_mhz as i64)),
            (
                "geometry.block_size".into(),
                Integer(self.geometry.block_size as i64),
            ),
            (
                "geometry.ways".into(),
                Integer(self.geometry.ways_per_set as i64),
            ),
            (
                "geometry.cache_capacity".into(),
                Integer(self.geometry.cache_capacity as i64),
            ),
            (
                "geometry.tag_size".into(),
                Integer(self.geometry.tag_size as i64),
            ),
            (
                "geometry.row_size".into(),
                Integer(self.geometry.row_size as i64),
            ),
        ];
        for (name, d) in [("cache", &self.cache), ("memory", &self.memory)] {
            for k in DEVICE_KEYS {
                v.push((format!("{name}.{k}"), Integer(device_value(d, k))));
            }
        }
        v.extend([
            (
                "tag_cache.entries".into(),
                Integer(self.tag_cache.entries as i64),
            ),
            (
                "tag_cache.assoc".into(),
                Integer(self.tag_cache.assoc as i64),
            ),
            (
                "tag_cache.latency".into(),
                Integer(self.tag_cache.latency as i64),
            ),
            ("policy.p_bypass".into(), Float(self.p_bypass)),
            (
                "policy.filter_enabled".into(),
                Boolean(self.policy.filter_enabled),
            ),
            (
                "policy.reservation_enabled".into(),
                Boolean(self.policy.reservation_enabled),
            ),
            ("lh.ways".into(), Integer(self.lh_ways as i64)),
            (
                "direct.tad_extra_bytes".into(),
                Integer(self.tad_extra_bytes as i64),
            ),
            ("workload.name".into(), Str(self.workload.name.clone())),
            (
                "workload.num_records".into(),
                Integer(self.workload.num_records as i64),
            ),
            ("workload.mean_gap".into(), Float(self.workload.mean_gap)),
            (
                "workload.write_ratio".into(),
                Float(self.workload.write_ratio),
            ),
            ("workload.cores".into(), Integer(self.workload.cores as i64)),
        ]);
        for (class, o) in &self.workload.classes {
            let c = class.name();
            let opt = [
                ("working_set", o.working_set.map(|x| Integer(x as i64))),
                ("burst_len", o.burst_len.map(|x| Integer(x as i64))),
                (
                    "reuse_distance",
                    o.reuse_distance.map(|x| Integer(x as i64)),
                ),
                ("mean_gap", o.mean_gap.map(Float)),
            ];
            for (k, val) in opt {
                if let Some(val) = val {
                    v.push((format!("workload.{c}.{k}"), val));
                }
            }
        }
        v.push((
            "output.path".into(),
            Str(self
                .output_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()),
        ));
        v.push(("output.format".into(), Str(self.format.name().into())));
        v
    }

    /// Canonical document; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
