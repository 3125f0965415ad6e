//! Single runs and design x workload sweeps.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::controller::{build, Design, Simulator};
use crate::error::{Result, SimError};
use crate::metrics::{csv_row, Format, RunStats, StatsFolder, CSV_COLUMNS, SCHEMA_VERSION};
use crate::timing::{DeviceKind, DramDevice};
use crate::workload::{generate, open_trace, WorkloadClass};

/// Where a run's requests come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadSource {
    Class(WorkloadClass),
    Trace(PathBuf),
}

impl WorkloadSource {
    /// A class name selects a generator; anything else is a trace path.
    pub fn parse(name: &str) -> Self {
        match name.parse() {
            Ok(c) => WorkloadSource::Class(c),
            Err(_) => WorkloadSource::Trace(PathBuf::from(name)),
        }
    }
}

/// Runs one design on one workload.
pub fn simulate(cfg: &ExperimentConfig, design: Design, workload: &str) -> Result<RunStats> {
    let cache = DramDevice::new(DeviceKind::Cache, cfg.cache, cfg.cpu_mhz);
    let memory = DramDevice::new(DeviceKind::Memory, cfg.memory, cfg.cpu_mhz);
    let controller = build(design, &cfg.controller(), &cache);
    let mut sim = Simulator::new(controller, cache, memory);
    let mut folder = StatsFolder::new();
    match WorkloadSource::parse(workload) {
        WorkloadSource::Class(class) => {
            for r in generate(cfg.profile(class), &cfg.geometry)? {
                sim.submit(r.request(), &mut folder);
            }
        }
        WorkloadSource::Trace(path) => {
            for r in open_trace(&path)? {
                sim.submit(r?.request(), &mut folder);
            }
        }
    }
    sim.finish(&mut folder);
    Ok(folder.finish(
        design.name(),
        workload,
        &sim.controller.stats(),
        &sim.ctx.cache.stats,
        &sim.ctx.memory.stats,
    ))
}

/// Results of one invocation plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub schema: u32,
    /// Canonical configuration document; feeding it back reruns the experiment.
    pub config: String,
    pub runs: Vec<RunStats>,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
            Format::Csv => {
                let mut out = format!("# dcsim schema {}\n", self.schema);
                for line in self.config.lines() {
                    out.push_str("# ");
                    out.push_str(line);
                    out.push('\n');
                }
                out.push_str(&CSV_COLUMNS.join(","));
                out.push('\n');
                for r in &self.runs {
                    out.push_str(&csv_row(r));
                    out.push('\n');
                }
                out
            }
        }
    }
}

fn check(cfg: &ExperimentConfig) -> Result<()> {
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(SimError::Config(issues))
    }
}

/// Runs the configured design on the configured workload.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    check(cfg)?;
    let stats = simulate(cfg, cfg.design, &cfg.workload.name)?;
    Ok(Report {
        schema: SCHEMA_VERSION,
        config: cfg.to_toml(),
        runs: vec![stats],
    })
}

/// Runs every design on every workload in parallel. Rows come back sorted by
/// (design, workload) whatever order they finished in.
pub fn sweep(cfg: &ExperimentConfig, designs: &[Design], workloads: &[String]) -> Result<Report> {
    check(cfg)?;
    let mut pairs: Vec<(Design, String)> = designs
        .iter()
        .flat_map(|&d| workloads.iter().map(move |w| (d, w.clone())))
        .collect();
    pairs.sort();
    pairs.dedup();
    let runs = pairs
        .par_iter()
        .map(|(d, w)| simulate(cfg, *d, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        schema: SCHEMA_VERSION,
        config: cfg.to_toml(),
        runs,
    })
}

/// Writes the rendered report to the configured path, or returns it for
/// stdout when no path is set.
pub fn write_report(report: &Report, cfg: &ExperimentConfig) -> Result<Option<String>> {
    let text = report.render(cfg.format);
    match &cfg.output_path {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
