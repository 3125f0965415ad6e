use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcsim::config::ExperimentConfig;
use dcsim::runner;
use dcsim::{Design, Format, SimError};

#[derive(Parser)]
#[command(name = "dcsim", version, about = "Die-stacked DRAM cache simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one design on one workload.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        design: Option<Design>,
        /// Workload class (cd, ld, bf, nb) or trace file path.
        #[arg(long)]
        workload: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
    },
    /// Simulate every design on every workload.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        designs: Vec<Design>,
        #[arg(long, value_delimiter = ',', required = true)]
        workloads: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
    },
}

fn load(
    path: &Path,
    out: Option<PathBuf>,
    format: Option<Format>,
) -> Result<ExperimentConfig, SimError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if out.is_some() {
        cfg.output_path = out;
    }
    if let Some(f) = format {
        cfg.format = f;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), SimError> {
    let (cfg, report) = match cli.command {
        Command::Run {
            config,
            design,
            workload,
            seed,
            out,
            format,
        } => {
            let mut cfg = load(&config, out, format)?;
            if let Some(d) = design {
                cfg.design = d;
            }
            if let Some(w) = workload {
                cfg.workload.name = w;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = runner::run(&cfg)?;
            (cfg, report)
        }
        Command::Sweep {
            config,
            designs,
            workloads,
            out,
            format,
        } => {
            let cfg = load(&config, out, format)?;
            let report = runner::sweep(&cfg, &designs, &workloads)?;
            (cfg, report)
        }
    };
    for r in &report.runs {
        eprintln!(
            "{} {}: hit rate {:.4}, mean hit latency {:.1}, memory queue delay {:.1}",
            r.design, r.workload, r.dram_hit_rate, r.hit_latency.mean, r.mean_memory_queue_delay
        );
    }
    if let Some(text) = runner::write_report(&report, &cfg)? {
        print!("{text}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
