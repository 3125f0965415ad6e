//! Generates a workload, writes it as CSV and as binary, reads both back and
//! runs the simulator on the binary file.
//!
//!     cargo run --release --example trace_roundtrip -- [class] [records]

use std::fs::File;
use std::io::BufWriter;

use dcsim::runner::simulate;
use dcsim::workload::{generate, open_trace, write_binary, write_csv, TraceRecord, WorkloadClass};
use dcsim::{Design, ExperimentConfig};

fn main() -> dcsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let class: WorkloadClass = args
        .next()
        .unwrap_or("bf".into())
        .parse()
        .map_err(dcsim::SimError::Workload)?;
    let records: u64 = args.next().map_or(50_000, |a| a.parse().expect("records"));

    let mut cfg = ExperimentConfig::default();
    cfg.workload.num_records = records;
    let trace: Vec<TraceRecord> = generate(cfg.profile(class), &cfg.geometry)?.collect();

    let dir = std::env::temp_dir().join(format!("dcsim-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("trace.csv");
    let bin = dir.join("trace.bin");
    write_csv(
        &mut BufWriter::new(File::create(&csv)?),
        trace.iter().copied(),
    )?;
    write_binary(
        &mut BufWriter::new(File::create(&bin)?),
        trace.iter().copied(),
    )?;

    for path in [&csv, &bin] {
        let back = open_trace(path)?.collect::<dcsim::Result<Vec<_>>>()?;
        println!(
            "{:<40} {:>9} bytes  {} records  identical: {}",
            path.display(),
            std::fs::metadata(path)?.len(),
            back.len(),
            back == trace
        );
    }

    let from_file = simulate(&cfg, Design::Gemini, bin.to_str().expect("utf-8 path"))?;
    let from_class = simulate(&cfg, Design::Gemini, class.name())?;
    println!(
        "hit rate from file {:.4}, from generator {:.4}",
        from_file.dram_hit_rate, from_class.dram_hit_rate
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
