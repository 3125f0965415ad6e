//! Runs all three designs on the four workload classes and prints a
//! side-by-side table.
//!
//!     cargo run --release --example compare_designs -- [records] [mean_gap]

use dcsim::config::ExperimentConfig;
use dcsim::runner::sweep;
use dcsim::Design;

fn main() -> dcsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let records: u64 = args.next().map_or(200_000, |a| a.parse().expect("records"));
    let gap: Option<f64> = args.next().map(|a| a.parse().expect("mean gap"));

    let mut cfg = ExperimentConfig::default();
    cfg.workload.num_records = records;
    if let Some(g) = gap {
        cfg.workload.mean_gap = g;
    }
    let workloads: Vec<String> = ["cd", "ld", "bf", "nb"].map(String::from).to_vec();
    let report = sweep(&cfg, &Design::ALL, &workloads)?;

    println!(
        "{:<7} {:<3} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8} {:>9}",
        "design", "wl", "hit", "tc_hit", "B1", "B2", "hit_lat", "miss_lat", "mem_qd", "cache_qd"
    );
    for r in &report.runs {
        println!(
            "{:<7} {:<3} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>8.1} {:>8.1} {:>8.1} {:>9.1}",
            r.design,
            r.workload,
            r.dram_hit_rate,
            r.tag_cache_hit_rate,
            r.case_fractions.B1,
            r.case_fractions.B2,
            r.hit_latency.mean,
            r.miss_latency.mean,
            r.mean_memory_queue_delay,
            r.cache.mean_queue_delay,
        );
    }
    Ok(())
}
