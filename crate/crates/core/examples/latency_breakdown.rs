//! Where the time goes: per-design latency split by hit/miss and by block
//! type, with the case mix and traffic that explain it.
//!
//!     cargo run --release --example latency_breakdown -- [workload] [records]

use dcsim::runner::simulate;
use dcsim::{Case, Design, ExperimentConfig};

fn main() -> dcsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let workload = args.next().unwrap_or("ld".into());
    let mut cfg = ExperimentConfig::default();
    cfg.workload.num_records = args.next().map_or(300_000, |a| a.parse().expect("records"));

    for design in Design::ALL {
        let r = simulate(&cfg, design, &workload)?;
        println!("{} on {}", r.design, r.workload);
        let mix: Vec<String> = Case::ALL
            .iter()
            .map(|&c| format!("{c:?} {:.3}", r.case_fractions.get(c)))
            .collect();
        println!("  cases      {}", mix.join("  "));
        for (name, l) in [
            ("hit", &r.hit_latency),
            ("  leading", &r.hit_latency_leading),
            ("  following", &r.hit_latency_following),
            ("miss", &r.miss_latency),
            ("  leading", &r.miss_latency_leading),
            ("  following", &r.miss_latency_following),
        ] {
            println!(
                "  {name:<12} n {:>8}  mean {:>7.1}  p50 {:>5}  p99 {:>5}",
                l.count, l.mean, l.p50, l.p99
            );
        }
        println!(
            "  queue delay cache {:.1} memory {:.1}; bytes cache {} memory {}",
            r.cache.mean_queue_delay,
            r.mean_memory_queue_delay,
            r.cache.total_bytes(),
            r.memory.total_bytes()
        );
    }
    Ok(())
}
