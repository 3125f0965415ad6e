//! Block-type behaviour of the four workload classes under the hybrid
//! controller: how often blocks switch type, how long types stay stable,
//! and how well the filter flags short following runs.
//!
//!     cargo run --release --example type_analysis -- [records]

use dcsim::controller::{build, Recorder, Simulator};
use dcsim::timing::{DeviceKind, DramDevice};
use dcsim::workload::{analyze_types, generate, WorkloadClass};
use dcsim::{Design, ExperimentConfig};

fn main() -> dcsim::Result<()> {
    let records: u64 = std::env::args()
        .nth(1)
        .map_or(200_000, |a| a.parse().expect("records"));
    let mut cfg = ExperimentConfig::default();
    cfg.workload.num_records = records;

    for class in WorkloadClass::ALL {
        let cache = DramDevice::new(DeviceKind::Cache, cfg.cache, cfg.cpu_mhz);
        let memory = DramDevice::new(DeviceKind::Memory, cfg.memory, cfg.cpu_mhz);
        let controller = build(Design::Gemini, &cfg.controller(), &cache);
        let mut sim = Simulator::new(controller, cache, memory);
        let mut rec = Recorder::default();
        sim.run(
            generate(cfg.profile(class), &cfg.geometry)?.map(|r| r.request()),
            &mut rec,
        );

        let s = analyze_types(&rec.types);
        println!(
            "{}: {} blocks, {} reused, transition ratio {:.3}, fetch attribution {:.3}",
            class.name(),
            s.blocks,
            s.reused_blocks,
            s.transition_ratio,
            s.tag_fetch_attribution
        );
        let runs: Vec<String> = s
            .l_stable
            .iter()
            .take(6)
            .map(|(l, n)| format!("{l}:{n}"))
            .collect();
        println!("  stable runs (length:count) {}", runs.join(" "));
        let short = s.filter_flag_rate_where(|l| l <= 2);
        let long = s.filter_flag_rate_where(|l| l > 3);
        println!("  filter flags after runs <= 2: {short:.3?}, after runs > 3: {long:.3?}");
    }
    Ok(())
}
