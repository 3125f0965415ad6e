//! Zero-load latencies: the device table, then one isolated read per design
//! for a cold miss and for a hit on the same block.
//!
//!     cargo run --example zero_load_timing

use dcsim::controller::{build, Simulator};
use dcsim::timing::{DeviceKind, DramDevice, RowOutcome};
use dcsim::{AccessOutcome, Design, ExperimentConfig, Request};

fn main() {
    let cfg = ExperimentConfig::default();
    for (name, kind, timing) in [
        ("cache", DeviceKind::Cache, cfg.cache),
        ("memory", DeviceKind::Memory, cfg.memory),
    ] {
        let dev = DramDevice::new(kind, timing, cfg.cpu_mhz);
        println!(
            "{name:<7} row hit {:>4}  closed {:>4}  conflict {:>4}  (64 B burst {} cycles)",
            dev.unloaded_latency(RowOutcome::Hit, 64),
            dev.unloaded_latency(RowOutcome::Closed, 64),
            dev.unloaded_latency(RowOutcome::Conflict, 64),
            dev.burst_cycles(64),
        );
    }

    println!();
    for design in Design::ALL {
        let cache = DramDevice::new(DeviceKind::Cache, cfg.cache, cfg.cpu_mhz);
        let memory = DramDevice::new(DeviceKind::Memory, cfg.memory, cfg.cpu_mhz);
        let controller = build(design, &cfg.controller(), &cache);
        let mut sim = Simulator::new(controller, cache, memory);
        let mut out: Vec<AccessOutcome> = Vec::new();
        // far apart so every request finds the devices idle
        for (i, addr) in [0x4000u64, 0x4000, 0x4040].into_iter().enumerate() {
            sim.submit(Request::read(i as u64 * 100_000, addr), &mut out);
        }
        sim.finish(&mut out);
        for (what, o) in ["cold miss", "same block", "neighbour"].iter().zip(&out) {
            println!(
                "{:<7} {:<10} case {:<2} latency {:>4}",
                design.name(),
                what,
                format!("{:?}", o.case_label),
                o.latency
            );
        }
    }
}
