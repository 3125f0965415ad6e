use dcsim::config::ExperimentConfig;
use dcsim::metrics::{fold, Format};
use dcsim::runner::{run, simulate, sweep, Report};
use dcsim::workload::{open_trace, parse_line, write_csv, CsvReader, TraceRecord};
use dcsim::{Design, Request};

fn cfg(records: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.workload.num_records = records;
    c
}

#[test]
fn bf_keeps_batches_on_chip_and_types_stable() {
    let r = simulate(&cfg(200_000), Design::Gemini, "bf").unwrap();
    assert!(
        r.tag_cache_hit_rate > 0.7,
        "tag cache hit rate {}",
        r.tag_cache_hit_rate
    );
    assert!(
        r.transition_ratio < 0.1,
        "transition ratio {}",
        r.transition_ratio
    );
}

#[test]
fn ld_misses_in_the_tag_cache() {
    let r = simulate(&cfg(200_000), Design::Gemini, "ld").unwrap();
    assert!(
        r.tag_cache_hit_rate < 0.5,
        "tag cache hit rate {}",
        r.tag_cache_hit_rate
    );
}

#[test]
fn gemini_hits_faster_than_lh_on_ld() {
    let c = cfg(200_000);
    let gem = simulate(&c, Design::Gemini, "ld").unwrap();
    let lh = simulate(&c, Design::Lh, "ld").unwrap();
    assert!(
        gem.hit_latency.mean < lh.hit_latency.mean,
        "gemini {} lh {}",
        gem.hit_latency.mean,
        lh.hit_latency.mean
    );
}

#[test]
fn same_seed_same_bytes_other_seed_differs() {
    let mut c = cfg(20_000);
    c.workload.name = "bf".into();
    let a = run(&c).unwrap().render(Format::Json);
    assert_eq!(a, run(&c).unwrap().render(Format::Json));
    c.seed = 2;
    assert_ne!(a, run(&c).unwrap().render(Format::Json));
}

#[test]
fn json_report_round_trips() {
    let c = cfg(10_000);
    let report = sweep(&c, &[Design::Lh, Design::Gemini], &["nb".into()]).unwrap();
    let back: Report = serde_json::from_str(&report.render(Format::Json)).unwrap();
    assert_eq!(back, report);
}

#[test]
fn empty_outcome_log_folds_to_zeros() {
    let s = fold(&[]);
    assert_eq!(s.record_count, 0);
    assert_eq!(s.dram_hit_rate, 0.0);
    let doc = dcsim::metrics::emit(&s, Format::Json);
    let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    assert_eq!(v["schema"], 1);
}

#[test]
fn trace_parsing_edge_cases() {
    assert_eq!(
        parse_line("100,R,0x1f40,0", 1).unwrap(),
        TraceRecord {
            cycle: 100,
            op: dcsim::controller::Op::Read,
            addr: 0x1f40,
            core: 0
        }
    );
    let err = CsvReader::new("100,X,0x0,0\n".as_bytes())
        .next()
        .unwrap()
        .unwrap_err();
    assert!(matches!(err, dcsim::SimError::Trace { line: 1, .. }));
    assert_eq!(CsvReader::new("".as_bytes()).count(), 0);

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(open_trace(&empty).unwrap().count(), 0);
}

#[test]
fn trace_file_matches_in_memory_requests() {
    let c = cfg(5_000);
    let trace: Vec<TraceRecord> =
        dcsim::workload::generate(c.profile(dcsim::workload::WorkloadClass::Cd), &c.geometry)
            .unwrap()
            .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cd.csv");
    write_csv(
        &mut std::fs::File::create(&path).unwrap(),
        trace.iter().copied(),
    )
    .unwrap();

    let from_file = simulate(&c, Design::Direct, path.to_str().unwrap()).unwrap();
    let from_class = simulate(&c, Design::Direct, "cd").unwrap();
    assert_eq!(from_file.case_counts, from_class.case_counts);
    assert_eq!(from_file.hit_latency, from_class.hit_latency);
    let reqs: Vec<Request> = trace.iter().map(|r| r.request()).collect();
    assert_eq!(reqs.len() as u64, from_file.record_count);
}

#[test]
fn validation_reports_every_problem() {
    let mut c = ExperimentConfig::default();
    assert!(c.validate().is_empty());
    c.geometry.cache_capacity = 1000;
    c.cache.tcas = -1;
    let issues: Vec<String> = c.validate().iter().map(|i| i.to_string()).collect();
    assert!(
        issues.iter().any(|i| i.contains("cache_capacity")),
        "{issues:?}"
    );
    assert!(issues.iter().any(|i| i.contains("tcas")), "{issues:?}");
}
