use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "geometry.cache_capacity = 262144\n\
                     tag_cache.entries = 32\n\
                     workload.num_records = 3000\n\
                     workload.name = \"bf\"\n";

fn dcsim(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dcsim"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn config(dir: &TempDir, text: &str) -> String {
    let p = dir.path().join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is json")
}

#[test]
fn run_prints_json_report() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let o = dcsim(&["run", "--config", &cfg], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["runs"][0]["design"], "gemini");
    assert_eq!(v["runs"][0]["workload"], "bf");
    assert!(v["config"]
        .as_str()
        .unwrap()
        .contains("workload.num_records = 3000"));
}

#[test]
fn flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let o = dcsim(
        &[
            "run",
            "--config",
            &cfg,
            "--design",
            "lh",
            "--workload",
            "ld",
            "--seed",
            "9",
        ],
        &[],
    );
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["runs"][0]["design"], "lh");
    assert_eq!(v["runs"][0]["workload"], "ld");
    assert!(v["config"].as_str().unwrap().contains("run.seed = 9"));
}

#[test]
fn out_file_matches_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = dcsim(
            &["run", "--config", &cfg, "--out", p.to_str().unwrap()],
            &[],
        );
        assert_eq!(code(&o), 0);
        assert!(o.stdout.is_empty());
    }
    // the embedded config names the output path, so compare the runs only
    let runs = |p: &Path| {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v["runs"].clone()
    };
    assert_eq!(runs(&a), runs(&b));
}

#[test]
fn sweep_csv_has_one_row_per_pair() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let o = dcsim(
        &[
            "sweep",
            "--config",
            &cfg,
            "--designs",
            "gemini,lh,direct",
            "--workloads",
            "cd,ld,bf,nb",
            "--format",
            "csv",
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("schema,design,workload,"));
    assert_eq!(rows.len(), 1 + 12);
    let width = rows[0].split(',').count();
    assert!(rows.iter().all(|r| r.split(',').count() == width));
}

#[test]
fn env_overrides_apply() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let o = dcsim(
        &["run", "--config", &cfg],
        &[("DCSIM_RUN__DESIGN", "direct"), ("DCSIM_CACHE__TCAS", "40")],
    );
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["runs"][0]["design"], "direct");
    assert!(v["config"].as_str().unwrap().contains("cache.tcas = 40"));
}

#[test]
fn config_errors_exit_2_and_name_every_key() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        &dir,
        "geometry.cache_capacity = 1000\ncache.tcas = -3\nbogus.key = 1\n",
    );
    let o = dcsim(&["run", "--config", &cfg], &[]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["cache_capacity", "cache.tcas", "bogus.key"] {
        assert!(err.contains(key), "missing {key} in {err}");
    }
}

#[test]
fn bad_env_value_is_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let o = dcsim(
        &["run", "--config", &cfg],
        &[("DCSIM_TAG_CACHE__ENTRIES", "many")],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_files_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = dcsim(&["run", "--config", missing.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 3);

    let cfg = config(&dir, SMALL);
    let trace = dir.path().join("nope.csv");
    let o = dcsim(
        &[
            "run",
            "--config",
            &cfg,
            "--workload",
            trace.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 3);

    let unwritable = dir.path().join("no/such/dir/out.json");
    let o = dcsim(
        &[
            "run",
            "--config",
            &cfg,
            "--out",
            unwritable.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 3);
}

#[test]
fn malformed_trace_exits_3_with_line_number() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let trace = dir.path().join("t.csv");
    std::fs::write(&trace, "cycle,op,addr,core\n100,R,0x40,0\n200,X,0x80,0\n").unwrap();
    let o = dcsim(
        &[
            "run",
            "--config",
            &cfg,
            "--workload",
            trace.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn trace_file_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, SMALL);
    let trace = dir.path().join("t.csv");
    std::fs::write(&trace, "100,R,0x1f40,0\n200,R,0x1f40,0\n300,W,0x2000,1\n").unwrap();
    let o = dcsim(
        &[
            "run",
            "--config",
            &cfg,
            "--workload",
            trace.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["runs"][0]["record_count"], 3);
    assert_eq!(v["runs"][0]["reads"], 2);
}
