use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rmtif::sim::{CrtScenario, IrtScenario};
use rmtif::write_wide_csv;
use serde_json::Value;

fn rmtif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmtif"))
        .args(args)
        .env_remove("RMTIF_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn irt_file(dir: &Path, n: usize) -> PathBuf {
    let ds = IrtScenario {
        n,
        ..IrtScenario::default()
    }
    .simulate(3)
    .unwrap();
    let path = dir.join("irt.csv");
    write_wide_csv(&ds, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_reports_every_tau() {
    let dir = tempfile::tempdir().unwrap();
    let input = irt_file(dir.path(), 300);
    let out = dir.path().join("report.json");
    let bouquet = dir.path().join("bouquet.csv");
    let o = rmtif(&[
        "estimate", "--input", path_str(&input), "--design", "irt", "--tau", "1,2,3",
        "--outcome", "cox", "--censor", "cox", "--k", "10", "--seed", "7",
        "--output", path_str(&out), "--bouquet", path_str(&bouquet), "--bouquet-points", "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let est = report["levels"][0]["estimates"].as_array().unwrap();
    assert_eq!(est.len(), 3);
    for e in est {
        assert!(e["se"].as_f64().unwrap() > 0.0);
        assert_eq!(e["stage_deltas"].as_array().unwrap().len(), 3);
        let sum: f64 = e["stage_deltas"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - e["delta"].as_f64().unwrap()).abs() < 1e-12);
    }
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["jackknife"]["df"], 9);
    let csv = fs::read_to_string(&bouquet).unwrap();
    assert!(csv.starts_with("tau,xi1,xi0,delta,delta_q1,delta_q2,delta_q3\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn equal_cluster_sizes_give_equal_levels() {
    let dir = tempfile::tempdir().unwrap();
    let ds = CrtScenario {
        clusters: 12,
        fixed_size: Some(15),
        ..CrtScenario::default()
    }
    .simulate(1)
    .unwrap();
    let input = dir.path().join("crt.csv");
    write_wide_csv(&ds, fs::File::create(&input).unwrap()).unwrap();
    let o = rmtif(&[
        "estimate", "--input", path_str(&input), "--design", "crt", "--level", "both",
        "--tau", "1", "--outcome", "km", "--censor", "km-arm", "--k", "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let levels = report["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    assert_eq!(levels[0]["level"], "crt_cluster");
    assert_eq!(levels[1]["level"], "crt_individual");
    assert_eq!(levels[0]["estimates"][0]["delta"], levels[1]["estimates"][0]["delta"]);
}

#[test]
fn missing_status_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "id,arm,time_1,time_2,status_1,Z1\na,1,1,2,1,0.3\nb,0,1,2,1,0.1\n").unwrap();
    let o = rmtif(&["estimate", "--input", path_str(&input), "--stages", "2", "--tau", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("status_2"), "{}", stderr(&o));
}

#[test]
fn design_flag_must_match_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = irt_file(dir.path(), 40);
    let o = rmtif(&["estimate", "--input", path_str(&input), "--design", "crt", "--tau", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cluster"), "{}", stderr(&o));
}

#[test]
fn tau_beyond_follow_up_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = irt_file(dir.path(), 40);
    let o = rmtif(&["estimate", "--input", path_str(&input), "--tau", "1,1000", "--k", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau 1000"), "{}", stderr(&o));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = irt_file(dir.path(), 200);
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"tau": [0.5, 1.5], "k": 0, "outcome": "none", "censor": "km-pooled"}"#).unwrap();
    let o = rmtif(&["estimate", "--input", path_str(&input), "--tau", "1", "--config", path_str(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["levels"][0]["estimates"].as_array().unwrap().len(), 2);
    assert_eq!(report["config"]["censor"], "km-pooled");
    assert!(report["jackknife"].is_null());

    fs::write(&cfg, r#"{"taus": [1]}"#).unwrap();
    let o = rmtif(&["estimate", "--input", path_str(&input), "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_method_exits_2_listing_methods() {
    let o = rmtif(&["simulate", "--methods", "o1c1,o9c9", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("o9c9") && err.contains("o1c1, o1c0, o0c1, o0c0, o1kp, o0kp, km"), "{err}");
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = rmtif(&[
            "--threads", threads, "simulate", "--design", "irt", "--n", "400", "--reps", "3",
            "--methods", "o1c1,km", "--k", "5", "--seed", "11", "--truth-mc", "2000",
            "--output", path_str(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "2");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("level,method,tau,xi1_truth"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn truth_writes_versioned_table() {
    let o = rmtif(&["truth", "--design", "irt", "--mc", "2000", "--tau", "1,2", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# rmtif-truth format=1"));
    assert!(text.contains("seed=5"));
}

#[test]
fn truth_rejects_bad_tau() {
    let o = rmtif(&["truth", "--mc", "2000", "--tau", "1,-2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rmtif(&["truth", "--mc", "2000", "--tau", "abc"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn level_requires_crt() {
    let o = rmtif(&["truth", "--design", "irt", "--level", "both"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn two_replicate_smoke_run_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke.csv");
    let start = std::time::Instant::now();
    let o = rmtif(&["simulate", "--design", "irt", "--n", "2000", "--reps", "2", "--output", path_str(&out)]);
    let secs = start.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(secs < 60.0, "smoke run took {secs:.1} s");
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 1 + 2 * 3);
}
