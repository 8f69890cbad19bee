//! End-to-end tests of the command-line binary: exit codes, artifact files,
//! and byte-level determinism of reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vacuum-euler"))
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_ok(out: &Output) -> i32 {
    out.status.code().unwrap_or_else(|| panic!("no exit code; stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

const FAST_AFFINE: &str = r#"{
  "scenario": "affine",
  "t_final": 0.02,
  "node_count": 201,
  "step": { "eps": 1e-3, "snapshot_stride": 5 }
}"#;

#[test]
fn simulate_writes_artifacts_and_exits_zero() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST_AFFINE);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["energy.csv", "snapshots.jsonl", "summary.json"] {
        assert!(out_dir.join(name).is_file(), "missing artifact {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "simulate");
    assert_eq!(summary["exit_code"], 0);
    // stdout carries the same summary document
    let echoed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout should be the summary JSON");
    assert_eq!(echoed, summary);
    // 20 steps + initial row
    let energy = fs::read_to_string(out_dir.join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 22, "header + 21 rows");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST_AFFINE);
    let mut blobs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = bin()
            .args(["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(run_ok(&out), 0);
        let mut bundle = Vec::new();
        for name in ["energy.csv", "snapshots.jsonl", "summary.json"] {
            bundle.push(fs::read(out_dir.join(name)).unwrap());
        }
        blobs.push(bundle);
    }
    assert_eq!(blobs[0], blobs[1], "artifacts differ between identical reruns");
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "scenario": "affine", "params": { "beta": -1.0 } }"#);
    let out = bin().args(["simulate", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.beta"), "error should name the offending field: {err}");
}

#[test]
fn missing_config_file_exits_two() {
    let dir = tempdir().unwrap();
    let gone = dir.path().join("nope.json");
    let out = bin()
        .args(["simulate", "--config", gone.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn continuation_violation_exits_three_and_records_it_in_summary() {
    let dir = tempdir().unwrap();
    // expanding orbit whose boundary slope immediately drops below the
    // near-initial threshold
    let cfg = write_config(
        dir.path(),
        r#"{
  "scenario": "affine",
  "affine": { "a": 0.5, "b": 0.5, "r": 1.0, "sigma_bar": 1.0 },
  "t_final": 0.05,
  "node_count": 201,
  "step": { "eps": 1e-3, "min_nondegeneracy": 0.999 }
}"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let viol = &summary["violation"];
    assert_eq!(viol["criterion"], "nondegeneracy");
    assert!(viol["value"].as_f64().unwrap() < 0.999);
    assert!(viol["t"].as_f64().unwrap() >= 0.0);
    assert_eq!(summary["pass"], false);
}

#[test]
fn eps_and_node_overrides_apply() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST_AFFINE);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args([
            "simulate",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--eps",
            "2e-3",
            "--nodes",
            "151",
        ])
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0);
    let first_snap = fs::read_to_string(out_dir.join("snapshots.jsonl")).unwrap();
    let snap: serde_json::Value =
        serde_json::from_str(first_snap.lines().next().unwrap()).unwrap();
    assert_eq!(snap["nodes"].as_array().unwrap().len(), 151);
    // 0.02 / 2e-3 = 10 steps -> 11 energy rows after the header
    let energy = fs::read_to_string(out_dir.join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 12);
}

#[test]
fn oracle_subcommand_writes_orbit_table() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "scenario": "affine", "t_final": 0.3 }"#);
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["oracle", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(run_ok(&out), 0);
    let table = fs::read_to_string(out_dir.join("oracle.csv")).unwrap();
    assert_eq!(table.lines().count(), 102, "header + 101 samples");
    assert!(table.lines().next().unwrap().starts_with("t,"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().args(["frobnicate", "--config", "x.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
