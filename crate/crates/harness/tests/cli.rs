use std::path::Path;
use std::process::{Command, Output};

use guard_core::defense::DefensePatch;
use guard_core::models::{load_checkpoint, ModelKind};
use serde_json::Value;

const SMALL: &str = r#"{
  "dataset": {"kind": "erdos_renyi", "num_nodes": 60, "p": 0.08, "seed": 4},
  "surrogate": {"epochs": 40, "learning_rate": 0.05},
  "victim": {"epochs": 40, "learning_rate": 0.05, "hidden": 8},
  "split": {"train": 0.3, "valid": 0.2},
  "num_targets": 10,
  "repeats": 1,
  "k": 5,
  "timing_repeats": 3
}"#;

fn guard(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_guard"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(["--threads", "1"])
        .args(args)
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn train_writes_both_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = guard(dir.path(), SMALL, &["train"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let surrogate = load_checkpoint(dir.path().join("out/checkpoint.bin")).unwrap();
    assert_eq!(surrogate.meta.kind, ModelKind::Linear);
    let victim = load_checkpoint(dir.path().join("out/victim.bin")).unwrap();
    assert_eq!(victim.meta.kind, ModelKind::Gcn);
    let r = report(dir.path());
    assert_eq!(r["num_nodes"], 60);
    assert!(r["victim_test_accuracy"].as_f64().unwrap() > 0.0);
}

#[test]
fn attack_and_defend_reuse_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(guard(dir.path(), SMALL, &["train"]).status.success());
    let ckpt = dir.path().join("out/checkpoint.bin");
    let ckpt = ckpt.to_str().unwrap();

    let out = guard(dir.path(), SMALL, &["attack", "--checkpoint", ckpt]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("out/attacks.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    assert!(lines.iter().all(|l| l["repeat"] == 0 && l["injected"].is_array()));
    assert_eq!(report(dir.path())["attacks"], 10);

    let out = guard(dir.path(), SMALL, &["defend", "--checkpoint", ckpt]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let patch = DefensePatch::load(dir.path().join("out/patch.json")).unwrap();
    assert_eq!(patch.len(), 5);
    assert_eq!(report(dir.path())["anchors"], 5);
}

#[test]
fn evaluate_census_sweep_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = guard(dir.path(), SMALL, &["evaluate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["defenses"].as_array().unwrap().len(), 4);
    assert!(r["attacked_accuracy"]["mean"].as_f64().unwrap() <= 1.0);

    let out = guard(dir.path(), SMALL, &["census"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/census.csv")).unwrap();
    assert!(csv.starts_with("rank,node,count,cumulative_mass,degree"));
    let last: f64 = csv.lines().last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((last - 1.0).abs() < 1e-6);

    let out = guard(dir.path(), SMALL, &["sweep", "--param", "k", "--values", "0,5,60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["reports"].as_array().unwrap().len(), 3);

    let out = guard(dir.path(), SMALL, &["time"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["timing"]["num_nodes"], 60);
}

#[test]
fn seed_flag_changes_the_split() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(guard(a.path(), SMALL, &["attack", "--seed", "1"]).status.success());
    assert!(guard(b.path(), SMALL, &["attack", "--seed", "2"]).status.success());
    let read = |d: &Path| std::fs::read_to_string(d.join("out/attacks.jsonl")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(guard(dir.path(), "{ not json", &["train"]).status.code(), Some(2));
    assert_eq!(guard(dir.path(), r#"{"unknown_field": 1}"#, &["train"]).status.code(), Some(2));
    assert_eq!(guard(dir.path(), r#"{"repeats": 0}"#, &["evaluate"]).status.code(), Some(2));
    assert_eq!(guard(dir.path(), SMALL, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(guard(dir.path(), SMALL, &["sweep", "--param", "k", "--values", "1.5"]).status.code(), Some(2));
    let missing = Command::new(env!("CARGO_BIN_EXE_guard"))
        .args(["--config", "/nonexistent/config.json", "train"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("edges.txt"), "0 1\n1 oops\n").unwrap();
    std::fs::write(d.join("features.csv"), "1,0\n0,1\n1,1\n").unwrap();
    std::fs::write(d.join("labels.csv"), "0,0\n1,1\n2,0\n").unwrap();
    let config = format!(
        r#"{{"dataset": {{"kind": "files", "edges": "{0}/edges.txt", "features": "{0}/features.csv", "labels": "{0}/labels.csv"}}}}"#,
        d.display()
    );
    let out = guard(d, &config, &["train"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_failures_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    // the Jaccard filter needs binary features
    let config = SMALL.replace("\"k\": 5,", "\"k\": 5, \"defenses\": [\"jaccard\"],");
    let out = guard(dir.path(), &config, &["evaluate"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_guard"))
        .arg("--out")
        .arg(blocker.join("sub"))
        .arg("time")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
