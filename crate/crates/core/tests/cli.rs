use std::path::Path;
use std::process::{Command, Output};

use syncluster::TrainConfig;

fn syncluster(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syncluster"))
        .args(args)
        .env("SYNC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = TrainConfig::preset("acm").unwrap();
    cfg.k = 3;
    cfg.transform_dim = 16;
    cfg.pretrain_epochs = 5;
    cfg.epochs = 3;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn generate(dir: &Path, n: &str) -> std::path::PathBuf {
    let data = dir.join("data");
    let out = syncluster(&["generate", "--out", p(&data), "--n", n]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn print_defaults_emits_preset() {
    let out = syncluster(&["pretrain", "--print-defaults", "acm"]);
    assert!(out.status.success());
    let cfg = TrainConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, TrainConfig::preset("acm").unwrap());
    assert_eq!(cfg.transform_dim, 512);
}

#[test]
fn unknown_preset_is_input_error() {
    let out = syncluster(&["pretrain", "--print-defaults", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_features_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "30");
    std::fs::remove_file(data.join("features.tsv")).unwrap();
    let cfg = small_config(dir.path());
    let out = syncluster(&[
        "pretrain",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("m.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("features.tsv"), "{err}");
}

#[test]
fn malformed_edge_line_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "30");
    let edges = data.join("edges.tsv");
    let mut text = std::fs::read_to_string(&edges).unwrap();
    text.push_str("1\tx\n");
    let line = text.lines().count();
    std::fs::write(&edges, text).unwrap();
    let out = syncluster(&["evaluate", "--data", p(&data), "--labels", p(&data.join("labels.tsv"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("edges.tsv:{line}:")), "{err}");
}

#[test]
fn pipeline_writes_artifacts_and_dumps_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "40");
    let cfg = small_config(dir.path());
    let ckpt = dir.path().join("m.ckpt");
    let out = syncluster(&["pretrain", "--data", p(&data), "--config", p(&cfg), "--out", p(&ckpt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("m.ckpt.manifest.json").exists());

    let run = dir.path().join("run");
    let out = syncluster(&[
        "train",
        "--data",
        p(&data),
        "--ckpt",
        p(&ckpt),
        "--config",
        p(&cfg),
        "--out",
        p(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["labels.txt", "trace.jsonl", "metrics.json", "manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let labels = std::fs::read_to_string(run.join("labels.txt")).unwrap();
    assert_eq!(labels.lines().count(), 40);
    assert_eq!(std::fs::read_to_string(run.join("trace.jsonl")).unwrap().lines().count(), 3);

    let out = syncluster(&["evaluate", "--data", p(&data), "--labels", p(&run.join("labels.txt"))]);
    assert!(out.status.success());
    let scores: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(scores["acc"].as_f64().unwrap() >= 1.0 / 3.0);

    for (what, cols) in [("similarity", 40), ("refined", 40), ("embeddings", 16)] {
        let out = syncluster(&["dump", "--data", p(&data), "--ckpt", p(&ckpt), "--what", what]);
        assert!(out.status.success(), "{what}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), 40, "{what}");
        assert!(text.lines().all(|l| l.split(',').count() == cols), "{what}");
    }
}

#[test]
fn dump_refined_requires_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "20");
    let out = syncluster(&["dump", "--data", p(&data), "--what", "refined"]);
    assert_eq!(out.status.code(), Some(2));
}

fn fake_run(dir: &Path, name: &str, acc: f64, fingerprint: &str) -> std::path::PathBuf {
    let run = dir.join(name);
    std::fs::create_dir_all(&run).unwrap();
    let manifest = serde_json::json!({
        "command": "train",
        "version": "0.1.0",
        "rng": "chacha8-v1",
        "seed": 1,
        "variant": "sync",
        "config": serde_json::from_str::<serde_json::Value>(&TrainConfig::preset("acm").unwrap().to_json()).unwrap(),
        "dataset": "d",
        "dataset_fingerprint": fingerprint,
        "artifacts": [["metrics", "metrics.json"]],
    });
    std::fs::write(run.join("manifest.json"), manifest.to_string()).unwrap();
    let metrics = serde_json::json!({"acc": acc, "nmi": acc, "ari": acc, "f1": acc});
    std::fs::write(run.join("metrics.json"), metrics.to_string()).unwrap();
    run
}

#[test]
fn report_aggregates_mean_and_sample_std() {
    let dir = tempfile::tempdir().unwrap();
    let a = fake_run(dir.path(), "a", 0.6, "f");
    let b = fake_run(dir.path(), "b", 0.8, "f");
    let out = syncluster(&["report", "--runs", p(&a), p(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let acc = csv.lines().find(|l| l.starts_with("acc,")).unwrap();
    let cells: Vec<f64> = acc.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert!((cells[0] - 0.7).abs() < 1e-12);
    assert!((cells[1] - 0.1414).abs() < 1e-4);
    assert_eq!(cells[2], 2.0);
}

#[test]
fn report_rejects_mixed_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let a = fake_run(dir.path(), "a", 0.6, "f1");
    let b = fake_run(dir.path(), "b", 0.8, "f2");
    let out = syncluster(&["report", "--runs", p(&a), p(&b)]);
    assert_eq!(out.status.code(), Some(2));
}
