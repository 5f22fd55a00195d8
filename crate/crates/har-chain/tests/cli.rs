//! End-to-end tests of the `har-chain` binary: exit codes, artifacts, and
//! manifest replay.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use har_chain::cli::{DataSource, RunConfig};
use har_chain::ingest::SyntheticSpec;
use har_chain::validate::Protocol;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_har-chain"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A config small enough that training commands finish in well under a
/// second.
fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data = DataSource::Synthetic(SyntheticSpec {
        subjects: 2,
        classes: 2,
        rate: 10.0,
        bout_seconds: 1.0,
        bouts_per_class: 3,
        channel_count: 2,
    });
    cfg.preprocess.window_seconds = 0.5;
    cfg.model.conv_layers = 1;
    cfg.model.filters = 2;
    cfg.model.kernel_len = 3;
    cfg.model.hidden = 4;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg.search.budget = 2;
    cfg.search.space.filters = vec![2];
    cfg.search.space.hidden = vec![4];
    cfg.search.space.maxup_copies = vec![0];
    cfg.search.space.batch_size = vec![8];
    cfg
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn summarize_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let output = run(&["summarize", "--synthetic", "--out", out.to_str().unwrap()]);
    assert_code(&output, 0);
    for name in [
        "summary.json",
        "class_distribution.csv",
        "run_manifest.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["recordings"], 3);
}

#[test]
fn train_writes_the_full_artifact_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = dir.path().join("t");
    let output = run(&[
        "train",
        "--config",
        &cfg_path,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    for name in [
        "weights.csv",
        "model_spec.json",
        "history.csv",
        "metrics.json",
        "confusion.csv",
        "run_manifest.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["accuracy"].as_f64().unwrap() >= 0.0);
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "header plus two epochs");
}

#[test]
fn crossval_writes_per_fold_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = dir.path().join("cv");
    let output = run(&[
        "crossval",
        "--config",
        &cfg_path,
        "--protocol",
        "kfold",
        "--k",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    assert!(out.join("crossval_report.json").exists());
    for fold in ["0", "1"] {
        assert!(out.join(format!("fold_{fold}_history.csv")).exists());
        assert!(out.join(format!("fold_{fold}_metrics.json")).exists());
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("crossval_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    assert_eq!(report["protocol"]["protocol"], "kfold");
}

#[test]
fn loso_crossval_names_folds_after_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = dir.path().join("cv");
    let output = run(&[
        "crossval",
        "--config",
        &cfg_path,
        "--protocol",
        "loso",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    assert!(out.join("fold_s01_history.csv").exists());
    assert!(out.join("fold_s02_metrics.json").exists());
}

#[test]
fn tune_writes_a_rerunnable_best_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.train.epochs = 1;
    let cfg_path = write_config(dir.path(), &cfg);
    let out = dir.path().join("tune");
    let output = run(&[
        "tune",
        "--config",
        &cfg_path,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 3, "header plus two trials");
    assert!(trials.lines().next().unwrap().starts_with("trial,lr,"));
    assert_eq!(trials.matches(",true").count(), 1, "exactly one winner");

    // The winning config must itself work as a --config input.
    let best = out.join("best_config.json");
    let out2 = dir.path().join("retrain");
    let output = run(&[
        "train",
        "--config",
        best.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    assert!(out2.join("weights.csv").exists());
}

#[test]
fn rerunning_from_the_manifest_reproduces_every_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_code(
        &run(&["train", "--config", &cfg_path, "--out", a.to_str().unwrap()]),
        0,
    );
    let manifest = a.join("run_manifest.json");
    assert_code(
        &run(&[
            "train",
            "--config",
            manifest.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
        ]),
        0,
    );
    for name in [
        "weights.csv",
        "model_spec.json",
        "history.csv",
        "metrics.json",
        "confusion.csv",
        "run_manifest.json",
    ] {
        let first = fs::read(a.join(name)).unwrap();
        let second = fs::read(b.join(name)).unwrap();
        assert_eq!(first, second, "{name} differs between runs");
    }
}

#[test]
fn different_seeds_change_the_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        assert_code(
            &run(&[
                "train",
                "--config",
                &cfg_path,
                "--seed",
                seed,
                "--out",
                out.to_str().unwrap(),
            ]),
            0,
        );
    }
    assert_ne!(
        fs::read(a.join("weights.csv")).unwrap(),
        fs::read(b.join("weights.csv")).unwrap()
    );
}

#[test]
fn bad_settings_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.preprocess.overlap = 1.0;
    let cfg_path = write_config(dir.path(), &cfg);
    let out = dir.path().join("x");
    let output = run(&[
        "train",
        "--config",
        &cfg_path,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("overlap"));
    assert!(!out.exists(), "no artifacts on config errors");

    let garbled = dir.path().join("garbled.json");
    fs::write(&garbled, "{ not json").unwrap();
    assert_code(
        &run(&["summarize", "--config", garbled.to_str().unwrap()]),
        2,
    );

    let output = run(&["crossval", "--config", &cfg_path, "--k", "3"]);
    assert_code(&output, 2);
}

#[test]
fn runtime_failures_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.data = DataSource::Dir {
        path: dir.path().join("missing"),
        labels: None,
    };
    let cfg_path = write_config(dir.path(), &cfg);
    let out = dir.path().join("x");
    let output = run(&[
        "summarize",
        "--config",
        &cfg_path,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("ingest"));
}

#[test]
fn protocol_flag_off_the_menu_is_a_usage_error() {
    let output = run(&["crossval", "--protocol", "bogus"]);
    assert_code(&output, 2);
}

#[test]
fn manifest_records_the_resolved_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = dir.path().join("cv");
    assert_code(
        &run(&[
            "crossval",
            "--config",
            &cfg_path,
            "--protocol",
            "kfold",
            "--k",
            "3",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]),
        0,
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "crossval");
    assert_eq!(manifest["config"]["seed"], 11);
    assert_eq!(
        manifest["config"]["protocol"],
        serde_json::json!({"protocol": "kfold", "k": 3})
    );
    let rate = manifest["config"]["preprocess"]["target_rate"]
        .as_f64()
        .unwrap();
    assert!(
        (rate - 10.0).abs() < 1e-9,
        "unset rate resolves to the pooled median, got {rate}"
    );
    let back: Protocol = serde_json::from_value(manifest["config"]["protocol"].clone()).unwrap();
    assert_eq!(back, Protocol::Kfold { k: 3 });
}
