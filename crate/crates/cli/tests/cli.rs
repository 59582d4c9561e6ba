//! End-to-end checks of the command-line interface and its exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ranset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ranset"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_toy_csv(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("toy.csv");
    let mut rows = String::from("f1,f2,label\n");
    for i in 0..40 {
        let x = i as f64 / 39.0;
        let y = ((i * 7) % 40) as f64 / 39.0;
        let label = usize::from(x > 0.5);
        rows.push_str(&format!("{x:.4},{y:.4},{label}\n"));
    }
    fs::write(&path, rows).unwrap();
    path
}

fn toy_config(dir: &Path, csv: &Path, lr: f64, out: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "dataset": {
            "kind": "csv",
            "path": csv,
            "labelColumn": "label",
            "labels": ["0", "1"],
            "split": { "fractions": [0.8, 0.2], "seed": 3 }
        },
        "network": { "hidden": [8] },
        "loss": { "kind": "crossEntropyMass" },
        "train": {
            "epochs": 5, "batchSize": 8, "learningRate": lr,
            "optimizer": { "kind": "adam" }, "seed": 11, "shuffle": true
        },
        "outputDir": out
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn measures_of_vacuous_four_class_mass() {
    let dir = tempfile::tempdir().unwrap();
    let mass = dir.path().join("vacuous.json");
    fs::write(
        &mass,
        r#"{"labels":["0","1","2","3"],"masses":{"0|1|2|3":1.0}}"#,
    )
    .unwrap();
    let out = ranset(&["measures", mass.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["nguyen"].as_f64().unwrap(), 0.0);
    assert!((report["klirRamer"]["total"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((report["klirRamer"]["nonspecificity"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn measures_of_uniform_bayesian_two_class_mass() {
    let dir = tempfile::tempdir().unwrap();
    let mass = dir.path().join("uniform.json");
    fs::write(&mass, r#"{"labels":["a","b"],"masses":{"a":0.5,"b":0.5}}"#).unwrap();
    let out = ranset(&["measures", mass.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["nguyen", "hohle", "yager", "shannonOfPignistic"] {
        assert!((report[key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{key}");
    }
    assert!((report["klirRamer"]["total"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(report["klirRamer"]["nonspecificity"].as_f64().unwrap(), 0.0);
}

#[test]
fn malformed_mass_json_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mass = dir.path().join("bad.json");
    fs::write(&mass, "not json").unwrap();
    let out = ranset(&["measures", mass.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_config_exits_one() {
    let out = ranset(&["train", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_dataset_file_exits_one_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let config = toy_config(
        dir.path(),
        Path::new("/nonexistent/data.csv"),
        1e-3,
        &out_dir,
    );
    let out = ranset(&["train", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.join("report.json").exists());
    assert!(!out_dir.join("model.ckpt").exists());
}

#[test]
fn zero_learning_rate_gives_a_flat_history() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let out_dir = dir.path().join("run");
    let config = toy_config(dir.path(), &csv, 0.0, &out_dir);
    let out = ranset(&["train", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let history = report["history"].as_array().unwrap();
    assert_eq!(history.len(), 5);
    let first = history[0]["loss"].as_f64().unwrap();
    for epoch in history {
        // identical per-sample losses, summed in shuffled order
        assert!((epoch["loss"].as_f64().unwrap() - first).abs() < 1e-12);
    }
    let accuracy = report["testAccuracy"].as_f64().unwrap();
    assert!((0.2..=0.8).contains(&accuracy), "accuracy {accuracy} far from chance");
}

#[test]
fn eval_reproduces_training_accuracy_and_rejects_frame_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let out_dir = dir.path().join("run");
    let config = toy_config(dir.path(), &csv, 1e-2, &out_dir);
    let out = ranset(&["train", config.to_str().unwrap()]);
    assert!(out.status.success());
    let train_report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();

    let eval_config = dir.path().join("eval.json");
    fs::write(
        &eval_config,
        serde_json::to_string(&serde_json::json!({
            "dataset": {
                "kind": "csv",
                "path": csv,
                "labelColumn": "label",
                "labels": ["0", "1"],
                "split": { "fractions": [0.8, 0.2], "seed": 3 }
            }
        }))
        .unwrap(),
    )
    .unwrap();
    let eval_out_dir = dir.path().join("eval");
    let out = ranset(&[
        "eval",
        out_dir.join("model.ckpt").to_str().unwrap(),
        eval_config.to_str().unwrap(),
        "--out",
        eval_out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval_report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(eval_out_dir.join("eval-report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(
        eval_report["testAccuracy"].as_f64().unwrap(),
        train_report["testAccuracy"].as_f64().unwrap()
    );
    assert!(eval_report["meanCredalExtent"].as_f64().unwrap() >= 0.0);

    // same checkpoint against a three-class frame: frame mismatch
    let mismatch_config = dir.path().join("mismatch.json");
    let mut csv3 = String::from("f1,f2,label\n");
    for i in 0..30 {
        csv3.push_str(&format!("{}.0,1.0,{}\n", i, i % 3));
    }
    let csv3_path = dir.path().join("three.csv");
    fs::write(&csv3_path, csv3).unwrap();
    fs::write(
        &mismatch_config,
        serde_json::to_string(&serde_json::json!({
            "dataset": {
                "kind": "csv",
                "path": csv3_path,
                "labelColumn": "label",
                "labels": ["0", "1", "2"],
                "split": { "fractions": [1.0], "seed": 1 }
            }
        }))
        .unwrap(),
    )
    .unwrap();
    let out = ranset(&[
        "eval",
        out_dir.join("model.ckpt").to_str().unwrap(),
        mismatch_config.to_str().unwrap(),
        "--out",
        dir.path().join("eval2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame mismatch"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_toy_csv(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = toy_config(dir.path(), &csv, 1e-2, &out_a);
    assert!(ranset(&["train", config.to_str().unwrap()]).status.success());
    let out = ranset(&[
        "train",
        config.to_str().unwrap(),
        "--seed",
        "999",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("report.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_b.join("report.json")).unwrap()).unwrap();
    assert_eq!(a["config"]["train"]["seed"].as_u64(), Some(11));
    assert_eq!(b["config"]["train"]["seed"].as_u64(), Some(999));
    assert_ne!(
        fs::read(out_a.join("model.ckpt")).unwrap(),
        fs::read(out_b.join("model.ckpt")).unwrap()
    );
}
