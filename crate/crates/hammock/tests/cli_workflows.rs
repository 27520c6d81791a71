//! End-to-end checks of the `hammock` binary: exit codes, the
//! machine-readable output lines, and the convert/verify workflow.

use std::path::Path;
use std::process::{Command, Output};

const EXAMPLE_ENSEMBLE: &str = r#"{
    "num_features": 2,
    "task": "regression",
    "base_score": 0.0,
    "trees": [
        {
            "nodes": [
                {"id": 0, "feature": 0, "threshold": 0.5, "left": 1, "right": 2},
                {"id": 1, "feature": 1, "threshold": 0.3, "left": 3, "right": 4},
                {"id": 2, "leaf": 0.4},
                {"id": 3, "leaf": 1.3},
                {"id": 4, "leaf": -0.5}
            ]
        }
    ]
}"#;

fn hammock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hammock"))
        .args(args)
        .output()
        .expect("failed to launch the hammock binary")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn last_line(text: &str) -> String {
    text.lines().last().unwrap_or_default().to_string()
}

/// Small linearly separable two-class dataset.
fn write_toy_csv(path: &Path) {
    let mut rows = String::new();
    for i in 0..40 {
        let x = i as f64 * 0.1;
        let y = if i % 2 == 0 { x + 2.0 } else { -x - 2.0 };
        rows.push_str(&format!("{x},{y},{}\n", i % 2));
    }
    std::fs::write(path, rows).unwrap();
}

#[test]
fn bins_writes_json_and_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    // Feature 1 is constant; the label column is last.
    let mut rows = String::new();
    for i in 0..32 {
        rows.push_str(&format!("{},7.0,{}\n", i, i % 2));
    }
    std::fs::write(&data, rows).unwrap();

    let out = dir.path().join("bins.json");
    let result = hammock(&[
        "bins",
        "--data",
        data.to_str().unwrap(),
        "--bins",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    let err = stderr(&result);
    assert!(err.contains("feature 0: 3 boundaries"), "{err}");
    assert!(err.contains("feature 1: 0 boundaries"), "{err}");

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["requested_bins"], 4);
    assert_eq!(
        json["features"][1]["boundaries"].as_array().unwrap().len(),
        0
    );
}

#[test]
fn bins_missing_file_exits_2_and_names_path() {
    let result = hammock(&["bins", "--data", "/no/such/file.csv"]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("/no/such/file.csv"));
}

#[test]
fn train_prints_deterministic_accuracy_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data);
    // lr-nn ignores --hidden; passing it is not an error.
    let args = [
        "train",
        "--data",
        data.to_str().unwrap(),
        "--arch",
        "lr-nn",
        "--hidden",
        "512",
        "--epochs",
        "200",
        "--batch",
        "8",
        "--seed",
        "7",
    ];
    let first = hammock(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let line = last_line(&stdout(&first));
    assert!(
        line.starts_with("accuracy="),
        "unexpected final line {line:?}"
    );
    let accuracy: f64 = line.trim_start_matches("accuracy=").parse().unwrap();
    assert!(accuracy > 0.9);

    let second = hammock(&args);
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn hammock_threads_env_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data);
    let result = Command::new(env!("CARGO_BIN_EXE_hammock"))
        .args([
            "train",
            "--data",
            data.to_str().unwrap(),
            "--arch",
            "lr-nn",
            "--epochs",
            "50",
            "--batch",
            "8",
            "--seed",
            "7",
        ])
        .env("HAMMOCK_THREADS", "2")
        .output()
        .expect("failed to launch the hammock binary");
    assert!(result.status.success(), "{}", stderr(&result));
    assert!(last_line(&stdout(&result)).starts_with("accuracy="));
}

#[test]
fn train_rejects_bins_for_raw_archs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data);
    let result = hammock(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--arch",
        "nn-1l",
        "--bins",
        "50",
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("--bins"));
}

#[test]
fn train_numeric_overflow_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data);
    let result = hammock(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--arch",
        "lr-nn",
        "--epochs",
        "2",
        "--l2",
        "1e308",
    ]);
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn saved_model_evaluates_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    write_toy_csv(&train);
    let mut rows = String::new();
    for i in 0..20 {
        let x = 0.05 + i as f64 * 0.1;
        let y = if i % 2 == 0 { x + 2.0 } else { -x - 2.0 };
        rows.push_str(&format!("{x},{y},{}\n", i % 2));
    }
    std::fs::write(&test, rows).unwrap();

    let model = dir.path().join("model.json");
    let trained = hammock(&[
        "train",
        "--data",
        train.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--arch",
        "hammock",
        "--hidden",
        "16",
        "--bins",
        "8",
        "--dropout",
        "0.2",
        "--epochs",
        "30",
        "--seed",
        "5",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(trained.status.success(), "{}", stderr(&trained));
    let train_lines = stdout(&trained);

    let evaled = hammock(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--data",
        test.to_str().unwrap(),
    ]);
    assert!(evaled.status.success(), "{}", stderr(&evaled));
    // Same loss= and accuracy= lines, bit for bit.
    assert_eq!(train_lines, stdout(&evaled));
}

#[test]
fn eval_rejects_wrong_width_csv() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    write_toy_csv(&train);
    let model = dir.path().join("model.json");
    let trained = hammock(&[
        "train",
        "--data",
        train.to_str().unwrap(),
        "--arch",
        "lr-nn",
        "--epochs",
        "2",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(trained.status.success());

    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, "1.0,0\n2.0,1\n").unwrap();
    let result = hammock(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--data",
        narrow.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("features"));
}

#[test]
fn convert_then_verify_reports_zero_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let ensemble = dir.path().join("ensemble.json");
    std::fs::write(&ensemble, EXAMPLE_ENSEMBLE).unwrap();

    for epsilon in ["0.1", "0.5"] {
        let network = dir.path().join(format!("net_{epsilon}.json"));
        let converted = hammock(&[
            "convert",
            "--ensemble",
            ensemble.to_str().unwrap(),
            "--epsilon",
            epsilon,
            "--out",
            network.to_str().unwrap(),
        ]);
        assert!(converted.status.success(), "{}", stderr(&converted));

        let verified = hammock(&[
            "verify",
            "--ensemble",
            ensemble.to_str().unwrap(),
            "--network",
            network.to_str().unwrap(),
            "--samples",
            "1000",
            "--seed",
            "9",
            "--range",
            "-0.5:1.5",
        ]);
        assert!(verified.status.success(), "{}", stderr(&verified));
        let report: serde_json::Value =
            serde_json::from_str(&last_line(&stdout(&verified))).unwrap();
        assert_eq!(report["num_mismatches"], 0, "epsilon {epsilon}");
        assert_eq!(report["max_abs_diff"], 0.0);
        assert_eq!(report["inputs_checked"], 1000);
        assert_eq!(report["firing_violations"], 0);
    }
}

#[test]
fn verify_rejects_mismatched_feature_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ensemble = dir.path().join("ensemble.json");
    std::fs::write(&ensemble, EXAMPLE_ENSEMBLE).unwrap();
    let network = dir.path().join("net.json");
    let converted = hammock(&[
        "convert",
        "--ensemble",
        ensemble.to_str().unwrap(),
        "--out",
        network.to_str().unwrap(),
    ]);
    assert!(converted.status.success());

    // Same trees, declared over three features instead of two.
    let wider = EXAMPLE_ENSEMBLE.replace("\"num_features\": 2", "\"num_features\": 3");
    let wider_path = dir.path().join("wider.json");
    std::fs::write(&wider_path, wider).unwrap();
    let result = hammock(&[
        "verify",
        "--ensemble",
        wider_path.to_str().unwrap(),
        "--network",
        network.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("feature count mismatch"));
}

#[test]
fn malformed_ensemble_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let ensemble = dir.path().join("bad.json");
    std::fs::write(&ensemble, "{ not json").unwrap();
    let out = dir.path().join("net.json");
    let result = hammock(&[
        "convert",
        "--ensemble",
        ensemble.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}
