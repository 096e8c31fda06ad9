use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn demo(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taylor-attr")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn linear_model(d: usize) -> String {
    let monomials: Vec<Value> = (0..d).map(|i| json!({"coef": 1.0 + i as f64, "exps": {i.to_string(): 1}})).collect();
    json!({"type":"polynomial","input_dim":d,"monomials":monomials}).to_string()
}

fn csv_rows(d: usize, n: usize) -> String {
    let mut s = (0..d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in 0..n {
        s.push_str(&(0..d).map(|i| format!("{}", (r * 7 + i * 3) % 5)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

#[test]
fn explain_demo_force_plots_close() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("svg");
    let out = run(&[
        "explain",
        "--model",
        &demo("poly2.json"),
        "--data",
        &demo("poly2_data.csv"),
        "--background",
        &demo("poly2_background.csv"),
        "--seed",
        "42",
        "--svg-dir",
        &svg.display().to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["masking_estimator"], "marginal-splice");
    assert_eq!(report["seed"], 42);
    for inst in report["instances"].as_array().unwrap() {
        for plot in inst["force_plots"].as_array().unwrap() {
            if matches!(plot["method"].as_str().unwrap(), "shap" | "taylorpoda") {
                let base = plot["base_value"].as_f64().unwrap();
                let fin = plot["final_value"].as_f64().unwrap();
                let sum: f64 = plot["contributions"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
                assert!((base + sum - fin).abs() <= 1e-6);
            }
        }
    }
    assert_eq!(std::fs::read_dir(&svg).unwrap().count(), 3 * 5);
}

#[test]
fn capped_run_is_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", &linear_model(10));
    let data = write(dir.path(), "d.csv", &csv_rows(10, 3));
    let out = run(&[
        "explain",
        "--model",
        &model.display().to_string(),
        "--data",
        &data.display().to_string(),
        "--sigma",
        "2",
        "--method",
        "taylorpoda",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let attr = &report["instances"][0]["attributions"][0];
    assert_eq!(attr["method"], "taylorpodac");
    assert_eq!(attr["metadata"]["sigma"], 2);
}

#[test]
fn exhaustive_method_with_cap_is_config_error() {
    let out = run(&[
        "explain",
        "--model",
        &demo("mlp8.json"),
        "--data",
        &demo("mlp8_data.csv"),
        "--label-col",
        "y",
        "--sigma",
        "2",
        "--method",
        "shap",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn too_many_features_hits_the_guard() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", &linear_model(21));
    let data = write(dir.path(), "d.csv", &csv_rows(21, 2));
    let out = run(&[
        "explain",
        "--model",
        &model.display().to_string(),
        "--data",
        &data.display().to_string(),
        "--method",
        "occ1",
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failing_oracle_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "m.json",
        &json!({"type":"external","command":"exit 1","protocol_version":1,"timeout_ms":2000}).to_string(),
    );
    let out = run(&[
        "explain",
        "--model",
        &model.display().to_string(),
        "--data",
        &demo("poly2_data.csv"),
        "--method",
        "occ1",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_errors_exit_two() {
    let base = ["evaluate", "--model", &demo("poly2.json"), "--data", &demo("poly2_data.csv")];
    let cases: [&[&str]; 5] = [
        &["--metrics", "inclusion-auc"],
        &["--background-size", "99"],
        &["--label-col", "missing"],
        &["--sigma", "3"],
        &["--include-uniform", "maybe"],
    ];
    for extra in cases {
        let args: Vec<&str> = base.iter().copied().chain(extra.iter().copied()).collect();
        assert_eq!(code(&run(&args)), 2, "{extra:?}");
    }
    assert_eq!(code(&run(&["explain", "--model", "/nonexistent.json", "--data", &demo("poly2_data.csv")])), 2);
}

#[test]
fn diagnose_requires_polynomial_and_single_row() {
    let out = run(&["diagnose", "--model", &demo("mlp8.json")]);
    assert_eq!(code(&out), 2);
    let out = run(&["diagnose", "--model", &demo("poly2.json"), "--background", &demo("poly2_data.csv")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn diagnose_flags_interaction_free_models() {
    let out = run(&["diagnose", "--model", &demo("additive3.json")]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["note"].is_string());
    assert_eq!(report["matrix"][4]["precision"], "n/a");
}

#[test]
fn evaluate_writes_csv_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let json_out = dir.path().join("r.json");
    let out = run(&[
        "evaluate",
        "--model",
        &demo("mlp8.json"),
        "--data",
        &demo("mlp8_data.csv"),
        "--label-col",
        "y",
        "--method",
        "shap",
        "--method",
        "taylorpoda",
        "--metrics",
        "aup,discrepancy",
        "--csv",
        &csv.display().to_string(),
        "--output",
        &json_out.display().to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("TaylorPODA"));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 100);
    let report: Value = serde_json::from_slice(&std::fs::read(&json_out).unwrap()).unwrap();
    let tp = report["report"]["aggregates"]["taylorpoda"]["aup"]["mean"].as_f64().unwrap();
    let shap = report["report"]["aggregates"]["shap"]["aup"]["mean"].as_f64().unwrap();
    assert!(tp <= shap);
}
