use std::path::Path;
use std::process::{Command, Output};

use kernelflow::linalg::Vector;
use kernelflow::select::r2;
use serde_json::Value;

fn kernelflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernelflow"))
        .args(args)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn fit(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["fit", "--synth", "sin", "--n", "60", "--seed", "4", "--out", out];
    args.extend_from_slice(extra);
    kernelflow(&args)
}

#[test]
fn fit_writes_model_predictions_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = fit(
        dir.path(),
        &["--method", "krr", "--bandwidth", "3", "--reg", "lambda=0.01"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = read_json(&dir.path().join("metrics.json"));
    assert!(metrics["r2"].as_f64().unwrap().is_finite());
    assert_eq!(metrics["n_train"], 48);
    assert_eq!(metrics["n_test"], 12);
    let model = read_json(&dir.path().join("model.json"));
    assert_eq!(model["config"]["method"], "krr");
    assert_eq!(model["config"]["training_inputs"].as_array().unwrap().len(), 48);
}

#[test]
fn predictions_round_trip_to_reported_r2() {
    let dir = tempfile::tempdir().unwrap();
    let o = fit(dir.path(), &["--method", "kgf", "--bandwidth", "2", "--reg", "t=50"]);
    assert!(o.status.success());
    let mut rd = csv::Reader::from_path(dir.path().join("predictions.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    let yi = header.iter().position(|h| h == "y").unwrap();
    let pi = header.iter().position(|h| h == "prediction").unwrap();
    let (mut y, mut p) = (Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec.unwrap();
        y.push(rec[yi].parse::<f64>().unwrap());
        p.push(rec[pi].parse::<f64>().unwrap());
    }
    let score = r2(&Vector::from_vec(y), &Vector::from_vec(p)).unwrap();
    let reported = read_json(&dir.path().join("metrics.json"))["r2"].as_f64().unwrap();
    assert!((score - reported).abs() <= 1e-10, "{score} vs {reported}");
}

#[test]
fn zero_time_flow_predicts_the_training_mean() {
    let dir = tempfile::tempdir().unwrap();
    let o = fit(dir.path(), &["--method", "kgf", "--bandwidth", "2", "--reg", "t=0"]);
    assert!(o.status.success());
    let mut rd = csv::Reader::from_path(dir.path().join("predictions.csv")).unwrap();
    let preds: Vec<f64> = rd.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    let mean = read_json(&dir.path().join("model.json"))["config"]["standardization"]["y_mean"]
        .as_f64()
        .unwrap();
    assert!(preds.iter().all(|p| (p - mean).abs() <= 1e-12 * (1.0 + mean.abs())));
}

#[test]
fn fit_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--method", "ksgd", "--bandwidth", "2", "--early-stop"];
    assert!(fit(a.path(), &args).status.success());
    assert!(fit(b.path(), &args).status.success());
    for f in ["model.json", "predictions.csv", "metrics.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn coordinate_descent_with_early_stopping_is_sparse() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = kernelflow(&[
        "fit",
        "--synth",
        "peak",
        "--n",
        "60",
        "--seed",
        "1",
        "--method",
        "kcd",
        "--bandwidth",
        "1",
        "--early-stop",
        "--out",
        out,
    ]);
    assert!(o.status.success());
    let s = read_json(&dir.path().join("metrics.json"))["sparsity"]
        .as_f64()
        .unwrap();
    assert!(s < 1.0, "sparsity {s}");
}

#[test]
fn conflicting_flags_exit_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fit(dir.path(), &["--method", "kgd", "--reg", "t=1", "--early-stop"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fit(dir.path(), &["--method", "nope", "--bandwidth", "1", "--reg", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = kernelflow(&["verify", "--prop", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_input_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("a,b,resp\n");
    for i in 0..30 {
        let a = i as f64 / 10.0;
        text += &format!("{a},{},{}\n", (i % 7) as f64, a.sin());
    }
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("o");
    let o = kernelflow(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "resp",
        "--method",
        "krr",
        "--bandwidth",
        "1",
        "--reg",
        "0.001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rd = csv::Reader::from_path(out.join("predictions.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    assert_eq!(rd.iter().collect::<Vec<_>>(), ["a", "b", "y", "prediction"]);
    let o = kernelflow(&[
        "fit",
        "--data",
        "/nonexistent.csv",
        "--method",
        "krr",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_emits_json_reports() {
    let o = kernelflow(&["verify", "--prop", "1", "--instances", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &doc["reports"][0];
    assert_eq!(r["proposition"], "1");
    assert_eq!(r["instances"], 3);
    assert!(r["max_ratio"].as_f64().unwrap() <= 1.0 + 1e-9);
    assert_eq!(r["pass"], true);
}

#[test]
fn path_writes_checkpoint_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("path.csv");
    let o = kernelflow(&[
        "path",
        "--synth",
        "sin",
        "--n",
        "30",
        "--bandwidth",
        "1",
        "--method",
        "ksgd",
        "--step-size",
        "0.01",
        "--max-time",
        "1",
        "--stride",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["step", "time", "l1_residual", "l2_residual", "linf_residual", "nnz"]
    );
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 11);
    let nnz: usize = rows[1][5].parse().unwrap();
    assert_eq!(nnz, 30);
}
