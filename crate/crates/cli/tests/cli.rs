use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mised(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mised"))
        .args(args)
        .env("MISED_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_derivative_writes_estimates_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("est.csv");
    let model = dir.path().join("model.json");
    let o = mised(&[
        "fit-derivative", "--n", "80", "--d", "1", "--k", "1", "--seed", "3",
        "--out", path_str(&out), "--model-out", path_str(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,est_1,true_1"));
    assert_eq!(lines.count(), 80);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(doc["k"], 1);
    assert!(doc["coeffs"]["1"].is_array());
}

#[test]
fn fixed_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = mised(&["fit-derivative", "--n", "60", "--d", "2", "--k", "2", "--seed", "9", "--out", path_str(p)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn missing_input_is_a_usage_error_naming_the_path() {
    let o = mised(&["fit-derivative", "--input", "/no/such/samples.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/samples.csv"));
}

#[test]
fn unknown_method_lists_valid_ones() {
    let o = mised(&["change-detect", "--method", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mised, nn, nng, gp"));
}

#[test]
fn singular_system_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("dup.csv");
    fs::write(&input, "x\n0.3\n0.3\n1.0\n-0.5\n").unwrap();
    let o = mised(&[
        "fit-derivative", "--input", path_str(&input), "--cv", "fixed", "--sigma", "1", "--lambda", "0",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("lambda > 0"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("est.csv");
    fs::write(&cfg, r#"{"n": 30, "cv": "fixed", "sigma": 0.8, "lambda": 0.1}"#).unwrap();
    let o = mised(&["fit-derivative", "--config", path_str(&cfg), "--n", "45", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 46);

    fs::write(&cfg, r#"{"n": 30, "unknown_key": 1}"#).unwrap();
    let o = mised(&["fit-derivative", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dim_sweep_single_dimension_single_seed() {
    let o = mised(&["dim-sweep", "--dims", "1", "--n", "60", "--seeds", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d,method,nmse_mean,nmse_std");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,mised,"));
    assert!(lines[2].starts_with("1,kde,"));
}

#[test]
fn kl_experiment_single_method() {
    let o = mised(&[
        "kl-experiment", "--rhos", "2", "--ns", "100", "--d", "2", "--methods", "nn", "--seeds", "0,1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,n,method,mean,std,true_kl");
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..3], &["2", "100", "nn"]);
    let true_kl: f64 = fields[5].parse().unwrap();
    assert!((true_kl - 2.0).abs() < 1e-6);
}

#[test]
fn change_detect_writes_scores_and_auc() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    let auc = dir.path().join("auc.json");
    let o = mised(&[
        "change-detect", "--method", "nn", "--duration", "60", "--r", "10", "--m", "3", "--seeds", "0,1",
        "--scores-out", path_str(&scores), "--auc-out", path_str(&auc),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&scores).unwrap();
    assert!(text.starts_with("t,score,is_true_change\n"));
    assert_eq!(text.lines().count(), 1 + 180 - 26 + 1);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&auc).unwrap()).unwrap();
    assert_eq!(report["method"], "nn");
    assert_eq!(report["seeds"], serde_json::json!([0, 1]));
    assert_eq!(report["auc"].as_array().unwrap().len(), 2);
    assert!(report["mean"].as_f64().unwrap() > 0.5);
}

#[test]
fn feature_select_recovers_planted_features() {
    let o = mised(&[
        "feature-select", "--method", "gp", "--n", "300", "--d", "5", "--informative", "1,3",
        "--shift", "2.5", "--num-features", "2", "--seed", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mut f: Vec<u64> = v["features"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    f.sort_unstable();
    assert_eq!(f, vec![1, 3]);
}

#[test]
fn feature_select_reads_labelled_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    let mut text = String::from("a,b,y\n");
    for i in 0..40 {
        let y = 1 + i % 2;
        let a = (i * 37 % 17) as f64 / 17.0;
        let b = if y == 2 { 5.0 } else { 0.0 } + (i * 11 % 13) as f64 / 13.0;
        text.push_str(&format!("{a},{b},{y}\n"));
    }
    fs::write(&input, text).unwrap();
    let o = mised(&["feature-select", "--method", "nn", "--input", path_str(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["features"], serde_json::json!([1]));
}
