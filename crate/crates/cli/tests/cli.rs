use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smile::data::{write_csv, Seed};
use smile::sim::{generate, DgpSpec, Scenario};

fn smile(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smile")).args(args).env("SMILE_THREADS", "2").output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_file(dir: &Path) -> PathBuf {
    let spec = DgpSpec { n: 300, p1: 6, p2: 6, sigma: 0.5, scenario: Scenario::Aplm, seed: Seed(7) };
    let (raw, _) = generate(&spec).unwrap();
    let path = dir.join("data.csv");
    write_csv(&raw, &path).unwrap();
    path
}

fn fit(data: &Path, out: &Path) -> Output {
    smile(&["fit", "--input", path_str(data), "--out", path_str(out), "--grid", "21"])
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());
    let out = dir.path().join("fit");
    assert_ok(&fit(&data, &out));
    for name in ["structure.json", "model.json", "run_meta.json"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap();
    }
    let st: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("structure.json")).unwrap()).unwrap();
    assert_eq!(st["s_z"], serde_json::json!(["z_1", "z_2", "z_3"]));
    assert_eq!(st["s_x_pl"], serde_json::json!(["x_1"]));
    assert_eq!(st["s_x_ln"], serde_json::json!(["x_3"]));
    assert_eq!(st["s_x_pn"], serde_json::json!(["x_2"]));

    let coefs = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let mut lines = coefs.lines();
    assert_eq!(lines.next(), Some("term,block,estimate,std_error"));
    assert_eq!(lines.count(), 4);
    for name in ["x_2", "x_3"] {
        let curve = fs::read_to_string(out.join("curves").join(format!("{name}.csv"))).unwrap();
        assert_eq!(curve.lines().count(), 22);
    }
}

#[test]
fn fit_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&fit(&data, &a));
    assert_ok(&fit(&data, &b));
    for name in ["structure.json", "coefficients.csv", "model.json", "curves/x_2.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn fit_without_response_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "a,z_1,x_1\n1,0,0.1\n2,1,0.2\n").unwrap();
    let out = fit(&data, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [roles]"));
}

#[test]
fn fit_rejects_bad_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());
    let out = smile(&["fit", "--input", path_str(&data), "--out", path_str(&dir.path().join("o")), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bands_rebuilds_curves_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_file(dir.path());
    let out = dir.path().join("fit");
    assert_ok(&fit(&data, &out));
    let again = dir.path().join("again");
    assert_ok(&smile(&["bands", "--input", path_str(&out), "--out", path_str(&again), "--grid", "21"]));
    for name in ["x_2.csv", "x_3.csv"] {
        assert_eq!(fs::read(out.join("curves").join(name)).unwrap(), fs::read(again.join(name)).unwrap());
    }
}

#[test]
fn bands_without_model_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = smile(&["bands", "--input", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

fn experiment(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "n": 120, "p1": 5, "p2": 5, "sigma": 0.5, "scenario": "APLM",
        "reps": 2, "seed": 3, "variants": ["SMILE", "ORACLE"], "coverage": true
    });
    let path = dir.join("exp.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn simulate_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path());
    let out = dir.path().join("sim");
    assert_ok(&smile(&["simulate", "--config", path_str(&cfg), "--out", path_str(&out)]));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summaries"].as_array().unwrap().len(), 2);
    let table = fs::read_to_string(out.join("table_selection.csv")).unwrap();
    let mut lines = table.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("method,corrZ,"), "{header}");
    for row in lines {
        for cell in row.split(',').skip(1).filter(|c| *c != "NA") {
            let v: f64 = cell.parse().unwrap();
            assert!((0.0..=100.0).contains(&v));
        }
    }
    assert_eq!(fs::read_to_string(out.join("replicates.csv")).unwrap().lines().count(), 5);
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&smile(&["simulate", "--config", path_str(&cfg), "--out", path_str(&a), "--threads", "1"]));
    assert_ok(&smile(&["simulate", "--config", path_str(&cfg), "--out", path_str(&b), "--threads", "3"]));
    for name in ["table_selection.csv", "table_estimation.csv", "table_coverage.csv", "replicates.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn simulate_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"n": 10, "reps": 1}"#).unwrap();
    let out = smile(&["simulate", "--config", path_str(&path), "--out", path_str(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}
