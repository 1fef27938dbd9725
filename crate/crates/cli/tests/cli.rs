use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equipart")).args(args).output().unwrap()
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let record: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    record["error"].as_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

// [TRIVIAL]
#[test]
fn catalog_lists_and_shows_entries() {
    let out = run(&["catalog", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("xyz_r3")));
    let out = run(&["catalog", "show", "prism3d:2"]);
    let entry: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(entry["ell_reference"], 3.0);
    assert_eq!(entry["group_order"], 8);
}

// [TRIVIAL] configuration problems exit with 2 and a JSON record
#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&["partition", "--triplet", "nope", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "UnknownId");
    let out = run(&["partition", "--triplet", "dihedral2d:1", "--betas", "10:5:x2", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "InvalidInput");
    let out = run(&["partition", "--triplet", "dihedral2d:1", "--level", "3", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["verify", "--criterion", "nonsense", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(2));
}

// [PAPER] the circle sweep recovers d, and reruns write identical tables
#[test]
fn partition_writes_a_self_contained_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(&["partition", "--triplet", "dihedral2d:3", "--n", "1020", "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for file in ["config.json", "summary.json", "sweep.csv", "field.json", "boundary.json"] {
            assert!(out_dir.join(file).exists(), "{file}");
        }
        tables.push(std::fs::read(out_dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let summary = json(&dir.path().join("a/summary.json"));
    let ell = summary["ell_extrapolated"].as_f64().unwrap();
    assert!((ell - 3.0).abs() < 5e-3 * 3.0, "{ell}");
    let config = json(&dir.path().join("a/config.json"));
    assert_eq!(config["mesh_hash"], summary["mesh_hash"]);
    assert_eq!(config["betas"].as_array().unwrap().len(), 5);
    assert!(config["version"].is_string());
}

// [PAPER] ball pipeline on a stored boundary, then the standalone ACF check
#[test]
fn ball_pipeline_and_acf_check() {
    let dir = tempfile::tempdir().unwrap();
    let part = dir.path().join("part");
    let out = run(&["partition", "--triplet", "xyz_r3", "--level", "3", "--out", part.to_str().unwrap()]);
    assert!(out.status.success());
    let boundary = part.join("boundary.json");
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        let ball = dir.path().join(name);
        let out = run(&[
            "ball", "--triplet", "xyz_r3", "--level", "3", "--boundary", boundary.to_str().unwrap(),
            "--out", ball.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        tables.push(std::fs::read(ball.join("diagnostics.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let report = json(&dir.path().join("a/report.json"));
    assert!(report["frequency_bound_passed"].as_bool().unwrap());
    assert!(report["unit_mass_error"].as_f64().unwrap() < 1e-6);

    let acf_out = dir.path().join("acf");
    let out = run(&[
        "acf-check", "--diagnostics", dir.path().join("a/rescaled.csv").to_str().unwrap(), "--ell", "3",
        "--out", acf_out.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let c = json(&acf_out.join("acf.json"))["c"].as_f64().unwrap();
    let expected = report["acf"]["c"].as_f64().unwrap();
    assert!((c - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{c} vs {expected}");
}

// [TRIVIAL] a coupling below one never reaches the blow-up scale
#[test]
fn small_coupling_is_not_bracketed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ball", "--triplet", "xyz_r3", "--level", "3", "--beta", "0.5", "--betas", "10,40",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "NotBracketed");
    assert!(dir.path().join("diagnostics.csv").exists());
}

// [TRIVIAL] single criterion runs
#[test]
fn verify_runs_a_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--criterion", "invariants", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[PASS] 12 invariants"));
    let outcomes = json(&dir.path().join("verify.json"));
    assert_eq!(outcomes.as_array().unwrap().len(), 1);
}
