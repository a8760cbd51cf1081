use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spde_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde-lab")).args(args).output().unwrap()
}

const OU: &str = r#"{
  "name": "ou_small",
  "kind": "ou_oracle",
  "seed": 11,
  "problem": {
    "semigroup_spec": {"kind": "diagonal", "rates": [1.0]},
    "coefficients": "additive_identity",
    "noise": {"eigenvalues": [1.0]}
  },
  "grid": {"horizon": 1.0, "dt": 0.0625, "ladder_depth": 2},
  "paths": 500,
  "options": {"scheme_paths": 20}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn passing_run_writes_manifest_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ou.json", OU);
    let out = tmp.path().join("runs");
    let o = spde_lab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("passed ou_small"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("ou_small/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert!(manifest["files"].as_array().unwrap().len() >= 3);
}

#[test]
fn reruns_and_thread_counts_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ou.json", OU);
    let mut runs = Vec::new();
    for (i, threads) in ["1", "3", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("r{i}"));
        let o = spde_lab(&["--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0));
        runs.push(csv_bytes(&out.join("ou_small")));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn seed_override_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ou.json", OU);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    spde_lab(&["--config", &cfg, "--out", a.to_str().unwrap()]);
    spde_lab(&["--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(csv_bytes(&a.join("ou_small")), csv_bytes(&b.join("ou_small")));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(b.join("ou_small/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 12);
}

#[test]
fn non_nesting_ladder_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = OU.replace(r#""dt": 0.0625, "ladder_depth": 2"#, r#""ladder": [0.25, 0.1]"#);
    let cfg = write(tmp.path(), "bad.json", &bad);
    let o = spde_lab(&["--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.ladder"));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn unknown_field_and_missing_file_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "typo.json", &OU.replace("\"paths\"", "\"pathz\""));
    assert_eq!(spde_lab(&["--config", &cfg]).status.code(), Some(2));
    let missing = tmp.path().join("nope.json");
    assert_eq!(spde_lab(&["--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unknown_experiment_name_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ou.json", OU);
    let o = spde_lab(&["--config", &cfg, "--experiment", "other"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_threshold_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let strict = OU.replace(r#""paths": 500"#, r#""paths": 500, "thresholds": {"z_max": 0.0}"#);
    let cfg = write(tmp.path(), "strict.json", &strict);
    let o = spde_lab(&["--config", &cfg, "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn list_fixtures_prints_registry() {
    let o = spde_lab(&["--list-fixtures"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let names = |k: &str| v[k].as_array().unwrap().len();
    assert!(names("semigroups") >= 4 && names("coefficients") >= 8 && names("charts") >= 2);
}
