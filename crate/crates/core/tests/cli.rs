use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riesz-adams"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("riesz-adams-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_manifest(dir: &Path, text: &str, extra: &[&str]) -> Output {
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).unwrap();
    bin().args(["run", "--manifest"]).arg(&path).arg("--out").arg(dir.join("out")).args(extra).output().unwrap()
}

#[test]
fn successful_run_writes_three_artifacts() {
    let dir = scratch("ok");
    let out = run_manifest(&dir, r#"{"command": "rearrange", "parameters": {"values": [3, -1, 2]}}"#, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for ext in ["csv", "verdict.json", "log"] {
        assert!(dir.join(format!("out.{ext}")).exists(), "missing {ext}");
    }
    let verdict: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("out.verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["status"], "ok");
    assert_eq!(verdict["sup"]["value"], 3.0);
}

#[test]
fn inconclusive_verdict_exits_two() {
    let dir = scratch("inconclusive");
    let out = run_manifest(&dir, r#"{"command": "domain-check", "parameters": {"domain": "strip", "doublings": 2}, "seed": 1}"#, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn errors_exit_one_and_name_the_field() {
    let dir = scratch("errors");
    let out = run_manifest(&dir, r#"{"command": "saturate", "parameters": {"kernel": "riesz-r2"}}"#, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parameters.gammas"));

    let out = run_manifest(&dir, r#"{"command": "domain-check", "parameters": {"domain": "strip"}}"#, &[]);
    assert_eq!(out.status.code(), Some(1), "stochastic command without a seed");
    let out = run_manifest(&dir, r#"{"command": "domain-check", "parameters": {"domain": "strip", "samples": 2000}}"#, &["--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "--seed supplies the missing seed");

    assert_eq!(bin().args(["run", "--bogus"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["run"]).output().unwrap().status.code(), Some(1));
}

#[test]
fn list_filters_by_category() {
    let all = bin().arg("list").output().unwrap();
    assert!(all.status.success());
    let lines = String::from_utf8(all.stdout).unwrap();
    assert!(lines.lines().count() >= 10);

    let kernels = String::from_utf8(bin().args(["list", "kernel"]).output().unwrap().stdout).unwrap();
    assert!(!kernels.is_empty());
    assert!(kernels.lines().all(|l| l.starts_with("kernel")));
    assert!(kernels.lines().count() < lines.lines().count());

    let none = bin().args(["list", "no-such-category"]).output().unwrap();
    assert!(none.status.success() && none.stdout.is_empty());
}

#[test]
fn preset_runs_without_a_manifest() {
    let dir = scratch("preset");
    let out = bin().args(["run", "--preset", "riesz-r2", "--out"]).arg(dir.join("riesz")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let verdict = std::fs::read_to_string(dir.join("riesz.verdict.json")).unwrap();
    assert!(verdict.contains("\"kernel-check\""));
}

#[test]
fn samples_and_seed_reproduce_byte_identical_csv() {
    let dir = scratch("determinism");
    let text = r#"{"command": "rearrange", "parameters": {"random": {"count": 100}}, "seed": 5}"#;
    let first = {
        run_manifest(&dir, text, &["--samples", "50"]);
        std::fs::read(dir.join("out.csv")).unwrap()
    };
    run_manifest(&dir, text, &["--samples", "50"]);
    assert_eq!(first, std::fs::read(dir.join("out.csv")).unwrap());
    run_manifest(&dir, text, &["--samples", "50", "--seed", "6"]);
    assert_ne!(first, std::fs::read(dir.join("out.csv")).unwrap());
}
