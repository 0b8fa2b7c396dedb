use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lorapar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lorapar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--output", dir.to_str().unwrap()]);
    lorapar(&all)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_LYAPUNOV: &[&str] = &[
    "run", "lyapunov", "--n", "12", "--T", "0.2", "--slices", "4", "--q", "2", "--r", "4",
    "--substeps", "4",
];

#[test]
fn validate_prints_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["validate", "lyapunov"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["spec"]["experiment"], "lyapunov");
    assert_eq!(v["spec"]["r"], 16);
}

#[test]
fn coarse_rank_must_be_below_fine_rank() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["validate", "lyapunov", "--q", "16", "--r", "16"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("q < r"), "{}", stderr(&out));
}

#[test]
fn missing_output_dir_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(&dir.path().join("absent"), &["run", "lyapunov"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("output"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_config_error() {
    let out = lorapar(&["run", "lyapunov", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_figure_writes_four_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "bounds-figure", "--alpha", "0.2", "--beta", "0.7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("kind,n,k,value"));
    let kinds: BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds.len(), 4, "{kinds:?}");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn lyapunov_run_and_manifest_replay() {
    let first = tempfile::tempdir().unwrap();
    let out = run_in(first.path(), SMALL_LYAPUNOV);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let conv = fs::read_to_string(first.path().join("convergence.csv")).unwrap();
    assert!(conv.starts_with("experiment_id,sweep_value,k,n,error,rank\n"));
    let data_rows = conv.lines().count() - 1;
    // iterations 0..=4 times slice indices 0..=4
    assert_eq!(data_rows, 25);
    assert!(first.path().join("spectra.csv").exists());

    let second = tempfile::tempdir().unwrap();
    let manifest = first.path().join("manifest.json");
    let out = run_in(second.path(), &["run", "lyapunov", "--from-manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let replay = fs::read_to_string(second.path().join("convergence.csv")).unwrap();
    assert_eq!(conv, replay);
}

#[test]
fn small_cookie_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["run", "cookie", "--n", "8", "--p", "5", "--T", "0.01", "--slices", "3", "--q", "1", "--r", "3"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("convergence.csv").exists());
}

#[test]
fn small_riccati_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["run", "riccati", "--n", "10", "--k", "3", "--T", "0.01", "--slices", "3", "--q", "2", "--r", "4"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(v["bounds_note"].is_string(), "nonlinear field reports why bounds are skipped");
}
