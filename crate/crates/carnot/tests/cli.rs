//! Black-box tests of the `carnot` binary: exit codes, report files, and the
//! CSV round trips behind each subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_carnot")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn verify_passing_scenario_exits_zero_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("h1_linear.toml");
    let out = run(dir.path(), &["verify", sc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = dir.path().join("report.json");
    assert!(report.exists());
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed["checks"].as_array().unwrap().iter().all(|c| c["pass"].as_bool().unwrap()));
    // Human-readable table on stdout alongside the JSON.
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict_datum_bound_agreement"));
}

#[test]
fn verify_failing_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("h1_wrong_datum.toml");
    let out = run(dir.path(), &["verify", sc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "j_list = [2]\n[group]\nkind = \"heisenberg\"\nk = 1\n[field]\nkind = \"nope\"\n\
         mins = [0.0, 0.0]\nmaxs = [1.0, 1.0]\ncounts = [5, 5]\n[datum]\nkind = \"constant\"\nvalue = 0.0\n",
    )
    .unwrap();
    let out = run(dir.path(), &["verify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_subcommand_exits_two() {
    let out = Command::new(bin()).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn group_check_accepts_valid_and_rejects_non_skew() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "m = 2\nn = 1\neps = 1.0\nb = [[[0.0, 1.0], [-1.0, 0.0]]]\n").unwrap();
    let out = run(dir.path(), &["group", "check", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("associativity"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "m = 2\nn = 1\neps = 1.0\nb = [[[0.0, 1.0], [1.0, 0.0]]]\n").unwrap();
    let out = run(dir.path(), &["group", "check", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("spec_valid"));
}

#[test]
fn char_trace_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("h1_linear.toml");
    let out = run(dir.path(), &["char", "trace", sc.to_str().unwrap(), "--init", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("characteristic.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,gamma1"));
    assert!(lines.count() > 100);
}

#[test]
fn lagrangian_build_then_mollify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("h1_linear.toml");
    let out = run(dir.path(), &["lagrangian", "build", sc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let param_dir = dir.path().join("param_j2");
    for name in ["chi_1.csv", "wbar.csv", "wbar_valid.csv", "meta.toml"] {
        assert!(param_dir.join(name).exists(), "{name} missing");
    }
    let out = run(
        dir.path(),
        &[
            "mollify",
            param_dir.to_str().unwrap(),
            "--eps",
            "0.1",
            "--scenario",
            sc.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["chi_eps.csv", "phi_eps.csv", "w_eps.csv"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn plotdata_flattens_report() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("h1_linear.toml");
    run(dir.path(), &["verify", sc.to_str().unwrap()]);
    let report = dir.path().join("report.json");
    let out = run(dir.path(), &["plotdata", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("plotdata.csv")).unwrap();
    assert!(csv.starts_with("check,pass,measured,tolerance,resolution"));
    assert!(csv.contains("condition2_residual_j2"));
}
