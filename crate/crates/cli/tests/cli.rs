//! End-to-end checks of the command-line interface: exit codes, file
//! schemas, and determinism of repeated invocations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modalflow"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn tree_emits_profile_with_one_two_one_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "tree",
        "--fixture",
        fixture("bimodal1d.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--box",
        "-4:7",
        "--resolution",
        "512",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let counts: Vec<usize> = profile
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 64);
    let i = counts.iter().position(|&c| c == 2).expect("a 2-band");
    let j = counts.iter().rposition(|&c| c == 2).unwrap();
    assert!(counts[..i].iter().all(|&c| c == 1));
    assert!(counts[i..=j].iter().all(|&c| c == 2));
    assert!(counts[j + 1..].iter().all(|&c| c == 1));
    let tree: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tree.json")).unwrap())
            .unwrap();
    assert_eq!(tree["split_events"].as_array().unwrap().len(), 1);
}

#[test]
fn unimodal_profile_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "tree",
        "--fixture",
        fixture("normal1d.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(profile
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1).unwrap() == "1"));
}

#[test]
fn missing_fixture_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "tree",
        "--fixture",
        "/nonexistent/fixture.json",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn corrupted_fixture_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"type\": \"mixture\", \"dim\": ").unwrap();
    let out = run(&[
        "verify",
        "--fixture",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flow_trajectory_csv_schema_and_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "flow",
            "--fixture",
            fixture("bimodal2d.json").to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--start",
            "0.5,0.3",
            "--start",
            "-1.0,2.0",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trajectory_0.csv", "trajectory_0.json", "trajectory_1.csv"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let csv = std::fs::read_to_string(dir_a.path().join("trajectory_0.csv")).unwrap();
    assert!(csv.starts_with("tau,x_1,x_2,f,grad_norm\n"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir_a.path().join("trajectory_0.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["stop_reason"], "converged_to_critical");
}

#[test]
fn project_walk_csv_has_residual_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "project",
        "--fixture",
        fixture("bimodal2d.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--start",
        "0.5,-1.0",
        "--eta",
        "0.005",
        "--level-ceiling",
        "0.079",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("walk.csv")).unwrap();
    assert!(csv.starts_with("step,x_1,x_2,f,delta_f,level_residual,normality_residual\n"));
    assert!(csv.lines().count() > 3);
}

#[test]
fn project_exports_requested_contours() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "project",
        "--fixture",
        fixture("bimodal2d.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--start",
        "0.5,-1.0",
        "--eta",
        "0.005",
        "--level-ceiling",
        "0.05",
        "--contour-level",
        "0.03",
        "--contour-level",
        "0.065",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c0: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("contour_0.json")).unwrap())
            .unwrap();
    assert_eq!(c0["loops"].as_array().unwrap().len(), 1);
    let c1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("contour_1.json")).unwrap())
            .unwrap();
    assert_eq!(c1["loops"].as_array().unwrap().len(), 2);
}

#[test]
fn hybrid_requires_t_or_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "hybrid",
        "--fixture",
        fixture("bimodal2d.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_and_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let report_a = dir.path().join("a.json");
    let report_b = dir.path().join("b.json");
    for (path, _) in [(&report_a, 0), (&report_b, 1)] {
        let out = run(&[
            "verify",
            "--seed",
            "17",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("overall: pass"));
    }
    let a = std::fs::read(&report_a).unwrap();
    let b = std::fs::read(&report_b).unwrap();
    assert_eq!(a, b, "reports differ between identical seeded runs");
}

#[test]
fn verify_with_zero_tolerance_exits_1() {
    let out = run(&["verify", "--seed", "17", "--tolerance-scale", "0"]);
    assert_eq!(out.status.code(), Some(1));
}
