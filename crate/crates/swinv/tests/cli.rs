//! End-to-end command-line checks: exit-code contract, artifact formats,
//! determinism, and certificate round-trips between commands.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_swinv")
}

fn write_system(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stable_pair_json() -> &'static str {
    r#"{"modes":[{"A":[[-1.0,-1.0],[0.0,-1.0]],"b":[-1.0,-1.0]},{"A":[[-1.0,0.0],[-1.0,-1.0]],"b":[-1.0,-1.0]}]}"#
}

fn resonant_pair_json() -> &'static str {
    r#"{"modes":[{"A":[[0.0,1.0],[-10.0,-1.0]],"b":[-1.0,-1.0]},{"A":[[0.0,1.0],[-0.1,-0.5]],"b":[1.0,0.0]}]}"#
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("SWINV_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn ellipsoid_artifacts_are_deterministic_and_versioned() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = write_system(tmp.path(), "sys.json", stable_pair_json());
    for sub in ["a", "b"] {
        let out = run(&[
            "invariant-ellipsoid",
            "--system",
            sys.to_str().unwrap(),
            "--kappa",
            "0.4785",
            "-o",
            tmp.path().join(sub).to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    let a = std::fs::read(tmp.path().join("a/ellipsoid.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b/ellipsoid.json")).unwrap();
    assert_eq!(a, b, "artifacts differ across identical runs");
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("\"schema\":\"swinv/1\""));
    assert!(tmp.path().join("a/ellipsoid_levelset.csv").exists());
}

#[test]
fn certificates_round_trip_into_verification_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = write_system(tmp.path(), "sys.json", resonant_pair_json());
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "dwell-cert",
        "--system",
        sys.to_str().unwrap(),
        "--tau",
        "2.76",
        "--cells",
        "0",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let cert = out_dir.join("dwell.json");

    let member = run(&[
        "membership",
        "--system",
        sys.to_str().unwrap(),
        "--cert",
        cert.to_str().unwrap(),
        "--point",
        "0,0",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&member);
    assert!(String::from_utf8_lossy(&member.stdout).contains("inside"));

    let verify = run(&[
        "verify",
        "--system",
        sys.to_str().unwrap(),
        "--cert",
        cert.to_str().unwrap(),
        "--n",
        "10",
        "--horizon",
        "40",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&verify);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("verify.json")).unwrap())
            .unwrap();
    assert_eq!(report["schema"], "swinv/1");
    assert_eq!(report["post_entry_exits"], 0);
    assert_eq!(report["all_entered"], true);
}

#[test]
fn infeasible_analysis_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = write_system(tmp.path(), "sys.json", stable_pair_json());
    let out = run(&[
        "invariant-ellipsoid",
        "--system",
        sys.to_str().unwrap(),
        "--kappa",
        "50.0",
        "-o",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_and_io_errors_exit_two() {
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "min-dwell",
        "--system",
        tmp.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_seeded_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = write_system(tmp.path(), "sys.json", resonant_pair_json());
    for sub in ["a", "b"] {
        let out = run(&[
            "simulate",
            "--system",
            sys.to_str().unwrap(),
            "--tau",
            "2.76",
            "--n",
            "3",
            "--horizon",
            "10",
            "--steps",
            "50",
            "--seed",
            "9",
            "-o",
            tmp.path().join(sub).to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    for k in 0..3 {
        let name = format!("traj_{k:03}.csv");
        let a = std::fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs across identical seeded runs");
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("t,x1,x2,mode\n"));
        assert!(text.lines().count() > 50);
    }
}

#[test]
fn min_dwell_prints_the_reference_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = write_system(tmp.path(), "sys.json", resonant_pair_json());
    let out = run(&[
        "min-dwell",
        "--system",
        sys.to_str().unwrap(),
        "--tol",
        "0.01",
        "-o",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_success(&out);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("out/min_dwell.json")).unwrap(),
    )
    .unwrap();
    let tau = report["tau_min"].as_f64().unwrap();
    assert!((2.74..=2.78).contains(&tau), "tau_min = {tau}");
}

#[test]
fn path_follow_emits_iteration_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = write_system(
        tmp.path(),
        "sys.json",
        r#"{"modes":[{"A":[[-5.0,1.0],[-1.0,-4.0]],"b":[-50.0,-10.0]},{"A":[[-5.0,-1.0],[1.0,-4.0]],"b":[-10.0,-40.0]},{"A":[[-2.0,8.0],[-5.0,-5.0]],"b":[0.0,0.0]}]}"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "path-follow",
        "--system",
        sys.to_str().unwrap(),
        "--tau",
        "0.5",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let trace = std::fs::read_to_string(out_dir.join("iterations.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,c1_1,c1_2,c2_1,c2_2,c3_1,c3_2\n"));
    let rows = trace.lines().count() - 1;
    assert!(rows >= 2, "expected at least a warm start and one step");
    // the stored certificate is accepted by the membership command
    let member = run(&[
        "membership",
        "--system",
        sys.to_str().unwrap(),
        "--cert",
        out_dir.join("dwell.json").to_str().unwrap(),
        "--point",
        "-9.8,-0.6",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&member);
}
