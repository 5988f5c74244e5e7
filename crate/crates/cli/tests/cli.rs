//! End-to-end checks of the binary: flag/config resolution, CSV and JSON
//! shapes, exit codes, and byte-stable reruns.

use std::io::Write;
use std::process::{Command, Output};

fn ealoha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ealoha"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn minimal_pb_flags_are_valid() {
    let out = ealoha(&[
        "eval", "--scheme", "pb", "--n", "100", "--lambda", "0.01", "--q", "0.1", "--energy",
        "1e5", "--pt", "100", "--pw", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("scheme,q,regime,"));
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("pb,1e-1,"));
}

#[test]
fn unknown_config_key_is_named_and_exits_1() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "n = 100\nfoo = 3").unwrap();
    let out = ealoha(&[
        "eval",
        "--config",
        file.path().to_str().unwrap(),
        "--q",
        "0.1",
        "--energy",
        "1e5",
        "--pt",
        "100",
        "--pw",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown key `foo`"), "{}", stderr(&out));
}

#[test]
fn flags_override_config_values() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        file,
        "scheme = pb\nn = 50\nlambda = 0.01\nq = 0.1\nenergy = 1e5\npt = 100\npw = 1"
    )
    .unwrap();
    let from_file = ealoha(&["eval", "--config", file.path().to_str().unwrap()]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let overridden = ealoha(&[
        "eval",
        "--config",
        file.path().to_str().unwrap(),
        "--n",
        "100",
    ]);
    assert!(overridden.status.success());
    assert_ne!(stdout(&from_file), stdout(&overridden));
}

#[test]
fn missing_required_value_exits_1() {
    let out = ealoha(&["eval", "--q", "0.1", "--pt", "100", "--pw", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--energy"), "{}", stderr(&out));
}

#[test]
fn infeasible_optimization_exits_2() {
    let out = ealoha(&[
        "optimize", "--scheme", "cb", "--n", "100", "--m", "8", "--delta", "4", "--lambda",
        "0.004", "--energy", "1e5", "--pt", "100", "--pw", "1", "--t0", "2e5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("infeasible"), "{}", stderr(&out));
    // The row is still emitted for inspection.
    let text = stdout(&out);
    assert!(text.lines().nth(1).unwrap().contains("false,infeasible"));
}

#[test]
fn horizon_exceeded_exits_3() {
    let out = ealoha(&[
        "simulate", "--scheme", "pb", "--n", "5", "--lambda", "0", "--q", "0", "--energy",
        "1000", "--pt", "2", "--pw", "1", "--slot-cap", "10", "--runs", "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("horizon"), "{}", stderr(&out));
}

#[test]
fn casestudy_defaults_fill_release17_parameters() {
    // No powers or geometry given: σ_N = 2, δ = 4, Δ_S,P = 6, P_T = 300,
    // P_W = 3, n = 100 are filled in.
    let out = ealoha(&["casestudy", "--lp", "0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "l_p,ln_threshold,k_star");
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let threshold: f64 = row[1].parse().unwrap();
    assert!((threshold - 1.57).abs() < 0.005, "threshold {threshold}");
}

#[test]
fn casestudy_sweeps_packet_lengths_by_default() {
    let out = ealoha(&["casestudy", "--lp-points", "7", "--lp-from", "0.5", "--lp-to", "2"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 8);
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let args = [
        "simulate", "--scheme", "cb", "--n", "20", "--m", "2", "--delta", "1", "--lambda",
        "0.02", "--q", "0.05", "--energy", "2000", "--pt", "10", "--pw", "1", "--seed", "7",
        "--runs", "3",
    ];
    let a = ealoha(&args);
    let b = ealoha(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    // A different seed changes the measurements.
    let mut other: Vec<&str> = args.to_vec();
    let seed_idx = other.len() - 3;
    other[seed_idx] = "8";
    let c = ealoha(&other);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn out_file_receives_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = ealoha(&[
        "sweep", "--scheme", "pb", "--n", "100", "--lambda", "0.003", "--energy", "1e5",
        "--pt", "100", "--pw", "1", "--from", "0.001", "--to", "0.2", "--points", "9",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("scheme,q,regime,"));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn json_summary_carries_meta_and_rows() {
    let out = ealoha(&[
        "optimize", "--scheme", "pb", "--n", "100", "--lambda", "0.01", "--energy", "1e5",
        "--pt", "100", "--pw", "1", "--t0", "5e4", "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["meta"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["meta"]["config"]["scheme"], "pb");
    assert_eq!(v["meta"]["config"]["t0"], "5e4");
    assert_eq!(v["columns"][0], "scheme");
    assert!(v["rows"][0]["u_max"].is_string());
}

#[test]
fn sweep_t0_tracks_the_optimizer() {
    let out = ealoha(&[
        "sweep", "--var", "t0", "--scheme", "cb", "--n", "100", "--m", "6", "--delta", "4",
        "--lambda", "0.01", "--energy", "1e7", "--pt", "100", "--pw", "1", "--from", "0",
        "--to", "1e7", "--points", "6",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("scheme,t0,feasible,case,regime,u_max,q_opt,p_opt"));
    assert_eq!(text.lines().count(), 7);
    assert!(text.contains("unconstrained_saturated"));
    assert!(text.contains("lifetime_constrained"));
}

#[test]
fn map_emits_the_declared_schema() {
    let out = ealoha(&[
        "map", "--n", "100", "--delta", "4", "--sigma-n", "2", "--delta-sp", "2", "--lambda",
        "0.02", "--energy", "1e6", "--pt", "100", "--pw", "1", "--k-max", "4", "--lp-from",
        "0.5", "--lp-to", "4", "--lp-points", "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(
        text.lines().next().unwrap(),
        "k,l_p,m,winner,u_pb,u_cb,lhs,rhs,regime"
    );
    assert_eq!(text.lines().count(), 21);
    assert!(text.contains(",pb,") || text.contains(",cb,"));
}

#[test]
fn compare_rejects_mismatched_regimes() {
    // Arrival rate between the two schemes' boundaries.
    let out = ealoha(&[
        "compare", "--n", "100", "--k", "1", "--lp", "8", "--sigma-n", "2", "--delta-sp",
        "2", "--delta", "4", "--lambda", "0.0021", "--energy", "1e6", "--pt", "100", "--pw",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("regime"), "{}", stderr(&out));
}

#[test]
fn compare_emits_single_verdict_row() {
    let out = ealoha(&[
        "compare", "--n", "100", "--k", "4", "--lp", "1", "--sigma-n", "2", "--delta-sp",
        "2", "--delta", "4", "--lambda", "0.02", "--energy", "1e6", "--pt", "100", "--pw",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().contains("saturated"));
}

#[test]
fn validate_reports_error_fields() {
    let out = ealoha(&[
        "validate", "--scheme", "cb", "--n", "10", "--m", "2", "--delta", "1", "--lambda",
        "0.02", "--energy", "500", "--pt", "2", "--pw", "2", "--seed", "3", "--runs", "2",
        "--q-grid", "0.0,0.1", "--json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["meta"]["config"]["max_lifetime_rel_err"].is_string());
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn lambertw_lower_branch_and_domain_error() {
    let out = ealoha(&["lambertw", "--branch", "-1", "--x", "-0.1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let w: f64 = stdout(&out)
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((w + 3.5771520639).abs() < 1e-9);
    let bad = ealoha(&["lambertw", "--x", "-1"]);
    assert_eq!(bad.status.code(), Some(1));
}
