//! End-to-end runs of the `mgpoison` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgpoison")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const RANDOM: &[&str] = &[
    "gen", "--family", "random", "--n", "2", "--A", "2", "--S", "2", "--H", "2", "--min-visits", "2", "--max-visits", "4", "--b", "1",
    "--noise", "0.2", "--seed", "3", "--out", "r.jsonl",
];
const WIDTHS: &[&str] = &["--widths", "constant", "--rho-r", "0.1", "--rho-p", "0.2"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run_v(dir: &Path, args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    run(dir, &refs)
}

#[test]
fn worst_case_generator_writes_equal_counts() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok_json(dir.path(), &["gen", "--family", "worst-case", "--n", "2", "--A", "2", "--S", "2", "--H", "2", "--N", "3", "--b", "1", "--seed", "7", "--out", "wc.jsonl"]);
    assert_eq!(r["min_count"], 3);
    assert_eq!(r["max_count"], 3);
    let header: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("wc.header.json")).unwrap()).unwrap();
    assert_eq!(header["H"], 2);
    assert_eq!(header["actions"], serde_json::json!([2, 2]));
}

#[test]
fn example_game_needs_no_poisoning() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["gen", "--family", "example-game", "--out", "s3.jsonl"]);
    let r = ok_json(dir.path(), &["attack", "--dataset", "s3.jsonl", "--target", "all-zeros", "--iota", "0.5", "--widths", "constant", "--rho-r", "0.1", "--model", "ci"]);
    assert_eq!(r["cost"], 0.0);
    assert_eq!(r["status"], "optimal");
}

#[test]
fn worst_case_bandit_cost_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["gen", "--family", "worst-case", "--n", "2", "--A", "2", "--S", "1", "--H", "1", "--N", "3", "--b", "1", "--out", "wc.jsonl"]);
    let r = ok_json(
        dir.path(),
        &["attack", "--dataset", "wc.jsonl", "--target", "all-zeros", "--iota", "0.05", "--widths", "constant", "--rho-r", "0.1", "--model", "ci", "--out", "p.jsonl", "--tie-break", "highest-means"],
    );
    assert!((r["cost"].as_f64().unwrap() - 27.0).abs() < 1e-6);
    assert!(dir.path().join("p.jsonl").exists() && dir.path().join("p.header.json").exists());
    // Own target action at b, own deviations at b - 2ρ - ι.
    for (i, row) in [[1.0, 1.0, 0.75, 0.75], [1.0, 0.75, 1.0, 0.75]].iter().enumerate() {
        for (a, want) in row.iter().enumerate() {
            assert!((r["mle_after"][i][0][0][a].as_f64().unwrap() - want).abs() < 1e-9);
        }
    }
}

#[test]
fn excessive_margin_is_infeasible_and_cites_a_cell() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["gen", "--family", "worst-case", "--n", "2", "--A", "2", "--S", "1", "--H", "1", "--N", "3", "--b", "1", "--out", "wc.jsonl"]);
    let out = run(dir.path(), &["attack", "--dataset", "wc.jsonl", "--target", "all-zeros", "--iota", "2.5", "--widths", "constant", "--rho-r", "0.1", "--model", "ci", "--report", "rep.json"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("(h=0, s=0, a="));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    assert_eq!(rep["status"], "infeasible");
    assert!(!rep["violations"].as_array().unwrap().is_empty());
}

#[test]
fn uncovered_cells_exit_with_coverage_code() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["gen", "--family", "example-game", "--counts", "1,0,1,1", "--out", "s3.jsonl"]);
    let out = run(dir.path(), &["attack", "--dataset", "s3.jsonl", "--target", "all-zeros", "--iota", "0.5", "--widths", "zero", "--model", "mle"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("(h=0, s=0, a=1)"));
}

#[test]
fn missing_attack_parameters_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["gen", "--family", "example-game", "--out", "s3.jsonl"]);
    let no_widths = run(dir.path(), &["attack", "--dataset", "s3.jsonl", "--target", "all-zeros", "--iota", "0.5", "--model", "ci"]);
    assert_eq!(code(&no_widths), 2);
    let no_iota = run(dir.path(), &["attack", "--dataset", "s3.jsonl", "--target", "all-zeros", "--widths", "zero", "--model", "ci"]);
    assert_eq!(code(&no_iota), 2);
    let no_delta = run(dir.path(), &["attack", "--dataset", "s3.jsonl", "--target", "all-zeros", "--iota", "0.5", "--widths", "hoeffding", "--model", "ci"]);
    assert_eq!(code(&no_delta), 2);
    let missing = run(dir.path(), &["attack", "--dataset", "nope.jsonl", "--target", "all-zeros", "--iota", "0.5", "--widths", "zero", "--model", "ci"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn attack_output_verifies_and_learners_recover_target() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), RANDOM);
    let attack = with(&["attack", "--dataset", "r.jsonl", "--target", "all-zeros", "--iota", "0.1", "--model", "ci", "--out", "p.jsonl"], WIDTHS);
    let out = run_v(dir.path(), &attack);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["mode"], "markov_ci");
    assert!(rep["q_lower"].is_array() && rep["q_upper"].is_array());

    let verify = with(&["verify", "--dataset", "p.jsonl", "--target", "all-zeros", "--iota", "0.1", "--samples", "500"], WIDTHS);
    let out = run_v(dir.path(), &verify);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["verify"]["passes"], 500);
    assert_eq!(rep["verify"]["samples"], 500);

    let learn = with(&["learn", "--dataset", "p.jsonl", "--bonus", "pessimistic", "--bonus-c", "auto", "--delta", "0.1", "--target", "all-zeros"], WIDTHS);
    let out = run_v(dir.path(), &learn);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["target_match"], true);
    assert_eq!(rep["all_strict"], true);
}

#[test]
fn verification_failure_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), RANDOM);
    // The unpoisoned data does not install the target.
    let verify = with(&["verify", "--dataset", "r.jsonl", "--target", "all-zeros", "--iota", "0.1", "--samples", "50", "--report", "v.json"], WIDTHS);
    let out = run_v(dir.path(), &verify);
    assert_eq!(code(&out), 5);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
    let failures = rep["verify"]["failures"].as_array().unwrap();
    assert!(!failures.is_empty());
    assert!(failures[0]["rewards"].is_array());
}

#[test]
fn bounds_report_the_worst_case_lower_bound() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["gen", "--family", "worst-case", "--n", "2", "--A", "2", "--S", "2", "--H", "2", "--N", "4", "--b", "1", "--out", "wc.jsonl"]);
    let r = ok_json(
        dir.path(),
        &["bounds", "--dataset", "wc.jsonl", "--target", "all-zeros", "--iota", "0.05", "--widths", "constant", "--rho-r", "0.1", "--rho-p", "0", "--full"],
    );
    // N H |S| n A^{n-1} (2b + 2ρ + ι) = 4 · 2 · 2 · 2 · 2 · 2.25
    assert!((r["bounds"]["uniform_transition_lower"].as_f64().unwrap() - 144.0).abs() < 1e-6);
    assert_eq!(r["bracketed"], true);
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), RANDOM);
    let first = std::fs::read(dir.path().join("r.jsonl")).unwrap();
    ok_json(dir.path(), RANDOM);
    assert_eq!(first, std::fs::read(dir.path().join("r.jsonl")).unwrap());
    let attack = with(&["attack", "--dataset", "r.jsonl", "--target", "all-zeros", "--iota", "0.1", "--model", "ci", "--out", "p.jsonl", "--verify-samples", "100", "--seed", "5"], WIDTHS);
    let a = run_v(dir.path(), &attack);
    let poisoned = std::fs::read(dir.path().join("p.jsonl")).unwrap();
    let b = run_v(dir.path(), &attack);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(poisoned, std::fs::read(dir.path().join("p.jsonl")).unwrap());
    let out = Command::new(env!("CARGO_BIN_EXE_mgpoison")).current_dir(dir.path()).env("MGPOISON_THREADS", "1").args(&attack).output().unwrap();
    let rep_a: Value = serde_json::from_slice(&a.stdout).unwrap();
    let rep_c: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep_a["verify"], rep_c["verify"]);
    assert_eq!(rep_c["resolved"]["threads"], 1);
}

#[test]
fn example_family_accepts_its_alias() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok_json(dir.path(), &["gen", "--family", "section3", "--out", "s3.jsonl"]);
    assert_eq!(r["episodes"], 4);
}
