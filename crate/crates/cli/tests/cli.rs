use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridstate")).args(args).env("GRIDSTATE_THREADS", "2").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_prints_a_record() {
    let out = run(&["estimate", "--case", "case14"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rec: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(rec["case"], "case14");
    assert!(rec["cost"].as_f64().unwrap() < 1e-6);
    assert!(rec["d2"].as_f64().unwrap() < 1e-6);
    assert_eq!(rec["state"].as_array().unwrap().len(), 14);
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.m");
    assert_eq!(code(&run(&["estimate", "--case", path(&missing)])), 2);
    assert_eq!(code(&run(&["estimate", "--estimator", "bogus"])), 2);
    assert_eq!(code(&run(&["estimate", "--noise", "faulty", "--pf", "1.5"])), 2);
    assert_eq!(code(&run(&["estimate", "--unknown-flag"])), 2);
    let garbage = dir.path().join("m.jsonl");
    std::fs::write(&garbage, "{not json\n").unwrap();
    let out = run(&["estimate", "--measurements", path(&garbage)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn benchmark_needs_two_seeds() {
    let out = run(&["benchmark", "--case", "case2", "--seeds", "4", "--estimator", "wls"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn infeasible_relaxation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("inf.dat-s");
    // x ≥ 0 and −x − 1 ≥ 0.
    std::fs::write(&f, "1\n2\n1 1\n1\n1 1 1 1 1\n1 2 1 1 -1\n0 2 1 1 1\n").unwrap();
    let out = run(&["relax", "--import-sdpa", path(&f)]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("\"infeasible\""));
}

#[test]
fn simulate_then_estimate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("m.jsonl");
    let sim = run(&["simulate", "--case", "case14", "--noise", "gaussian", "--seed", "3", "--out", path(&f)]);
    assert_eq!(code(&sim), 0);
    let from_file = run(&["estimate", "--case", "case14", "--measurements", path(&f)]);
    let direct = run(&["estimate", "--case", "case14", "--noise", "gaussian", "--seed", "3"]);
    assert_eq!(code(&from_file), 0);
    let a: serde_json::Value = serde_json::from_str(stdout(&from_file).trim()).unwrap();
    let b: serde_json::Value = serde_json::from_str(stdout(&direct).trim()).unwrap();
    assert_eq!(a["state"], b["state"]);
}

#[test]
fn relax_round_trips_through_sdpa() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("two.dat-s");
    let built = run(&["relax", "--case", "case2", "--order", "1", "--export-sdpa", path(&f)]);
    assert_eq!(code(&built), 0, "{}", String::from_utf8_lossy(&built.stderr));
    let imported = run(&["relax", "--import-sdpa", path(&f)]);
    assert_eq!(code(&imported), 0);
    let a: serde_json::Value = serde_json::from_str(stdout(&built).trim()).unwrap();
    let b: serde_json::Value = serde_json::from_str(stdout(&imported).trim()).unwrap();
    assert_eq!(a["bound"], b["bound"]);
    assert_eq!(a["blocks"], b["blocks"]);
}

#[test]
fn constant_stream_tracks_without_change_points() {
    let dir = tempfile::tempdir().unwrap();
    let sim = run(&["simulate", "--case", "case14", "--stream-steps", "1", "--out", path(dir.path())]);
    assert_eq!(code(&sim), 0);
    let first = dir.path().join("step_0.jsonl");
    for k in 1..3 {
        std::fs::copy(&first, dir.path().join(format!("step_{k}.jsonl"))).unwrap();
    }
    let out = run(&["track", "--stream", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,cost,d2_prev,iters,warm,change_point");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.ends_with(",false")));
}

#[test]
fn track_rejects_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let sim = run(&["simulate", "--case", "case14", "--stream-steps", "1", "--out", path(dir.path())]);
    assert_eq!(code(&sim), 0);
    std::fs::copy(dir.path().join("step_0.jsonl"), dir.path().join("step_2.jsonl")).unwrap();
    assert_eq!(code(&run(&["track", "--stream", path(dir.path())])), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let cases: &[&[&str]] = &[
        &["estimate", "--case", "case14", "--noise", "faulty", "--pf", "0.1", "--seed", "5", "--estimator", "multistart:4"],
        &["simulate", "--case", "case30", "--noise", "chain", "--seed", "2"],
        &["benchmark", "--case", "case14", "--noise", "gaussian", "--seeds", "1,2", "--estimator", "wls", "--estimator", "lasso:0.5"],
    ];
    for args in cases {
        let a = run(args);
        let b = run(args);
        assert_eq!(code(&a), 0, "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}
