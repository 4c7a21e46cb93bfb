mod common;

use std::process::{Command, Output};

use common::scenario_dir;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lockstep-sim")).args(args).output().expect("binary runs")
}

fn scn(name: &str) -> String {
    scenario_dir().join(name).display().to_string()
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("report on stdout is json")
}

#[test]
fn run_fig5_succeeds_with_one_rejection() {
    let out = sim(&["run", &scn("fig5.scn")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["sessions"].as_array().unwrap().len(), 1);
    assert_eq!(r["tallies"]["rejected"], 1);
    assert_eq!(r["final_state"], "normal_processing");
}

#[test]
fn timeout_and_boot_failure_exit_two() {
    assert_eq!(sim(&["run", &scn("timeout.scn")]).status.code(), Some(2));
    assert_eq!(sim(&["run", &scn("boot_fail.scn")]).status.code(), Some(2));
    assert_eq!(sim(&["run", &scn("no_majority.scn")]).status.code(), Some(2));
}

#[test]
fn validate_reports_field_path() {
    let out = sim(&["validate", &scn("broken.scn")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_blocks"));

    let ok = sim(&["validate", &scn("fig5.scn")]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("2oo2"));
}

#[test]
fn parse_errors_carry_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "name = \"x\"\nseed = = 3\n").unwrap();
    let out = sim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));

    let missing = dir.path().join("nope.scn");
    assert_eq!(sim(&["run", missing.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn seed_override_is_echoed() {
    let out = sim(&["run", &scn("random_selection.scn"), "--seed", "18446744073709551615"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["seed"].as_u64(), Some(u64::MAX));
}

#[test]
fn trace_and_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let rep = dir.path().join("r.json");
    let out = sim(&[
        "run",
        &scn("fig5.scn"),
        "--trace",
        trace.to_str().unwrap(),
        "--format",
        "csv",
        "--report",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("cycle,phase,entity,kind,detail\n"));
    assert!(csv.contains(",reject,"));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r["scenario"], "fig5");
    assert_eq!(r["scenario_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_cycles_gives_boot_only() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let out = sim(&["run", &scn("fig5.scn"), "--max-cycles", "0", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.first(), Some(&r#"{"trace":"lockstep-sim","version":1}"#));
    assert_eq!(lines.last(), Some(&r#"{"end":true,"events":3}"#));
    assert!(lines.iter().all(|l| !l.contains("\"cycle\":1")));
}

#[test]
fn repeated_runs_write_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        sim(&["run", &scn("masking_3oo5.scn"), "--trace", p.to_str().unwrap()]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn sweeps_pass() {
    for spec in ["masking_2oo3.sweep.toml", "rendezvous.sweep.toml"] {
        let out = sim(&["sweep", &scn(spec)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        assert!(String::from_utf8_lossy(&out.stdout).contains(" 0 failed"));
    }
}

#[test]
fn usage_errors() {
    assert_eq!(sim(&["run", &scn("fig5.scn"), "--format", "xml"]).status.code(), Some(3));
    assert_eq!(sim(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(sim(&["--help"]).status.code(), Some(0));
}
