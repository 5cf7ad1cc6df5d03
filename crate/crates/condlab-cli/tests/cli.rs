// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs of the `condlab` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_condlab"));
    c.env_remove("CONDLAB_THREADS");
    c
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", stdout(o)))
}

#[test]
fn classify_hyperbolic_scenario() {
    let o = bin().args(["classify", "--replay"]).arg(scenario("wla_hyperbolic.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["verdict"], "WHyperbolic");
    assert_eq!(v["theorem"], "MainComparison");
    for key in ["parameters", "margins", "tail_evidence", "capacity_bound", "replay"] {
        assert!(!v[key].is_null(), "missing {key}");
    }
    let margins = v["margins"].as_array().unwrap();
    assert!(!margins.is_empty() && margins.iter().all(|m| m["satisfied"] == true));
}

#[test]
fn classify_parabolic_scenario() {
    let o = bin().arg("classify").arg(scenario("wla_parabolic.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["verdict"], "WParabolic");
}

#[test]
fn undecided_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    // Euclidean R^2 is parabolic; an upper-side certificate cannot decide.
    std::fs::write(
        &p,
        r#"{"manifold": {"kind": "euclidean", "dim": 2},
            "criterion": {"theorem": "main_comparison", "w": "r", "q": 2, "rho": 1, "side": "upper", "budget": 64}}"#,
    )
    .unwrap();
    let o = bin().arg("classify").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(json(&o)["verdict"], "Undecided");
}

#[test]
fn annulus_capacity() {
    let o = bin().arg("capacity").arg(scenario("annulus.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cap = json(&o)["capacity"]["estimate"]["richardson_extrapolate"].as_f64().unwrap();
    let want = 2.0 * std::f64::consts::PI / 2f64.ln();
    assert!((cap - want).abs() < 1e-3 * want, "{cap}");
}

#[test]
fn verify_example_tables() {
    let o = bin().args(["verify-example", "r6"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().starts_with("claim"));
    assert!(out.contains("PASS") && !out.contains("FAIL"));
    let o = bin().args(["verify-example", "intro-cylinder", "--json"]).output().unwrap();
    let rows = json(&o);
    assert_eq!(rows[0]["computed"], "0.628319");
    assert_eq!(rows[0]["status"], "Pass");
}

#[test]
fn unknown_example_is_an_error() {
    let o = bin().args(["verify-example", "nonexistent"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown example 'nonexistent'"));
}

#[test]
fn schema_errors_name_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"manifold\": {\"kind\": \"euclidean\", \"dim\": 2},\n  \"criterion\": {\"theorem\": \"main_comparison\", \"rho\": 1,\n    \"theta\": \"2*q\"}\n}\n").unwrap();
    let o = bin().arg("classify").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 4") && err.contains("criterion.theta"), "{err}");
}

#[test]
fn report_is_byte_identical_across_runs_and_thread_caps() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (k, threads) in [None, Some("1"), Some("2")].into_iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let mut c = bin();
        c.args(["report", "--replay", "--out"]).arg(&out).arg(scenario("wla_hyperbolic.json"));
        if let Some(t) = threads {
            c.env("CONDLAB_THREADS", t);
        }
        let o = c.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
        let csv = std::fs::read_to_string(out.join("potential.csv")).unwrap();
        assert!(csv.starts_with("r,theta,u\n"));
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn surface_csv_for_submanifold_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["report", "--out"]).arg(dir.path()).arg(scenario("sigma.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("surface.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["u", "v", "x", "y", "z", "quantity"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 24 * 24);
    for r in &rows {
        let x: f64 = r[2].parse().unwrap();
        let y: f64 = r[3].parse().unwrap();
        assert!((x * x - y * y - 1.0).abs() < 1e-9);
    }
}

#[test]
fn bad_thread_cap_is_an_error() {
    let o = bin().env("CONDLAB_THREADS", "zero").args(["verify-example", "r6"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CONDLAB_THREADS"));
}
