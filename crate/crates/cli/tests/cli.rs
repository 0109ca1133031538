use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridaudit::report::AuditReport;
use serde_json::Value as Json;

const TS: &str = "2024-06-01T00:00:00Z";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gridaudit"));
    c.env_remove("GRIDAUDIT_CONFIG");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

/// Compares against tests/golden/<name>; `GRIDAUDIT_BLESS=1` rewrites it.
fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("GRIDAUDIT_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

/// One sheet whose `n` formulas are pairwise distinct under copy-translation.
fn distinct_formulas(dir: &Path, n: usize) -> PathBuf {
    let cells: serde_json::Map<String, Json> = (1..=n)
        .map(|r| (format!("A{r}"), serde_json::json!({ "f": format!("={r}+1"), "locked": true })))
        .collect();
    let doc = serde_json::json!({
        "version": 1,
        "name": "distinct_v1_2024-01-01",
        "meta": { "modified": "2024-01-01T00:00:00Z", "outputs": [], "protectionEnabled": true },
        "sheets": [{ "name": "S", "cells": cells }],
    });
    let path = dir.join("distinct.json");
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    path
}

#[test]
fn audit_clean_exits_zero() {
    let o = run(&["audit", fixture("clean.json").to_str().unwrap(), "--fixed-timestamp", TS]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("findings: 0 (0 error, 0 warning, 0 info)"));
}

#[test]
fn audit_num_as_text_exits_one() {
    let o = run(&["audit", fixture("fraud.json").to_str().unwrap(), "--fixed-timestamp", TS]);
    assert_eq!(code(&o), 1);
    let text = stdout(&o);
    assert!(text.contains("findings: 1 (1 error, 0 warning, 0 info)"), "{text}");
    assert!(text.contains("NUM_AS_TEXT         Data!A3"));
}

#[test]
fn audit_missing_file_exits_two() {
    let o = run(&["audit", "/nonexistent/book.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read workbook"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["audit"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["audit", fixture("clean.json").to_str().unwrap(), "--fail-on", "fatal"])), 2);
}

#[test]
fn fail_on_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let wb = dir.path().join("unversioned.json");
    let text = std::fs::read_to_string(fixture("clean.json")).unwrap().replace("_v2_2024-03-01", "");
    std::fs::write(&wb, text).unwrap();
    // Only an info-level VERSION_NAME finding.
    assert_eq!(code(&run(&["audit", wb.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["audit", wb.to_str().unwrap(), "--fail-on", "info"])), 1);
}

#[test]
fn golden_human_audit() {
    let o = run(&["audit", fixture("fraud.json").to_str().unwrap(), "--fixed-timestamp", TS]);
    golden("audit_fraud.txt", &stdout(&o));
}

#[test]
fn golden_machine_audit() {
    let o = run(&[
        "audit",
        fixture("fraud.json").to_str().unwrap(),
        "--fixed-timestamp",
        TS,
        "--format",
        "machine",
    ]);
    assert_eq!(code(&o), 1);
    golden("audit_fraud.json", &stdout(&o));
}

#[test]
fn golden_is_deterministic() {
    let wb = fixture("fraud.json");
    let args = ["audit", wb.to_str().unwrap(), "--fixed-timestamp", TS, "--format", "machine"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn machine_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(&[
        "audit",
        fixture("fraud.json").to_str().unwrap(),
        "--format",
        "machine",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    // With --output the document goes to the file and stdout keeps the text.
    assert!(stdout(&o).starts_with("gridaudit "));
    let bytes = std::fs::read(&out).unwrap();
    let report = AuditReport::from_json(&bytes).unwrap();
    assert_eq!(report.findings.len(), 1);
    assert_eq!(report.findings[0].evidence["understatement"], serde_json::json!(300));
    assert_eq!(report.to_json().as_bytes(), &bytes[..]);
    assert_eq!(AuditReport::from_json(report.to_json().as_bytes()).unwrap(), report);
}

#[test]
fn generated_timestamp_is_current_without_flag() {
    let o = run(&["audit", fixture("clean.json").to_str().unwrap(), "--format", "machine"]);
    let report = AuditReport::from_json(&o.stdout).unwrap();
    let year: i32 = report.timestamps.generated_at[..4].parse().unwrap();
    assert!(year >= 2024, "{}", report.timestamps.generated_at);
    assert_eq!(report.timestamps.workbook_modified, "2024-03-01T12:00:00Z");
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{ "rules": { "suppressions": ["Data!A3:NUM_AS_TEXT"] } }"#).unwrap();
    let o = bin()
        .args(["audit", fixture("fraud.json").to_str().unwrap()])
        .env("GRIDAUDIT_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("1 suppressed"));

    // --config wins over the environment.
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "{}").unwrap();
    let o = bin()
        .args(["audit", fixture("fraud.json").to_str().unwrap(), "--config", empty.to_str().unwrap()])
        .env("GRIDAUDIT_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    for bad in ["{ not json", r#"{ "bogus": 1 }"#, r#"{ "risk": { "p": 2.0 } }"#] {
        std::fs::write(&cfg, bad).unwrap();
        let o = run(&["audit", fixture("clean.json").to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "config {bad}");
    }
}

#[test]
fn risk_expected_errors() {
    let dir = tempfile::tempdir().unwrap();
    let wb = distinct_formulas(dir.path(), 1000);
    let p = wb.to_str().unwrap();
    let o = run(&["risk", p]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("U=1000 p=0.02 multiplier=1 rate=0.02 E=20 "), "{}", stdout(&o));

    let o = run(&["risk", p, "--p", "0.052"]);
    assert!(stdout(&o).contains(" E=52 "), "{}", stdout(&o));

    let o = run(&["risk", p, "--rounds", "3"]);
    assert!(stdout(&o).contains("residual r1=8 r2=3.2 r3=1.28"), "{}", stdout(&o));

    let o = run(&["risk", p, "--team-size", "3", "--rounds", "1", "--format", "machine"]);
    let doc: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["detectionYield"], serde_json::json!(0.83));
    assert_eq!(doc["residualAfterRounds"].as_array().unwrap().len(), 1);
}

#[test]
fn recheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let wb = dir.path().join("book.json");
    std::fs::copy(fixture("clean.json"), &wb).unwrap();
    let p = wb.to_str().unwrap();
    assert_eq!(code(&run(&["snapshot", p, "--fixed-timestamp", TS])), 0);
    assert!(dir.path().join("book.snapshot").exists());
    assert_eq!(code(&run(&["recheck", p])), 0);

    let text = std::fs::read_to_string(&wb).unwrap().replace("=SUM(A1:A3)", "=SUM(A1:A2)");
    std::fs::write(&wb, text).unwrap();
    let o = run(&["recheck", p]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("MISMATCH Data!A4: expected 600 actual 300"), "{out}");

    assert_eq!(code(&run(&["recheck", p, "--snapshot", "/nonexistent.snapshot"])), 2);

    // A loose enough tolerance accepts the change.
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{ "recheck": { "relative": 0.6 } }"#).unwrap();
    assert_eq!(code(&run(&["recheck", p, "--config", cfg.to_str().unwrap()])), 0);
}

#[test]
fn mc_near_closed_form() {
    let o = run(&["mc", "--p", "0.02", "--U", "100", "--trials", "100000", "--format", "machine"]);
    assert_eq!(code(&o), 0);
    let doc: Json = serde_json::from_slice(&o.stdout).unwrap();
    let est = doc["estimate"]["pAnyErrorHat"].as_f64().unwrap();
    assert!((est - 0.8674).abs() <= 0.004, "estimate {est}");
    let closed = doc["closedForm"]["pAnyError"].as_f64().unwrap();
    assert!((closed - (1.0 - 0.98f64.powi(100))).abs() < 1e-12);
    // Lower-case alias.
    assert_eq!(code(&run(&["mc", "--u", "10", "--trials", "1000"])), 0);
    assert_eq!(code(&run(&["mc", "--U", "10", "--trials", "10"])), 2);
}

#[test]
fn diff_and_threeway() {
    let (clean, fraud) = (fixture("clean.json"), fixture("fraud.json"));
    let (c, f) = (clean.to_str().unwrap(), fraud.to_str().unwrap());
    assert_eq!(code(&run(&["diff", c, c])), 0);
    let o = run(&["diff", c, f]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("valueChanged      Data!A3: 300 -> \"300\""), "{}", stdout(&o));
    assert_eq!(code(&run(&["threeway", c, c, c])), 0);
    let o = run(&["threeway", c, c, f]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("0 agreeing, 1 conflicting"));
    assert_eq!(code(&run(&["threeway", c, f, f])), 0);
}

#[test]
fn seed_plan_and_reconcile() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "seed", "--topology", "grid", "--formulas", "30", "--p", "0.3", "--mix", "JAMMED=1", "--seed", "7", "--name",
        "g", "--out-dir", d,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let wb = dir.path().join("g.json");
    let truth = dir.path().join("g.truth");
    let entries: Json = serde_json::from_slice(&std::fs::read(&truth).unwrap()).unwrap();
    let cells: Vec<String> = entries["truth"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["location"].as_str().unwrap().to_string())
        .collect();
    assert!(!cells.is_empty());

    let o = run(&["plan", wb.to_str().unwrap(), "--format", "machine"]);
    assert_eq!(code(&o), 0);
    let plan: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["modules"][0]["id"], "M1");

    // Two inspectors on M1: one finds every seeded cell, one finds none.
    let items: Vec<Json> = cells
        .iter()
        .map(|c| serde_json::json!({ "cell": c, "suspectedClass": "JAMMED" }))
        .collect();
    let s1 = dir.path().join("s1.session");
    let s2 = dir.path().join("s2.session");
    let session = |who: &str, items: &[Json]| {
        serde_json::json!({ "inspectorId": who, "moduleId": "M1", "items": items, "durationMinutes": 30.0 }).to_string()
    };
    std::fs::write(&s1, session("ann", &items)).unwrap();
    std::fs::write(&s2, session("bo", &[])).unwrap();
    let o = run(&[
        "reconcile",
        wb.to_str().unwrap(),
        s1.to_str().unwrap(),
        s2.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--format",
        "machine",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["yield"]["yieldFraction"], serde_json::json!(1.0));

    // A 30-formula module inspected in one minute is hasty.
    std::fs::write(
        &s2,
        serde_json::json!({ "inspectorId": "bo", "moduleId": "M1", "items": [], "durationMinutes": 1.0 }).to_string(),
    )
    .unwrap();
    assert_eq!(code(&run(&["reconcile", wb.to_str().unwrap(), s2.to_str().unwrap()])), 1);

    // Clean generation writes no truth file and audits clean.
    let o = run(&["seed", "--clean", "--formulas", "12", "--name", "c", "--out-dir", d]);
    assert_eq!(code(&o), 0);
    assert!(!dir.path().join("c.truth").exists());
    assert_eq!(code(&run(&["audit", dir.path().join("c.json").to_str().unwrap()])), 0);

    assert_eq!(code(&run(&["seed", "--mix", "NOPE=1", "--out-dir", d])), 2);
    assert_eq!(code(&run(&["seed", "--mix", "JAMMED=0.5", "--out-dir", d])), 2);
}

#[test]
fn plan_over_cap_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let wb = distinct_formulas(dir.path(), 3);
    assert_eq!(code(&run(&["plan", wb.to_str().unwrap()])), 0);
    // Weighting every token heavily pushes each single formula past the session cap.
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{ "plan": { "longFormulaTokens": 1, "longFormulaFactor": 500 } }"#).unwrap();
    let o = run(&["plan", wb.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout(&o).matches("OVER SESSION CAP").count(), 3, "{}", stdout(&o));
}

#[test]
fn graph_dump_lists_edges() {
    let o = run(&["graph-dump", fixture("clean.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "Data!A1\tData!A4\nData!A2\tData!A4\nData!A3\tData!A4\n");
}

#[test]
fn no_network_dependencies() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let lock = std::fs::read_to_string(root.join("Cargo.lock")).unwrap();
    for pkg in ["reqwest", "hyper", "tokio", "ureq", "curl", "mio", "socket2", "h2", "rustls", "native-tls"] {
        assert!(!lock.contains(&format!("name = \"{pkg}\"")), "{pkg} is in the dependency tree");
    }
    let mut stack = vec![root.join("crates")];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                if !path.ends_with("tests") {
                    stack.push(path);
                }
            } else if path.extension().is_some_and(|e| e == "rs") {
                let src = std::fs::read_to_string(&path).unwrap();
                for needle in ["std::net", "TcpStream", "UdpSocket"] {
                    assert!(!src.contains(needle), "{} uses {needle}", path.display());
                }
            }
        }
    }
}
