use gridaudit_core::diffcheck::{diff, DiffKind};
use gridaudit_core::engine::{recheck, snapshot_at};
use gridaudit_core::graph::{build_graph, chain_stats};
use gridaudit_core::inspect::{plan, PlanConfig};
use gridaudit_core::model::{parse_workbook, serialize_workbook, Cell};
use gridaudit_core::risk::{assess, RiskParams};
use gridaudit_core::rules::{run_rules, RuleConfig, RuleId};

const BOOK: &str = r#"{
  "version": 1,
  "name": "budget_v3_2024-05-01",
  "meta": { "modified": "2024-05-01T08:00:00Z", "outputs": ["Summary!B1"], "protectionEnabled": true },
  "sheets": [
    { "name": "Costs", "cells": {
        "A1": { "v": 120 }, "A2": { "v": 80 }, "A3": { "v": 45.5 },
        "B1": { "f": "=A1*1.2", "locked": true },
        "B2": { "f": "=A2*1.2", "locked": true },
        "B3": { "f": "=A3*1.2", "locked": true } } },
    { "name": "Summary", "cells": {
        "B1": { "f": "=SUM(Costs!B1:B3)", "locked": true } } }
  ]
}"#;

#[test]
fn document_to_report() {
    let wb = parse_workbook(BOOK.as_bytes()).unwrap();
    assert_eq!(parse_workbook(serialize_workbook(&wb).as_bytes()).unwrap(), wb);

    let g = build_graph(&wb).unwrap();
    let stats = chain_stats(&g, &wb.meta.outputs);
    assert_eq!(stats.longest_chain_length, 2);
    assert!(stats.cycles.is_empty());

    let rules = run_rules(&wb, &g, &RuleConfig::default());
    assert!(rules.coverage.is_complete());
    assert_eq!(rules.cross_sheet_ref_count, 1);
    // The 1.2 markup is the same literal in three copies of one formula.
    assert!(rules.findings.iter().all(|f| f.rule_id != RuleId::NumAsText));

    let risk = assess(&wb, &g, &RiskParams::default()).unwrap();
    assert_eq!(risk.u, 2);
    assert!((risk.e - 0.04).abs() < 1e-12);

    let p = plan(&g, &PlanConfig::default()).unwrap();
    assert_eq!(p.modules.iter().map(|m| m.formula_count).sum::<usize>(), 4);
}

#[test]
fn edit_is_caught_by_recheck_and_diff() {
    let wb = parse_workbook(BOOK.as_bytes()).unwrap();
    let snap = snapshot_at(&wb, "2024-05-02T00:00:00Z").unwrap();
    assert!(recheck(&wb, &snap).unwrap().is_clean());

    let mut edited = wb.clone();
    let cell = "Costs!B2".parse().unwrap();
    edited.set_cell(&cell, Cell::number(96.0).locked(true));
    // Same value today, so recheck with today's inputs agrees ...
    assert!(recheck(&edited, &snap).unwrap().is_clean());
    // ... but the diff shows a formula replaced by its value.
    let d = diff(&wb, &edited);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].kind, DiffKind::FormulaToConstant);
}
