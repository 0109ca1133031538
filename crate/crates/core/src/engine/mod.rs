//! Formula evaluation, value snapshots and regression rechecks.

mod eval;
mod value;

pub use eval::Values;
pub use value::{ErrorCode, Value};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, DepGraph, GraphError};
use crate::model::{Cell, CellAddress, CellContent, Workbook};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("workbook declares no outputs; nothing to snapshot")]
    NoDeclaredOutputs,
    #[error("output {cell} evaluates to {code}")]
    OutputIsError { cell: CellAddress, code: ErrorCode },
    #[error("snapshot input {cell} no longer exists in the workbook")]
    MissingInputCell { cell: CellAddress },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

pub fn evaluate(wb: &Workbook) -> Result<Values, EngineError> {
    let g = build_graph(wb)?;
    Ok(evaluate_graph(wb, &g))
}

/// Evaluation over an already-built graph of the same workbook.
pub fn evaluate_graph(wb: &Workbook, g: &DepGraph) -> Values {
    eval::evaluate_graph(wb, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub workbook_name: String,
    pub created_at: String,
    /// Every constant cell at snapshot time.
    pub inputs: BTreeMap<CellAddress, Value>,
    pub outputs: BTreeMap<CellAddress, Value>,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, EngineError> {
        serde_json::from_slice(bytes).map_err(|e| EngineError::Malformed(e.to_string()))
    }
}

/// `<dir>/<stem>.snapshot` next to the workbook file.
pub fn snapshot_path(workbook_path: &Path) -> PathBuf {
    workbook_path.with_extension("snapshot")
}

pub fn snapshot(wb: &Workbook) -> Result<Snapshot, EngineError> {
    snapshot_at(wb, &chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

pub fn snapshot_at(wb: &Workbook, created_at: &str) -> Result<Snapshot, EngineError> {
    if wb.meta.outputs.is_empty() {
        return Err(EngineError::NoDeclaredOutputs);
    }
    let values = evaluate(wb)?;
    let mut outputs = BTreeMap::new();
    for out in &wb.meta.outputs {
        let v = values.get(out).clone();
        if let Value::Error(code) = v {
            return Err(EngineError::OutputIsError {
                cell: out.clone(),
                code,
            });
        }
        outputs.insert(out.clone(), v);
    }
    let inputs = wb
        .cells()
        .filter_map(|(addr, cell)| Value::of_constant(cell).map(|v| (addr, v)))
        .collect();
    Ok(Snapshot {
        workbook_name: wb.name.clone(),
        created_at: created_at.to_string(),
        inputs,
        outputs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            relative: 1e-9,
            absolute: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn same(&self, a: &Value, b: &Value) -> bool {
        match (a, b) {
            (Value::Number(x), Value::Number(y)) => {
                (x - y).abs() <= (self.relative * x.abs().max(y.abs())).max(self.absolute)
            }
            _ => a == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub cell: CellAddress,
    pub expected: Value,
    pub actual: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecheckReport {
    pub matches: Vec<CellAddress>,
    pub mismatches: Vec<Mismatch>,
    /// Outputs that no longer exist in the workbook.
    pub missing: Vec<CellAddress>,
}

impl RecheckReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty() && self.missing.is_empty()
    }
}

pub fn recheck(wb: &Workbook, snap: &Snapshot) -> Result<RecheckReport, EngineError> {
    recheck_with(wb, snap, Tolerance::default())
}

/// Re-applies the snapshot's inputs to a copy of `wb`, re-evaluates and
/// compares every recorded output.
pub fn recheck_with(wb: &Workbook, snap: &Snapshot, tol: Tolerance) -> Result<RecheckReport, EngineError> {
    let mut wb = wb.clone();
    for (addr, expected) in &snap.inputs {
        let Some(cell) = wb.cell(addr) else {
            return Err(EngineError::MissingInputCell { cell: addr.clone() });
        };
        // A cell that has since become a formula is the change under test.
        let Some(current) = Value::of_constant(cell) else {
            continue;
        };
        if current == *expected {
            continue;
        }
        let content = match expected {
            Value::Number(v) => CellContent::Number(*v),
            Value::Text(s) => CellContent::Text(s.clone()),
            Value::Bool(b) => CellContent::Bool(*b),
            other => return Err(EngineError::Malformed(format!("input {addr} holds {other}"))),
        };
        let locked = cell.locked;
        wb.set_cell(addr, Cell {
            content,
            locked,
            format: None,
        });
    }

    let values = evaluate(&wb)?;
    let mut report = RecheckReport::default();
    for (addr, expected) in &snap.outputs {
        if wb.cell(addr).is_none() {
            report.missing.push(addr.clone());
            continue;
        }
        let actual = values.get(addr);
        if tol.same(expected, actual) {
            report.matches.push(addr.clone());
        } else {
            report.mismatches.push(Mismatch {
                cell: addr.clone(),
                expected: expected.clone(),
                actual: actual.clone(),
            });
        }
    }
    Ok(report)
}
