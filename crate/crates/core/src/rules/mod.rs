//! The detector suite. Every enabled rule visits every cell; the coverage
//! counters prove it, so a partial pass can never look like a clean one.

mod checks;
mod config;
mod context;

pub use config::{RuleConfig, RuleConfigError, Suppression};

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::graph::DepGraph;
use crate::model::{Cell, CellAddress, Workbook};
use context::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RuleId {
    NumAsText,
    Hardwired,
    Jammed,
    DupLiteral,
    LongFormula,
    LongArc,
    XsheetRef,
    OrphanOutput,
    FlowViolation,
    UnprotectedFormula,
    VersionName,
    /// A rule that crashed on a cell. Never configurable.
    Internal,
}

impl RuleId {
    /// The registered detectors, in reporting order.
    pub const ALL: [RuleId; 11] = [
        RuleId::NumAsText,
        RuleId::Hardwired,
        RuleId::Jammed,
        RuleId::DupLiteral,
        RuleId::LongFormula,
        RuleId::LongArc,
        RuleId::XsheetRef,
        RuleId::OrphanOutput,
        RuleId::FlowViolation,
        RuleId::UnprotectedFormula,
        RuleId::VersionName,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::NumAsText => "NUM_AS_TEXT",
            RuleId::Hardwired => "HARDWIRED",
            RuleId::Jammed => "JAMMED",
            RuleId::DupLiteral => "DUP_LITERAL",
            RuleId::LongFormula => "LONG_FORMULA",
            RuleId::LongArc => "LONG_ARC",
            RuleId::XsheetRef => "XSHEET_REF",
            RuleId::OrphanOutput => "ORPHAN_OUTPUT",
            RuleId::FlowViolation => "FLOW_VIOLATION",
            RuleId::UnprotectedFormula => "UNPROTECTED_FORMULA",
            RuleId::VersionName => "VERSION_NAME",
            RuleId::Internal => "INTERNAL",
        }
    }

    pub fn class(self) -> FindingClass {
        match self {
            RuleId::NumAsText | RuleId::Hardwired => FindingClass::FraudIndicator,
            RuleId::UnprotectedFormula | RuleId::VersionName | RuleId::Internal => FindingClass::ControlGap,
            _ => FindingClass::HonestError,
        }
    }

    pub fn default_severity(self) -> Severity {
        match self {
            RuleId::NumAsText | RuleId::Hardwired | RuleId::Internal => Severity::Error,
            RuleId::XsheetRef | RuleId::FlowViolation | RuleId::VersionName => Severity::Info,
            _ => Severity::Warning,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleId::ALL
            .into_iter()
            .chain([RuleId::Internal])
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown rule `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "info" => Ok(Severity::Info),
            "warning" => Ok(Severity::Warning),
            "error" => Ok(Severity::Error),
            _ => Err(format!("unknown severity `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingClass {
    HonestError,
    FraudIndicator,
    ControlGap,
}

impl FindingClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingClass::HonestError => "honest-error",
            FindingClass::FraudIndicator => "fraud-indicator",
            FindingClass::ControlGap => "control-gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    Workbook,
    Cell(CellAddress),
}

impl Location {
    pub fn cell(&self) -> Option<&CellAddress> {
        match self {
            Location::Cell(a) => Some(a),
            Location::Workbook => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Workbook => f.write_str("workbook"),
            Location::Cell(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for Location {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Location {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "workbook" {
            return Ok(Location::Workbook);
        }
        s.parse().map(Location::Cell).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Finding {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub class: FindingClass,
    pub location: Location,
    pub message: String,
    pub evidence: BTreeMap<String, serde_json::Value>,
}

impl Finding {
    pub(crate) fn new(rule: RuleId, location: Location, message: impl Into<String>) -> Self {
        Finding {
            rule_id: rule,
            severity: rule.default_severity(),
            class: rule.class(),
            location,
            message: message.into(),
            evidence: BTreeMap::new(),
        }
    }

    pub(crate) fn at(rule: RuleId, cell: &CellAddress, message: impl Into<String>) -> Self {
        Finding::new(rule, Location::Cell(cell.clone()), message)
    }

    pub(crate) fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.evidence.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Coverage {
    /// Cells each rule had to examine.
    pub cell_count: usize,
    /// Cells actually examined, per enabled rule.
    pub examined: BTreeMap<RuleId, usize>,
    pub total_examined: usize,
}

impl Coverage {
    /// Rules that examined fewer cells than were applicable.
    pub fn short_rules(&self) -> Vec<RuleId> {
        self.examined
            .iter()
            .filter(|(_, &n)| n < self.cell_count)
            .map(|(&r, _)| r)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.short_rules().is_empty() && self.total_examined == self.examined.len() * self.cell_count
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleReport {
    pub findings: Vec<Finding>,
    pub suppressed_count: usize,
    pub coverage: Coverage,
    /// Workbook-wide count of references into other sheets.
    pub cross_sheet_ref_count: usize,
}

/// A detector. `check_cell` is called once for every cell of the workbook;
/// workbook-level facts are reported from `check_workbook`.
pub(crate) trait Rule: Sync {
    fn id(&self) -> RuleId;
    fn check_cell(&self, ctx: &Context<'_>, addr: &CellAddress, cell: &Cell, out: &mut Vec<Finding>);
    fn check_workbook(&self, _ctx: &Context<'_>, _out: &mut Vec<Finding>) {}
}

pub fn run_rules(wb: &Workbook, g: &DepGraph, cfg: &RuleConfig) -> RuleReport {
    let ctx = Context::new(wb, g, cfg);
    let rules: Vec<&dyn Rule> = checks::registry()
        .into_iter()
        .filter(|r| cfg.is_enabled(r.id()))
        .collect();
    let cells: Vec<(CellAddress, &Cell)> = wb.cells().collect();

    let per_rule: Vec<(RuleId, usize, Vec<Finding>)> = rules
        .par_iter()
        .map(|rule| {
            let mut out = Vec::new();
            let mut examined = 0;
            for (addr, cell) in &cells {
                examined += 1;
                guarded(rule.id(), Location::Cell(addr.clone()), &mut out, |out| {
                    rule.check_cell(&ctx, addr, cell, out)
                });
            }
            guarded(rule.id(), Location::Workbook, &mut out, |out| rule.check_workbook(&ctx, out));
            (rule.id(), examined, out)
        })
        .collect();

    let mut report = RuleReport {
        coverage: Coverage {
            cell_count: cells.len(),
            ..Coverage::default()
        },
        cross_sheet_ref_count: ctx.cross_sheet_ref_count(),
        ..RuleReport::default()
    };
    for (id, examined, findings) in per_rule {
        report.coverage.examined.insert(id, examined);
        report.coverage.total_examined += examined;
        for mut f in findings {
            if cfg.is_suppressed(&f) {
                report.suppressed_count += 1;
                continue;
            }
            if let Some(&sev) = cfg.severity_overrides.get(&f.rule_id) {
                f.severity = sev;
            }
            report.findings.push(f);
        }
    }
    sort_findings(wb, &mut report.findings);
    report
}

/// Sheet order, row, column, rule id; workbook-level findings first.
pub fn sort_findings(wb: &Workbook, findings: &mut [Finding]) {
    findings.sort_by(|a, b| {
        let key = |f: &Finding| match &f.location {
            Location::Workbook => (0, (0, 0, 0)),
            Location::Cell(c) => (1, wb.order_key(c)),
        };
        key(a)
            .cmp(&key(b))
            .then(a.rule_id.cmp(&b.rule_id))
            .then_with(|| a.message.cmp(&b.message))
    });
}

fn guarded(rule: RuleId, loc: Location, out: &mut Vec<Finding>, f: impl FnOnce(&mut Vec<Finding>)) {
    let mut local = Vec::new();
    match catch_unwind(AssertUnwindSafe(|| f(&mut local))) {
        Ok(()) => out.append(&mut local),
        Err(payload) => {
            let why = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            out.push(
                Finding::new(RuleId::Internal, loc, format!("rule {rule} crashed: {why}"))
                    .with("rule", rule.as_str()),
            );
        }
    }
}
