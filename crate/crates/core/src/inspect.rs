//! Group code-inspection planning and reconciliation of inspector findings.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::token_count;
use crate::graph::DepGraph;
use crate::model::CellAddress;
use crate::risk::{rounds_to_band, RiskParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InspectError {
    #[error("invalid plan config: {0}")]
    InvalidConfig(String),
    #[error("no sessions to reconcile")]
    NoSessions,
    #[error("session from {inspector} is for module {found}, expected {expected}")]
    ModuleMismatch {
        expected: String,
        found: String,
        inspector: String,
    },
    #[error("session from {inspector} reports {cell}, which is outside module {module}")]
    CellOutsideModule {
        inspector: String,
        cell: CellAddress,
        module: String,
    },
    #[error("session from {inspector} has non-positive duration {minutes}")]
    InvalidDuration { inspector: String, minutes: f64 },
    #[error("seeded truth is empty")]
    EmptyTruth,
    #[error("malformed session file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PlanConfig {
    pub target_module_size: usize,
    /// Cells per hour.
    pub rate_cap: f64,
    pub team_size: u32,
    pub rounds: u32,
    pub long_formula_tokens: usize,
    /// Extra effective cells per token over `long_formula_tokens`.
    pub long_formula_factor: f64,
    pub session_cap_minutes: f64,
    /// Permit teams smaller than three.
    pub allow_small_team: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            target_module_size: 150,
            rate_cap: 100.0,
            team_size: 3,
            rounds: 3,
            long_formula_tokens: 10,
            long_formula_factor: 0.5,
            session_cap_minutes: 120.0,
            allow_small_team: false,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), InspectError> {
        let bad = |m: &str| Err(InspectError::InvalidConfig(m.to_string()));
        if self.target_module_size == 0 {
            return bad("targetModuleSize must be positive");
        }
        if !(self.rate_cap.is_finite() && self.rate_cap > 0.0) {
            return bad("rateCap must be positive");
        }
        if !(self.session_cap_minutes.is_finite() && self.session_cap_minutes > 0.0) {
            return bad("sessionCapMinutes must be positive");
        }
        if !(self.long_formula_factor.is_finite() && self.long_formula_factor >= 0.0) {
            return bad("longFormulaFactor must be non-negative");
        }
        if self.team_size == 0 || (self.team_size < 3 && !self.allow_small_team) {
            return bad("teamSize must be at least 3 (set allowSmallTeam to override)");
        }
        Ok(())
    }

    /// 1 + factor·max(0, tokens − threshold).
    pub fn effective_cells(&self, tokens: usize) -> f64 {
        1.0 + self.long_formula_factor * tokens.saturating_sub(self.long_formula_tokens) as f64
    }

    pub fn minutes(&self, effective_cells: f64) -> f64 {
        60.0 * effective_cells / self.rate_cap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Module {
    pub id: String,
    pub sheet: String,
    /// Formula cells, row-major.
    pub cells: Vec<CellAddress>,
    pub formula_count: usize,
    pub effective_cells: f64,
    pub estimated_minutes: f64,
    /// A single formula whose own budget is over the session cap. It gets a
    /// module to itself and is reported rather than hidden.
    pub exceeds_session_cap: bool,
}

impl Module {
    pub fn contains(&self, cell: &CellAddress) -> bool {
        self.cells.contains(cell)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InspectionPlan {
    pub modules: Vec<Module>,
    pub team_size: u32,
    pub rate_cap: f64,
    pub session_cap_minutes: f64,
    pub rounds_recommended: u32,
    pub total_minutes: f64,
}

impl InspectionPlan {
    pub fn module(&self, id: &str) -> Option<&Module> {
        self.modules.iter().find(|m| m.id == id)
    }
}

/// Splits formula cells into row-major runs per sheet, each at most the
/// target size and within the session budget.
pub fn plan(g: &DepGraph, cfg: &PlanConfig) -> Result<InspectionPlan, InspectError> {
    cfg.validate()?;
    let mut modules: Vec<Module> = Vec::new();
    let mut current: Option<Module> = None;

    let close = |m: Module, modules: &mut Vec<Module>| {
        let mut m = m;
        m.id = format!("M{}", modules.len() + 1);
        modules.push(m);
    };

    for ast in g.formulas() {
        let eff = cfg.effective_cells(token_count(&ast.root));
        let sheet = ast.host.sheet();
        if let Some(m) = current.take() {
            let fits = m.sheet == sheet
                && m.formula_count < cfg.target_module_size
                && cfg.minutes(m.effective_cells + eff) <= cfg.session_cap_minutes;
            if fits {
                let mut m = m;
                m.cells.push(ast.host.clone());
                m.formula_count += 1;
                m.effective_cells += eff;
                m.estimated_minutes = cfg.minutes(m.effective_cells);
                current = Some(m);
                continue;
            }
            close(m, &mut modules);
        }
        current = Some(Module {
            id: String::new(),
            sheet: sheet.to_string(),
            cells: vec![ast.host.clone()],
            formula_count: 1,
            effective_cells: eff,
            estimated_minutes: cfg.minutes(eff),
            exceeds_session_cap: cfg.minutes(eff) > cfg.session_cap_minutes,
        });
    }
    if let Some(m) = current {
        close(m, &mut modules);
    }

    // Enough rounds to bring the residual per formula into the target band.
    let risk = RiskParams::default();
    let d = risk.team_yield(cfg.team_size).map_err(|e| InspectError::InvalidConfig(e.to_string()))?;
    let needed = rounds_to_band(risk.p, d, risk.residual_band.1).unwrap_or(cfg.rounds);

    Ok(InspectionPlan {
        total_minutes: modules.iter().map(|m| m.estimated_minutes).sum(),
        modules,
        team_size: cfg.team_size,
        rate_cap: cfg.rate_cap,
        session_cap_minutes: cfg.session_cap_minutes,
        rounds_recommended: cfg.rounds.max(needed),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionItem {
    pub cell: CellAddress,
    #[serde(default)]
    pub note: String,
    pub suspected_class: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionFindings {
    pub inspector_id: String,
    pub module_id: String,
    pub items: Vec<SessionItem>,
    pub duration_minutes: f64,
}

impl SessionFindings {
    pub fn from_json(bytes: &[u8]) -> Result<Self, InspectError> {
        serde_json::from_slice(bytes).map_err(|e| InspectError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session serializes");
        s.push('\n');
        s
    }
}

/// `<workbook>.<moduleId>.<inspectorId>.session`
pub fn session_file_name(workbook: &str, module_id: &str, inspector_id: &str) -> String {
    format!("{workbook}.{module_id}.{inspector_id}.session")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UnionItem {
    pub cell: CellAddress,
    pub suspected_class: String,
    pub found_by: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RateCheck {
    pub inspector_id: String,
    /// Effective cells per hour actually achieved.
    pub implied_rate: f64,
    pub hasty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Reconciliation {
    pub module_id: String,
    pub union_items: Vec<UnionItem>,
    pub per_inspector_counts: BTreeMap<String, usize>,
    /// Items found by both inspectors of each pair.
    pub overlap: BTreeMap<String, BTreeMap<String, usize>>,
    pub rate_checks: Vec<RateCheck>,
}

impl Reconciliation {
    pub fn union_keys(&self) -> BTreeSet<(CellAddress, String)> {
        self.union_items
            .iter()
            .map(|i| (i.cell.clone(), i.suspected_class.clone()))
            .collect()
    }
}

/// A session faster than this multiple of the rate cap is flagged hasty.
pub const HASTY_FACTOR: f64 = 1.5;

pub fn reconcile(
    sessions: &[SessionFindings],
    module: &Module,
    cfg: &PlanConfig,
) -> Result<Reconciliation, InspectError> {
    if sessions.is_empty() {
        return Err(InspectError::NoSessions);
    }
    let mut keys_by_inspector: BTreeMap<String, BTreeSet<(CellAddress, String)>> = BTreeMap::new();
    let mut union: BTreeMap<(CellAddress, String), UnionItem> = BTreeMap::new();
    let mut rate_checks = Vec::new();

    for s in sessions {
        if s.module_id != module.id {
            return Err(InspectError::ModuleMismatch {
                expected: module.id.clone(),
                found: s.module_id.clone(),
                inspector: s.inspector_id.clone(),
            });
        }
        if !(s.duration_minutes.is_finite() && s.duration_minutes > 0.0) {
            return Err(InspectError::InvalidDuration {
                inspector: s.inspector_id.clone(),
                minutes: s.duration_minutes,
            });
        }
        let keys = keys_by_inspector.entry(s.inspector_id.clone()).or_default();
        for item in &s.items {
            if !module.contains(&item.cell) {
                return Err(InspectError::CellOutsideModule {
                    inspector: s.inspector_id.clone(),
                    cell: item.cell.clone(),
                    module: module.id.clone(),
                });
            }
            let key = (item.cell.clone(), item.suspected_class.clone());
            keys.insert(key.clone());
            let entry = union.entry(key).or_insert_with(|| UnionItem {
                cell: item.cell.clone(),
                suspected_class: item.suspected_class.clone(),
                found_by: Vec::new(),
                notes: Vec::new(),
            });
            if !entry.found_by.contains(&s.inspector_id) {
                entry.found_by.push(s.inspector_id.clone());
            }
            if !item.note.is_empty() && !entry.notes.contains(&item.note) {
                entry.notes.push(item.note.clone());
            }
        }
        let implied_rate = module.effective_cells * 60.0 / s.duration_minutes;
        rate_checks.push(RateCheck {
            inspector_id: s.inspector_id.clone(),
            implied_rate,
            hasty: implied_rate > cfg.rate_cap * HASTY_FACTOR,
        });
    }

    let mut overlap: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let names: Vec<&String> = keys_by_inspector.keys().collect();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let n = keys_by_inspector[*a].intersection(&keys_by_inspector[*b]).count();
            overlap.entry((*a).clone()).or_default().insert((*b).clone(), n);
            overlap.entry((*b).clone()).or_default().insert((*a).clone(), n);
        }
    }

    let order: HashMap<&CellAddress, usize> = module.cells.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut union_items: Vec<UnionItem> = union.into_values().collect();
    union_items.sort_by(|x, y| {
        order[&x.cell]
            .cmp(&order[&y.cell])
            .then_with(|| x.suspected_class.cmp(&y.suspected_class))
    });

    Ok(Reconciliation {
        module_id: module.id.clone(),
        per_inspector_counts: keys_by_inspector.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
        union_items,
        overlap,
        rate_checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct YieldReport {
    pub detected: Vec<CellAddress>,
    pub missed: Vec<CellAddress>,
    pub yield_fraction: f64,
}

/// Cell-level yield of the reconciled union against seeded truth.
pub fn yield_report(
    found: &BTreeSet<CellAddress>,
    truth: &BTreeSet<CellAddress>,
) -> Result<YieldReport, InspectError> {
    if truth.is_empty() {
        return Err(InspectError::EmptyTruth);
    }
    let (detected, missed): (Vec<CellAddress>, Vec<CellAddress>) =
        truth.iter().cloned().partition(|c| found.contains(c));
    Ok(YieldReport {
        yield_fraction: detected.len() as f64 / truth.len() as f64,
        detected,
        missed,
    })
}
