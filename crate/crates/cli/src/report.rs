use std::fmt::Write as _;

use gridaudit_core::graph::ChainStats;
use gridaudit_core::risk::RiskReport;
use gridaudit_core::rules::{Coverage, Finding, Severity};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Timestamps {
    pub generated_at: String,
    pub workbook_modified: String,
}

/// The machine-readable audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AuditReport {
    pub tool_version: String,
    pub workbook_name: String,
    pub findings: Vec<Finding>,
    pub risk_report: RiskReport,
    pub chain_stats: ChainStats,
    pub coverage: Coverage,
    pub suppressed_count: usize,
    pub timestamps: Timestamps,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }

    pub fn count(&self, severity: Severity) -> usize {
        self.findings.iter().filter(|f| f.severity == severity).count()
    }

    pub fn human(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "gridaudit {} audit of {}", self.tool_version, self.workbook_name);
        let _ = writeln!(out, "generated {}", self.timestamps.generated_at);
        let _ = writeln!(
            out,
            "findings: {} ({} error, {} warning, {} info), {} suppressed",
            self.findings.len(),
            self.count(Severity::Error),
            self.count(Severity::Warning),
            self.count(Severity::Info),
            self.suppressed_count
        );
        for f in &self.findings {
            let _ = writeln!(out, "  {:<7} {:<19} {}: {}", f.severity.as_str(), f.rule_id.as_str(), f.location, f.message);
        }
        out.push_str(&risk_lines(&self.risk_report));
        let c = &self.chain_stats;
        let _ = writeln!(out, "longest chain: {} formula(s), {} cycle(s)", c.longest_chain_length, c.cycles.len());
        let cov = &self.coverage;
        let _ = writeln!(
            out,
            "coverage: {} rule(s) x {} cell(s), {} examinations{}",
            cov.examined.len(),
            cov.cell_count,
            cov.total_examined,
            if cov.is_complete() { "" } else { " (INCOMPLETE)" }
        );
        out
    }
}

/// Compact decimal: six significant places after the point, zeros trimmed.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    };
    if s.contains('e') || !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn risk_lines(r: &RiskReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "risk: U={} p={} multiplier={} rate={} E={} pAnyError={}",
        r.u,
        num(r.params.p),
        num(r.complexity_multiplier),
        num(r.effective_rate),
        num(r.e),
        num(r.p_any_error)
    );
    for o in &r.per_output {
        let _ = writeln!(
            out,
            "  output {}: L={} pChainCorrect={} pMaterial={}",
            o.output,
            o.l,
            num(o.p_chain_correct),
            num(o.p_material)
        );
    }
    let residuals: Vec<String> = r
        .residual_after_rounds
        .iter()
        .enumerate()
        .map(|(i, e)| format!("r{}={}", i + 1, num(*e)))
        .collect();
    let _ = writeln!(
        out,
        "inspection: yield {} per round; residual {}",
        num(r.detection_yield),
        if residuals.is_empty() { "-".to_string() } else { residuals.join(" ") }
    );
    let band = match r.rounds_to_residual_band {
        Some(n) => format!("{n} round(s)"),
        None => "never".to_string(),
    };
    let _ = writeln!(
        out,
        "  residual band {}..{} reached after {band}",
        num(r.params.residual_band.0),
        num(r.params.residual_band.1)
    );
    let _ = writeln!(out, "risk score: {}", num(r.risk_score));
    for n in &r.notes {
        let _ = writeln!(out, "  note: {n}");
    }
    out
}
