use std::path::Path;

use anyhow::{bail, Context, Result};
use gridaudit_core::engine::Tolerance;
use gridaudit_core::inspect::PlanConfig;
use gridaudit_core::risk::{RiskParams, ScoreWeights};
use gridaudit_core::rules::RuleConfig;
use serde::{Deserialize, Serialize};

/// The tool's configuration document; every section is optional.
///
/// ```json
/// { "rules": { "longFormulaTokens": 12, "suppressions": ["Model!B4:JAMMED"] },
///   "risk": { "p": 0.052 },
///   "plan": { "targetModuleSize": 120 },
///   "scoreWeights": { "fraud": 8 },
///   "recheck": { "relative": 1e-6 } }
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ToolConfig {
    pub rules: RuleConfig,
    pub risk: RiskParams,
    pub plan: PlanConfig,
    pub score_weights: ScoreWeights,
    pub recheck: RecheckConfig,
}

/// Numeric tolerance for comparing re-evaluated outputs with a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RecheckConfig {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for RecheckConfig {
    fn default() -> Self {
        let t = Tolerance::default();
        RecheckConfig {
            relative: t.relative,
            absolute: t.absolute,
        }
    }
}

impl RecheckConfig {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            relative: self.relative,
            absolute: self.absolute,
        }
    }
}

impl ToolConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: ToolConfig = serde_json::from_slice(bytes).context("config is not a valid document")?;
        cfg.rules.validate()?;
        cfg.risk.validate()?;
        cfg.plan.validate()?;
        let r = cfg.recheck;
        if !(r.relative.is_finite() && r.relative >= 0.0 && r.absolute.is_finite() && r.absolute >= 0.0) {
            bail!("recheck tolerances must be finite and non-negative");
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(ToolConfig::default()),
            Some(p) => {
                let bytes = std::fs::read(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Self::from_json(&bytes).with_context(|| format!("in config {}", p.display()))
            }
        }
    }
}
