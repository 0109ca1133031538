//! Synthetic workbooks, defect seeding and Monte Carlo oracles.
//!
//! Generation and seeding are deterministic for a given `rng_seed`
//! (ChaCha8). Nothing here promises identical streams across versions or
//! implementations; the statistical checks use tolerances.

mod generate;
mod montecarlo;
mod seed;

pub use generate::{generate_clean, MODEL_SHEET, RATES_SHEET};
pub use montecarlo::{
    detection_experiment, detection_trials, monte_carlo, DetectionRun, DetectionSummary, MonteCarlo,
};
pub use seed::{seed_defects, SeededWorkbook, TruthEntry};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::RuleId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid seed spec: {0}")]
    InvalidSpec(String),
    #[error("at least {min} trials are required (got {got})")]
    TooFewTrials { min: u64, got: u64 },
    #[error("seeded truth is empty")]
    EmptyTruth,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    #[default]
    Chain,
    Tree,
    Grid,
}

impl Topology {
    pub const ALL: [Topology; 3] = [Topology::Chain, Topology::Tree, Topology::Grid];

    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Chain => "chain",
            Topology::Tree => "tree",
            Topology::Grid => "grid",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topology::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown topology `{s}` (chain, tree, grid)"))
    }
}

/// One mechanically seedable defect per detector, plus omission errors,
/// which no static rule can see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DefectClass {
    NumAsText,
    Hardwired,
    Jammed,
    DupLiteral,
    LongFormula,
    Omission,
    LongArc,
    XsheetRef,
    OrphanOutput,
    FlowViolation,
    UnprotectedFormula,
    VersionName,
}

impl DefectClass {
    pub const ALL: [DefectClass; 12] = [
        DefectClass::NumAsText,
        DefectClass::Hardwired,
        DefectClass::Jammed,
        DefectClass::DupLiteral,
        DefectClass::LongFormula,
        DefectClass::Omission,
        DefectClass::LongArc,
        DefectClass::XsheetRef,
        DefectClass::OrphanOutput,
        DefectClass::FlowViolation,
        DefectClass::UnprotectedFormula,
        DefectClass::VersionName,
    ];

    /// The rule expected to catch this defect; `None` for omissions.
    pub fn rule(self) -> Option<RuleId> {
        Some(match self {
            DefectClass::NumAsText => RuleId::NumAsText,
            DefectClass::Hardwired => RuleId::Hardwired,
            DefectClass::Jammed => RuleId::Jammed,
            DefectClass::DupLiteral => RuleId::DupLiteral,
            DefectClass::LongFormula => RuleId::LongFormula,
            DefectClass::Omission => return None,
            DefectClass::LongArc => RuleId::LongArc,
            DefectClass::XsheetRef => RuleId::XsheetRef,
            DefectClass::OrphanOutput => RuleId::OrphanOutput,
            DefectClass::FlowViolation => RuleId::FlowViolation,
            DefectClass::UnprotectedFormula => RuleId::UnprotectedFormula,
            DefectClass::VersionName => RuleId::VersionName,
        })
    }

    pub fn for_rule(rule: RuleId) -> Option<DefectClass> {
        DefectClass::ALL.into_iter().find(|c| c.rule() == Some(rule))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DefectClass::Omission => "OMISSION",
            other => other.rule().expect("non-omission classes map to rules").as_str(),
        }
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DefectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DefectClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown defect class `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SeedSpec {
    pub topology: Topology,
    pub formula_count: usize,
    /// Leaf inputs for trees, and the constant count when there are no
    /// formulas; chains and grids size their inputs from `formula_count`.
    pub input_count: usize,
    pub error_rate: f64,
    pub defect_mix: BTreeMap<DefectClass, f64>,
    pub rng_seed: u64,
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec {
            topology: Topology::Chain,
            formula_count: 20,
            input_count: 0,
            error_rate: 0.05,
            defect_mix: SeedSpec::uniform_mix(&[
                DefectClass::NumAsText,
                DefectClass::Hardwired,
                DefectClass::Jammed,
                DefectClass::DupLiteral,
                DefectClass::LongFormula,
            ]),
            rng_seed: 1,
        }
    }
}

impl SeedSpec {
    pub fn uniform_mix(classes: &[DefectClass]) -> BTreeMap<DefectClass, f64> {
        let w = 1.0 / classes.len() as f64;
        classes.iter().map(|&c| (c, w)).collect()
    }

    pub fn single_class(class: DefectClass) -> BTreeMap<DefectClass, f64> {
        BTreeMap::from([(class, 1.0)])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(SimError::InvalidSpec(format!("errorRate {} is not a probability", self.error_rate)));
        }
        if self.defect_mix.values().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SimError::InvalidSpec("defect weights must be non-negative".into()));
        }
        let total: f64 = self.defect_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidSpec(format!("defect weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SimError> {
        let spec: SeedSpec = serde_json::from_slice(bytes).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}
