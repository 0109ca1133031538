use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Finding, Location, RuleId, Severity};
use crate::model::CellAddress;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleConfigError {
    #[error("malformed rule config: {0}")]
    Malformed(String),
    #[error("threshold `{name}` must be positive")]
    NonPositive { name: &'static str },
    #[error("suppression `{entry}`: {reason}")]
    BadSuppression { entry: String, reason: String },
}

/// `Sheet!A1:RULE_ID`, or `*:RULE_ID` for a workbook-level finding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Suppression {
    pub location: Location,
    pub rule: RuleId,
}

impl std::str::FromStr for Suppression {
    type Err = RuleConfigError;

    fn from_str(entry: &str) -> Result<Self, Self::Err> {
        let bad = |reason: String| RuleConfigError::BadSuppression {
            entry: entry.to_string(),
            reason,
        };
        let (loc, rule) = entry
            .rsplit_once(':')
            .ok_or_else(|| bad("expected `Sheet!A1:RULE_ID`".into()))?;
        let rule: RuleId = rule.parse().map_err(bad)?;
        if rule == RuleId::Internal {
            return Err(bad("INTERNAL findings cannot be suppressed".into()));
        }
        let location = if loc == "*" {
            Location::Workbook
        } else {
            Location::Cell(loc.parse::<CellAddress>().map_err(|e| bad(e.to_string()))?)
        };
        Ok(Suppression { location, rule })
    }
}

impl std::fmt::Display for Suppression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.location {
            Location::Workbook => write!(f, "*:{}", self.rule),
            Location::Cell(a) => write!(f, "{a}:{}", self.rule),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RuleConfig {
    pub enabled: BTreeSet<RuleId>,
    pub long_formula_tokens: usize,
    pub long_arc_distance: u64,
    pub dup_literal_min_magnitude: f64,
    pub dup_literal_exclusions: Vec<f64>,
    pub min_run_length_for_hardwire: usize,
    pub severity_overrides: BTreeMap<RuleId, Severity>,
    #[serde(with = "suppression_strings")]
    pub suppressions: BTreeSet<Suppression>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            enabled: RuleId::ALL.into_iter().collect(),
            long_formula_tokens: 10,
            long_arc_distance: 25,
            dup_literal_min_magnitude: 2.0,
            dup_literal_exclusions: vec![0.0, 1.0],
            min_run_length_for_hardwire: 3,
            severity_overrides: BTreeMap::new(),
            suppressions: BTreeSet::new(),
        }
    }
}

impl RuleConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, RuleConfigError> {
        let cfg: RuleConfig =
            serde_json::from_slice(bytes).map_err(|e| RuleConfigError::Malformed(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RuleConfigError> {
        let positive = [
            ("longFormulaTokens", self.long_formula_tokens > 0),
            ("longArcDistance", self.long_arc_distance > 0),
            (
                "dupLiteralMinMagnitude",
                self.dup_literal_min_magnitude.is_finite() && self.dup_literal_min_magnitude > 0.0,
            ),
            ("minRunLengthForHardwire", self.min_run_length_for_hardwire > 0),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, ok)| !ok) {
            return Err(RuleConfigError::NonPositive { name });
        }
        if self.enabled.contains(&RuleId::Internal) || self.severity_overrides.contains_key(&RuleId::Internal) {
            return Err(RuleConfigError::Malformed("INTERNAL is not a configurable rule".into()));
        }
        Ok(())
    }

    pub fn is_enabled(&self, rule: RuleId) -> bool {
        self.enabled.contains(&rule)
    }

    pub(crate) fn is_suppressed(&self, f: &Finding) -> bool {
        f.rule_id != RuleId::Internal
            && self.suppressions.contains(&Suppression {
                location: f.location.clone(),
                rule: f.rule_id,
            })
    }

    pub(crate) fn is_dup_candidate(&self, v: f64) -> bool {
        v.abs() >= self.dup_literal_min_magnitude && !self.dup_literal_exclusions.contains(&v)
    }
}

mod suppression_strings {
    use std::collections::BTreeSet;

    use serde::{Deserialize, Deserializer, Serializer};

    use super::Suppression;

    pub fn serialize<S: Serializer>(set: &BTreeSet<Suppression>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(set.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<Suppression>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|e| e.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}
