//! Cell-error-rate risk model.
//!
//! Formula errors are treated as independent Bernoulli events, one per
//! unique formula. Every figure here follows from that assumption and the
//! rates in [`RiskParams`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{count_unique, token_count};
use crate::graph::{chain_stats, DepGraph};
use crate::model::{CellAddress, Workbook};
use crate::rules::{Finding, FindingClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("team size must be at least 1 (got {0})")]
    InvalidTeamSize(u32),
    #[error("invalid risk parameter: {0}")]
    InvalidParams(String),
}

/// Who inspects: a team of known size, or the generic per-round yield
/// reported for inspections in general.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum Inspectors {
    Team(u32),
    #[default]
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RiskParams {
    pub p: f64,
    pub p_audit: f64,
    pub s: f64,
    pub m: f64,
    /// Overrides the token-derived multiplier when set.
    pub fixed_multiplier: Option<f64>,
    /// Per-round yield by team size.
    pub team_yields: BTreeMap<u32, f64>,
    pub generic_yield: f64,
    pub residual_band: (f64, f64),
    pub rounds: u32,
    pub inspectors: Inspectors,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            p: 0.02,
            p_audit: 0.052,
            s: 0.15,
            m: 0.05,
            fixed_multiplier: None,
            team_yields: BTreeMap::from([(1, 0.63), (3, 0.83)]),
            generic_yield: 0.60,
            residual_band: (0.001, 0.003),
            rounds: 3,
            inspectors: Inspectors::Generic,
        }
    }
}

pub const MAX_MULTIPLIER: f64 = 4.0;
const TOKENS_PER_MULTIPLIER_STEP: f64 = 6.0;

/// clamp(meanTokens / 6, 1, 4).
pub fn complexity_multiplier(mean_tokens: f64) -> f64 {
    (mean_tokens / TOKENS_PER_MULTIPLIER_STEP).clamp(1.0, MAX_MULTIPLIER)
}

pub fn p_any_error(rate: f64, u: u64) -> f64 {
    1.0 - p_none(rate, u)
}

pub fn p_chain_correct(rate: f64, l: u64) -> f64 {
    p_none(rate, l)
}

/// Probability of at least one serious error among `l` formulas.
pub fn p_material(rate: f64, s: f64, l: u64) -> f64 {
    1.0 - p_none(rate * s, l)
}

fn p_none(rate: f64, n: u64) -> f64 {
    let rate = rate.clamp(0.0, 1.0);
    // powi takes i32; large exponents go through exp/ln1p for accuracy.
    match i32::try_from(n) {
        Ok(k) => (1.0 - rate).powi(k),
        Err(_) => (n as f64 * (-rate).ln_1p()).exp(),
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<(), RiskError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(RiskError::InvalidParams(format!("{name} = {v} is not a probability")))
            }
        };
        unit("p", self.p)?;
        unit("pAudit", self.p_audit)?;
        unit("s", self.s)?;
        unit("m", self.m)?;
        unit("genericYield", self.generic_yield)?;
        unit("residualBand.0", self.residual_band.0)?;
        unit("residualBand.1", self.residual_band.1)?;
        if self.residual_band.0 > self.residual_band.1 {
            return Err(RiskError::InvalidParams("residual band is reversed".into()));
        }
        for (&k, &d) in &self.team_yields {
            unit(&format!("teamYields.{k}"), d)?;
            if k < 1 {
                return Err(RiskError::InvalidTeamSize(k));
            }
        }
        if self.team_yields.is_empty() {
            return Err(RiskError::InvalidParams("team yield table is empty".into()));
        }
        let ds: Vec<f64> = self.team_yields.values().copied().collect();
        if ds.windows(2).any(|w| w[1] < w[0]) {
            return Err(RiskError::InvalidParams("team yields must not decrease with team size".into()));
        }
        if let Some(m) = self.fixed_multiplier {
            if !(m.is_finite() && m >= 1.0) {
                return Err(RiskError::InvalidParams(format!("multiplier {m} is below 1")));
            }
        }
        if let Inspectors::Team(0) = self.inspectors {
            return Err(RiskError::InvalidTeamSize(0));
        }
        Ok(())
    }

    /// Per-round yield for a team of `k`: table lookup, linear between known
    /// sizes, clamped to the table's ends outside them.
    pub fn team_yield(&self, k: u32) -> Result<f64, RiskError> {
        if k < 1 {
            return Err(RiskError::InvalidTeamSize(k));
        }
        let (&k_lo, &d_lo) = self.team_yields.iter().next().expect("validated non-empty");
        let (&k_hi, &d_hi) = self.team_yields.iter().next_back().expect("validated non-empty");
        if k <= k_lo {
            return Ok(d_lo);
        }
        if k >= k_hi {
            return Ok(d_hi);
        }
        let below = self.team_yields.range(..=k).next_back().expect("k > k_lo");
        let above = self.team_yields.range(k..).next().expect("k < k_hi");
        if below.0 == above.0 {
            return Ok(*below.1);
        }
        let t = f64::from(k - below.0) / f64::from(above.0 - below.0);
        Ok(below.1 + t * (above.1 - below.1))
    }

    pub fn detection_yield(&self, who: Inspectors) -> Result<f64, RiskError> {
        match who {
            Inspectors::Team(k) => self.team_yield(k),
            Inspectors::Generic => Ok(self.generic_yield),
        }
    }
}

/// residual_r = E·(1−d)^r for r = 1..=rounds.
pub fn residual_after_inspection(
    e: f64,
    who: Inspectors,
    rounds: u32,
    params: &RiskParams,
) -> Result<Vec<f64>, RiskError> {
    let d = params.detection_yield(who)?;
    Ok((1..=rounds).map(|r| e * (1.0 - d).powi(r as i32)).collect())
}

/// Smallest number of rounds whose residual fraction per formula falls to
/// the top of the residual band or below; `None` if yield is zero.
pub fn rounds_to_band(rate: f64, d: f64, band_top: f64) -> Option<u32> {
    if rate <= band_top {
        return Some(0);
    }
    if d <= 0.0 {
        return None;
    }
    (1..=64u32).find(|&r| rate * (1.0 - d).powi(r as i32) <= band_top)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ScoreWeights {
    pub size: f64,
    pub complexity: f64,
    pub chain: f64,
    pub cross_sheet: f64,
    pub fraud: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            size: 10.0,
            complexity: 3.0,
            chain: 2.0,
            cross_sheet: 1.0,
            fraud: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreInputs {
    pub unique_formulas: u64,
    pub complexity_multiplier: f64,
    pub max_chain: u64,
    pub cross_sheet_refs: u64,
    pub has_fraud_indicator: bool,
}

/// Size dominates by construction: the other terms are bounded or grow
/// with smaller weights.
pub fn risk_score(i: &ScoreInputs, w: &ScoreWeights) -> f64 {
    let log = |x: u64| (1.0 + x as f64).log10();
    w.size * log(i.unique_formulas)
        + w.complexity * i.complexity_multiplier.clamp(1.0, MAX_MULTIPLIER)
        + w.chain * log(i.max_chain)
        + w.cross_sheet * log(i.cross_sheet_refs)
        + w.fraud * f64::from(u8::from(i.has_fraud_indicator))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutputRisk {
    pub output: CellAddress,
    #[serde(rename = "L")]
    pub l: u64,
    pub p_chain_correct: f64,
    pub p_material: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RiskReport {
    #[serde(rename = "U")]
    pub u: u64,
    pub mean_token_count: f64,
    pub complexity_multiplier: f64,
    /// p · multiplier, capped at 1.
    pub effective_rate: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub p_any_error: f64,
    pub per_output: Vec<OutputRisk>,
    pub detection_yield: f64,
    pub residual_after_rounds: Vec<f64>,
    pub rounds_to_residual_band: Option<u32>,
    pub risk_score: f64,
    pub score_inputs: ScoreInputs,
    pub params: RiskParams,
    pub notes: Vec<String>,
}

pub fn assess(wb: &Workbook, g: &DepGraph, params: &RiskParams) -> Result<RiskReport, RiskError> {
    assess_with_findings(wb, g, params, &[], &ScoreWeights::default())
}

pub fn assess_with_findings(
    wb: &Workbook,
    g: &DepGraph,
    params: &RiskParams,
    findings: &[Finding],
    weights: &ScoreWeights,
) -> Result<RiskReport, RiskError> {
    params.validate()?;
    let formulas = g.formulas();
    let u = count_unique(formulas) as u64;
    let mean_tokens = if formulas.is_empty() {
        0.0
    } else {
        formulas.iter().map(|f| token_count(&f.root)).sum::<usize>() as f64 / formulas.len() as f64
    };
    let multiplier = params.fixed_multiplier.unwrap_or_else(|| complexity_multiplier(mean_tokens));
    let rate = (params.p * multiplier).min(1.0);
    let e = rate * u as f64;

    let mut notes = vec![
        "Formula errors are assumed independent (one Bernoulli trial per unique formula); \
         correlated errors would make these figures optimistic."
            .to_string(),
        "pMaterial composes the base rate with the serious-error fraction over each output's \
         precedent closure; it is a modelling construction, not an observed rate."
            .to_string(),
    ];
    let stats = chain_stats(g, &wb.meta.outputs);
    if wb.meta.outputs.is_empty() {
        notes.push("No declared outputs: per-output figures are empty.".to_string());
        log::warn!("workbook `{}` declares no outputs", wb.name);
    }
    let per_output: Vec<OutputRisk> = stats
        .closures
        .iter()
        .map(|c| {
            let l = c.size as u64;
            OutputRisk {
                output: c.output.clone(),
                l,
                p_chain_correct: p_chain_correct(rate, l),
                p_material: p_material(rate, params.s, l),
            }
        })
        .collect();

    let d = params.detection_yield(params.inspectors)?;
    let residuals = residual_after_inspection(e, params.inspectors, params.rounds, params)?;
    // Longest output chain; without outputs, the longest chain anywhere.
    let max_l = per_output
        .iter()
        .map(|o| o.l)
        .max()
        .unwrap_or(stats.longest_chain_length as u64);
    let score_inputs = ScoreInputs {
        unique_formulas: u,
        complexity_multiplier: multiplier,
        max_chain: max_l,
        cross_sheet_refs: formulas
            .iter()
            .map(|f| f.refs().iter().filter(|r| r.is_cross_sheet(&f.host)).count() as u64)
            .sum(),
        has_fraud_indicator: findings.iter().any(|f| f.class == FindingClass::FraudIndicator),
    };

    Ok(RiskReport {
        u,
        mean_token_count: mean_tokens,
        complexity_multiplier: multiplier,
        effective_rate: rate,
        e,
        p_any_error: p_any_error(rate, u),
        per_output,
        detection_yield: d,
        residual_after_rounds: residuals,
        rounds_to_residual_band: rounds_to_band(rate, d, params.residual_band.1),
        risk_score: risk_score(&score_inputs, weights),
        score_inputs,
        params: params.clone(),
        notes,
    })
}
