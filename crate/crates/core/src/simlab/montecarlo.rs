use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SeededWorkbook, SimError};
use crate::risk::{residual_after_inspection, Inspectors, RiskParams};

pub const MIN_TRIALS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MonteCarlo {
    pub trials: u64,
    /// Per-formula rate simulated: p times the fixed multiplier, if any.
    pub rate: f64,
    pub p_any_error_hat: f64,
    pub p_chain_correct_hat: f64,
    pub std_error_any: f64,
    pub std_error_chain: f64,
}

fn std_error(p_hat: f64, n: u64) -> f64 {
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Empirical pAnyError over `u` formulas and pChainCorrect over a chain of
/// `l`, one Bernoulli draw per formula. Trial `i` uses its own generator
/// seeded with `seed + i`, so results do not depend on thread scheduling.
pub fn monte_carlo(params: &RiskParams, u: u64, l: u64, trials: u64, seed: u64) -> Result<MonteCarlo, SimError> {
    if trials < MIN_TRIALS {
        return Err(SimError::TooFewTrials {
            min: MIN_TRIALS,
            got: trials,
        });
    }
    params.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
    let rate = (params.p * params.fixed_multiplier.unwrap_or(1.0)).min(1.0);
    let n = u.max(l);
    let (any, chain_ok) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            // first erroneous formula decides both outcomes
            let first_error = (0..n).find(|_| rng.gen_bool(rate));
            let any = first_error.is_some_and(|k| k < u);
            let chain_ok = first_error.is_none_or(|k| k >= l);
            (u64::from(any), u64::from(chain_ok))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let p_any = any as f64 / trials as f64;
    let p_chain = chain_ok as f64 / trials as f64;
    Ok(MonteCarlo {
        trials,
        rate,
        p_any_error_hat: p_any,
        p_chain_correct_hat: p_chain,
        std_error_any: std_error(p_any, trials),
        std_error_chain: std_error(p_chain, trials),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionRun {
    pub initial: u64,
    pub residual_by_round: Vec<u64>,
}

/// One inspection campaign over the seeded defects: every round finds each
/// remaining defect independently with the inspectors' yield.
pub fn detection_experiment(
    seeded: &SeededWorkbook,
    inspectors: Inspectors,
    rounds: u32,
    params: &RiskParams,
    seed: u64,
) -> Result<DetectionRun, SimError> {
    let d = detection_yield(seeded, inspectors, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(thin(seeded.truth.len() as u64, d, rounds, &mut rng))
}

fn detection_yield(seeded: &SeededWorkbook, inspectors: Inspectors, params: &RiskParams) -> Result<f64, SimError> {
    if seeded.truth.is_empty() {
        return Err(SimError::EmptyTruth);
    }
    params
        .detection_yield(inspectors)
        .map_err(|e| SimError::InvalidParams(e.to_string()))
}

fn thin(initial: u64, d: f64, rounds: u32, rng: &mut ChaCha8Rng) -> DetectionRun {
    let mut remaining = initial;
    let residual_by_round = (0..rounds)
        .map(|_| {
            remaining = (0..remaining).filter(|_| !rng.gen_bool(d)).count() as u64;
            remaining
        })
        .collect();
    DetectionRun {
        initial,
        residual_by_round,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionSummary {
    pub trials: u64,
    pub initial: u64,
    pub mean_residual: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Closed-form E·(1−d)^r for the same setting.
    pub expected: Vec<f64>,
}

/// Many independent campaigns (trial `i` seeded with `seed + i`).
pub fn detection_trials(
    seeded: &SeededWorkbook,
    inspectors: Inspectors,
    rounds: u32,
    params: &RiskParams,
    trials: u64,
    seed: u64,
) -> Result<DetectionSummary, SimError> {
    let d = detection_yield(seeded, inspectors, params)?;
    if trials < 2 {
        return Err(SimError::TooFewTrials { min: 2, got: trials });
    }
    let initial = seeded.truth.len() as u64;
    let r = rounds as usize;
    let (sum, sum_sq) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let run = thin(initial, d, rounds, &mut rng);
            let xs: Vec<f64> = run.residual_by_round.iter().map(|&x| x as f64).collect();
            let sq = xs.iter().map(|x| x * x).collect::<Vec<_>>();
            (xs, sq)
        })
        .reduce(
            || (vec![0.0; r], vec![0.0; r]),
            |(mut a, mut b), (x, y)| {
                a.iter_mut().zip(&x).for_each(|(s, v)| *s += v);
                b.iter_mut().zip(&y).for_each(|(s, v)| *s += v);
                (a, b)
            },
        );
    let n = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_error = mean
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| ((sq / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    let expected = residual_after_inspection(initial as f64, inspectors, rounds, params)
        .map_err(|e| SimError::InvalidParams(e.to_string()))?;
    Ok(DetectionSummary {
        trials,
        initial,
        mean_residual: mean,
        std_error,
        expected,
    })
}
