//! Single-parameter temperature calibration.
//!
//! All scores of a system are divided by one temperature `T` before the
//! softmax. `T` is chosen so that the mean of the per-item maximum
//! probability equals the system's accuracy. Dividing by a positive constant
//! never reorders the scores, so the prediction (and thus the accuracy) is the
//! same at every temperature.
//!
//! The mean maximum probability is continuous and strictly decreasing in `T`
//! as soon as one item has scores that are not all equal, so the temperature
//! is found by bisection (in log-space) over a fixed bracket.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{self, scaled_softmax};
use crate::model::{CalibrationResult, InputVariant, ProbDist};

pub const MIN_TEMPERATURE: f64 = 1e-3;
pub const MAX_TEMPERATURE: f64 = 1e3;
/// A fit is converged when `|mean_max_prob - target| <= GAP_TOLERANCE`.
pub const GAP_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200;

/// `softmax(logits / T)`.
pub fn apply_temperature(logits: &[f64], temperature: f64) -> Result<ProbDist> {
    check_temperature(temperature)?;
    // validates the logits
    metrics::softmax(logits)?;
    ProbDist::new(scaled_softmax(logits, 1.0 / temperature))
}

/// Re-tempers an existing distribution, i.e. `p_k^(1/T)` renormalised.
/// Zero-probability options stay at zero.
pub fn temper(dist: &ProbDist, temperature: f64) -> Result<ProbDist> {
    check_temperature(temperature)?;
    if temperature == 1.0 {
        return Ok(dist.clone());
    }
    ProbDist::new(scaled_softmax(&log_probs(dist), 1.0 / temperature))
}

/// Average over items of the largest option probability.
pub fn mean_max_prob(dists: &[ProbDist]) -> Result<f64> {
    if dists.is_empty() {
        return Err(Error::EmptyEvaluation("no distributions".into()));
    }
    Ok(dists.iter().map(ProbDist::max_prob).sum::<f64>() / dists.len() as f64)
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature.is_finite() && temperature > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(temperature))
    }
}

fn log_probs(dist: &ProbDist) -> Vec<f64> {
    dist.probs()
        .iter()
        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect()
}

/// One item to calibrate on: log-domain option scores and the gold index.
///
/// Scores are raw logits, or log-probabilities of an ensemble mean. `-inf`
/// marks an option with zero probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationItem {
    scores: Vec<f64>,
    gold: usize,
}

impl CalibrationItem {
    pub fn from_logits(logits: Vec<f64>, gold: usize) -> Result<Self> {
        metrics::softmax(&logits)?;
        Self::checked(logits, gold)
    }

    pub fn from_dist(dist: &ProbDist, gold: usize) -> Result<Self> {
        Self::checked(log_probs(dist), gold)
    }

    fn checked(scores: Vec<f64>, gold: usize) -> Result<Self> {
        if gold >= scores.len() {
            return Err(Error::ShapeMismatch(format!(
                "gold index {gold} with {} options",
                scores.len()
            )));
        }
        Ok(CalibrationItem { scores, gold })
    }

    fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = i;
            }
        }
        best
    }

    /// Whether tempering changes this item's distribution at all.
    fn is_temperature_sensitive(&self) -> bool {
        let mut finite = self.scores.iter().filter(|s| s.is_finite());
        match finite.next() {
            Some(first) => finite.any(|s| s != first),
            None => false,
        }
    }

    fn max_prob(&self, inv_temperature: f64) -> f64 {
        scaled_softmax(&self.scores, inv_temperature)
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Mean max probability of the items at temperature `T`. Items are evaluated
/// in parallel and summed in input order.
pub fn mean_max_prob_at(items: &[CalibrationItem], temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    if items.is_empty() {
        return Err(Error::EmptyEvaluation("no calibration items".into()));
    }
    let inv = 1.0 / temperature;
    let maxes: Vec<f64> = items.par_iter().map(|it| it.max_prob(inv)).collect();
    Ok(maxes.iter().sum::<f64>() / items.len() as f64)
}

/// Fits `T` so that mean max probability matches the measured accuracy.
pub fn solve_temperature(
    system_id: &str,
    variant: InputVariant,
    items: &[CalibrationItem],
) -> Result<CalibrationResult> {
    if items.is_empty() {
        return Err(Error::EmptyEvaluation("no calibration items".into()));
    }
    let pairs: Vec<(usize, usize)> = items.iter().map(|it| (it.predicted(), it.gold)).collect();
    let accuracy = metrics::accuracy(&pairs)?;
    solve_temperature_for_target(system_id, variant, items, accuracy)
}

/// Like [`solve_temperature`] but matches an explicit target instead of the
/// measured accuracy. The returned `accuracy` field holds the target.
pub fn solve_temperature_for_target(
    system_id: &str,
    variant: InputVariant,
    items: &[CalibrationItem],
    target: f64,
) -> Result<CalibrationResult> {
    if items.is_empty() {
        return Err(Error::EmptyEvaluation("no calibration items".into()));
    }
    if !items.iter().any(CalibrationItem::is_temperature_sensitive) {
        return Err(Error::UncalibratableSystem);
    }
    let gap = |t: f64| mean_max_prob_at(items, t).map(|m| m - target);

    let (temperature, converged) = if gap(MIN_TEMPERATURE)? <= 0.0 {
        // even the sharpest allowed temperature is not confident enough
        (MIN_TEMPERATURE, false)
    } else if gap(MAX_TEMPERATURE)? >= 0.0 {
        (MAX_TEMPERATURE, false)
    } else {
        let (mut lo, mut hi) = (MIN_TEMPERATURE, MAX_TEMPERATURE);
        let mut mid = (lo * hi).sqrt();
        for _ in 0..MAX_ITERATIONS {
            mid = (lo * hi).sqrt();
            let g = gap(mid)?;
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 <= 4.0 * f64::EPSILON {
                mid = (lo * hi).sqrt();
                break;
            }
        }
        (mid, gap(mid)?.abs() <= GAP_TOLERANCE)
    };

    Ok(CalibrationResult {
        system_id: system_id.to_owned(),
        variant,
        temperature,
        accuracy: target,
        mean_max_prob_before: mean_max_prob_at(items, 1.0)?,
        mean_max_prob_after: mean_max_prob_at(items, temperature)?,
        converged,
    })
}
