//! Entropy, effective number of options, mutual information, ensembling and
//! accuracy.
//!
//! Entropies are measured in bits. The effective number of options of a
//! distribution is `2^H`, which runs from 1 (one-hot) to K (uniform over K
//! options). The mutual information between the answer and the context is
//! approximated per question as the entropy drop from a system that did not
//! see the context to one that did; it may come out negative because both
//! systems are only approximations of the true distribution.

use crate::error::{Error, Result};
use crate::model::ProbDist;

/// Probabilities below this are treated as exactly zero inside the entropy
/// sum (`0 · log 0 = 0`).
pub const ZERO_PROB_FLOOR: f64 = 1e-300;

/// Tolerance on `sum(probs) == 1` accepted by [`entropy_bits`].
pub const ENTROPY_SUM_TOLERANCE: f64 = 1e-6;

/// Max-stabilised softmax of finite logits.
pub fn softmax(logits: &[f64]) -> Result<ProbDist> {
    if logits.len() < 2 {
        return Err(Error::InvalidLogits {
            question_id: None,
            reason: format!("need at least 2 logits, got {}", logits.len()),
        });
    }
    if let Some(x) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidLogits {
            question_id: None,
            reason: format!("non-finite logit {x}"),
        });
    }
    ProbDist::new(scaled_softmax(logits, 1.0))
}

/// Softmax of `scores * inv_temperature`.
///
/// Scores may contain `-inf` (an option with zero probability) provided at
/// least one entry is finite; such options stay at exactly zero for every
/// temperature.
pub(crate) fn scaled_softmax(scores: &[f64], inv_temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max.is_finite());
    let mut out: Vec<f64> = scores
        .iter()
        .map(|&s| {
            if s == f64::NEG_INFINITY {
                0.0
            } else {
                ((s - max) * inv_temperature).exp()
            }
        })
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Shannon entropy in bits, `-Σ p log₂ p`.
pub fn entropy_bits(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidDistribution(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > ENTROPY_SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {total}"
        )));
    }
    let max_bits = (probs.len() as f64).log2();
    Ok(entropy_unchecked(probs).clamp(0.0, max_bits))
}

pub(crate) fn entropy_unchecked(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p >= ZERO_PROB_FLOOR)
        .map(|&p| p * p.log2())
        .sum();
    // -0.0 for one-hot inputs
    (-h).max(0.0)
}

/// `2^entropy`.
pub fn effective_options(entropy: f64) -> Result<f64> {
    if !entropy.is_finite() || entropy < 0.0 {
        return Err(Error::InvalidEntropy(entropy));
    }
    Ok(entropy.exp2())
}

/// Entropy drop from adding the context: `H(no context) - H(full)`.
pub fn mutual_information(no_context_entropy: f64, full_entropy: f64) -> f64 {
    no_context_entropy - full_entropy
}

/// Arithmetic mean of the member distributions.
///
/// Uses a running mean so that an ensemble of identical members reproduces
/// the member bit for bit.
pub fn ensemble_average(dists: &[ProbDist]) -> Result<ProbDist> {
    let first = dists.first().ok_or(Error::EmptyEnsemble)?;
    let k = first.num_options();
    if let Some(bad) = dists.iter().find(|d| d.num_options() != k) {
        return Err(Error::ShapeMismatch(format!(
            "ensemble members have {} and {} options",
            k,
            bad.num_options()
        )));
    }
    if dists.len() == 1 {
        return Ok(first.clone());
    }
    let mut mean = first.probs().to_vec();
    for (n, d) in dists.iter().enumerate().skip(1) {
        let count = (n + 1) as f64;
        for (m, &p) in mean.iter_mut().zip(d.probs()) {
            *m += (p - *m) / count;
        }
    }
    ProbDist::new(mean)
}

/// Most probable option; ties go to the lowest index.
pub fn predicted_answer(dist: &ProbDist) -> usize {
    dist.argmax()
}

/// Fraction of `(predicted, gold)` pairs that match.
pub fn accuracy(pairs: &[(usize, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation("no predictions to score".into()));
    }
    let hits = pairs.iter().filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> ProbDist {
        ProbDist::new(p.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_uniform() {
        let d = softmax(&[0.0; 4]).unwrap();
        assert_eq!(d.probs(), &[0.25; 4]);
        assert_eq!(d.entropy_bits(), 2.0);
        assert_eq!(d.effective_options(), 4.0);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let d = softmax(&[1000.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(close(d.probs()[0], 1.0, 1e-12));
        assert!(close(d.entropy_bits(), 0.0, 1e-12));
        assert!(close(d.effective_options(), 1.0, 1e-12));
    }

    #[test]
    fn softmax_ln7() {
        // 0.7/0.1 = 7; H and N from a 40-digit mpmath evaluation.
        let d = softmax(&[7f64.ln(), 0.0, 0.0, 0.0]).unwrap();
        for (p, want) in d.probs().iter().zip([0.7, 0.1, 0.1, 0.1]) {
            assert!(close(*p, want, 1e-12));
        }
        assert!(close(d.entropy_bits(), 1.356_779_649_447_039_5, 1e-12));
        assert!(close(d.effective_options(), 2.561_128_517_887_139, 1e-12));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let err = softmax(&[0.0, f64::NAN]).unwrap_err();
        assert_eq!(err.kind(), "InvalidLogits");
        let err = err.for_question("q7");
        assert!(err.to_string().contains("q7"));
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
        assert!(softmax(&[0.0]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_bits(&[0.25; 4]).unwrap(), 2.0);
        assert_eq!(entropy_bits(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(entropy_bits(&[0.5, 0.5, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn entropy_errors() {
        assert!(entropy_bits(&[-0.1, 1.1]).is_err());
        assert!(entropy_bits(&[0.5, 0.4]).is_err());
        assert!(entropy_bits(&[]).is_err());
        // within the looser 1e-6 tolerance
        assert!(entropy_bits(&[0.5, 0.5 + 5e-7]).is_ok());
    }

    #[test]
    fn tiny_probabilities_count_as_zero() {
        let h = entropy_bits(&[1.0, 1e-310]).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn effective_options_examples() {
        assert_eq!(effective_options(2.0).unwrap(), 4.0);
        assert_eq!(effective_options(0.0).unwrap(), 1.0);
        assert!(close(effective_options(1.35678).unwrap(), 2.5611, 1e-4));
        assert!(matches!(effective_options(-0.1), Err(Error::InvalidEntropy(_))));
        assert!(effective_options(f64::NAN).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        assert_eq!(mutual_information(2.0, 0.5), 1.5);
        assert_eq!(mutual_information(1.2, 1.2), 0.0);
        assert!(close(mutual_information(0.8, 1.5), -0.7, 1e-15));
    }

    #[test]
    fn ensemble_examples() {
        let e = ensemble_average(&[dist(&[1.0, 0.0, 0.0, 0.0]), dist(&[0.0, 1.0, 0.0, 0.0])])
            .unwrap();
        assert_eq!(e.probs(), &[0.5, 0.5, 0.0, 0.0]);

        let u = dist(&[0.25; 4]);
        let e = ensemble_average(&[u.clone(), u.clone(), u.clone()]).unwrap();
        assert_eq!(e, u);

        let e = ensemble_average(&[
            dist(&[0.7, 0.1, 0.1, 0.1]),
            dist(&[0.1, 0.7, 0.1, 0.1]),
            dist(&[0.1, 0.1, 0.7, 0.1]),
        ])
        .unwrap();
        for (p, want) in e.probs().iter().zip([0.3, 0.3, 0.3, 0.1]) {
            assert!(close(*p, want, 1e-12));
        }
    }

    #[test]
    fn ensemble_errors() {
        assert!(matches!(ensemble_average(&[]), Err(Error::EmptyEnsemble)));
        let err = ensemble_average(&[dist(&[0.5, 0.5]), dist(&[0.2, 0.3, 0.5])]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(predicted_answer(&dist(&[0.1, 0.6, 0.2, 0.1])), 1);
        assert_eq!(predicted_answer(&dist(&[0.25; 4])), 0);
        assert_eq!(predicted_answer(&dist(&[0.3, 0.3, 0.3, 0.1])), 0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[(0, 0), (1, 1)]).unwrap(), 1.0);
        assert_eq!(accuracy(&[(0, 1), (1, 0)]).unwrap(), 0.0);
        assert_eq!(accuracy(&[(0, 0), (1, 0), (2, 2), (3, 1)]).unwrap(), 0.5);
        assert!(matches!(accuracy(&[]), Err(Error::EmptyEvaluation(_))));
    }

    #[test]
    fn scaled_softmax_keeps_zero_options_at_zero() {
        let p = scaled_softmax(&[0.0, f64::NEG_INFINITY, -1.0], 1e-3);
        assert_eq!(p[1], 0.0);
        let p = scaled_softmax(&[0.0, f64::NEG_INFINITY, -1.0], 1e3);
        assert_eq!(p[1], 0.0);
    }
}
