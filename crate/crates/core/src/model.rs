//! Domain types shared across the crate.
//!
//! Everything here is an immutable value. Constructors enforce the invariants
//! (option counts, normalisation, finiteness) so downstream code can rely on
//! them without re-checking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;

/// Tolerance on `sum(probs) == 1` for a constructed [`ProbDist`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub context: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
}

impl McqItem {
    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    /// Checks the per-item invariants. Id uniqueness is a dataset-level
    /// property and is checked by the loader.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("id must be non-empty".into());
        }
        if self.options.len() < 2 {
            return Err(format!(
                "item {:?} has {} options, need at least 2",
                self.id,
                self.options.len()
            ));
        }
        if let Some(i) = self.options.iter().position(|o| o.is_empty()) {
            return Err(format!("item {:?} option {i} is empty", self.id));
        }
        Ok(())
    }
}

/// Which parts of an item the answering system was shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputVariant {
    /// Question, options and context.
    Full,
    /// Question and options.
    NoContext,
    /// Options alone.
    OptionsOnly,
    /// Options and context.
    OptionsContext,
}

impl InputVariant {
    /// Row order used by cross-performance tables.
    pub const LADDER: [InputVariant; 4] = [
        InputVariant::OptionsOnly,
        InputVariant::NoContext,
        InputVariant::OptionsContext,
        InputVariant::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InputVariant::Full => "full",
            InputVariant::NoContext => "no_context",
            InputVariant::OptionsOnly => "options_only",
            InputVariant::OptionsContext => "options_context",
        }
    }

    /// Compact label naming the visible fields, e.g. `Q+{O}+C`.
    pub fn label(self) -> &'static str {
        match self {
            InputVariant::Full => "Q+{O}+C",
            InputVariant::NoContext => "Q+{O}",
            InputVariant::OptionsOnly => "{O}",
            InputVariant::OptionsContext => "{O}+C",
        }
    }

    pub fn shows_question(self) -> bool {
        matches!(self, InputVariant::Full | InputVariant::NoContext)
    }

    pub fn shows_context(self) -> bool {
        matches!(self, InputVariant::Full | InputVariant::OptionsContext)
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(InputVariant::Full),
            "no_context" => Ok(InputVariant::NoContext),
            "options_only" => Ok(InputVariant::OptionsOnly),
            "options_context" => Ok(InputVariant::OptionsContext),
            other => Err(Error::InvalidVariant(other.to_owned())),
        }
    }
}

/// Raw option scores produced by one system for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    pub system_id: String,
    pub variant: InputVariant,
    pub seed: i64,
    pub logits: Vec<f64>,
}

/// A normalised distribution over the options of one question, together with
/// its entropy (bits) and effective number of options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbDistRepr", into = "ProbDistRepr")]
pub struct ProbDist {
    probs: Vec<f64>,
    entropy_bits: f64,
    effective_options: f64,
}

#[derive(Serialize, Deserialize)]
struct ProbDistRepr {
    probs: Vec<f64>,
    entropy_bits: f64,
    effective_options: f64,
}

impl ProbDist {
    /// Builds a distribution from probabilities that already sum to one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 options, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidDistribution(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        let max_bits = (probs.len() as f64).log2();
        let entropy_bits = metrics::entropy_unchecked(&probs).clamp(0.0, max_bits);
        Ok(ProbDist {
            effective_options: entropy_bits.exp2(),
            entropy_bits,
            probs,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_options(&self) -> usize {
        self.probs.len()
    }

    pub fn entropy_bits(&self) -> f64 {
        self.entropy_bits
    }

    pub fn effective_options(&self) -> f64 {
        self.effective_options
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the most probable option, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<ProbDistRepr> for ProbDist {
    type Error = Error;

    fn try_from(repr: ProbDistRepr) -> Result<Self> {
        let dist = ProbDist::new(repr.probs)?;
        if dist.entropy_bits != repr.entropy_bits || dist.effective_options != repr.effective_options {
            return Err(Error::InvalidDistribution(
                "stored entropy does not match probabilities".into(),
            ));
        }
        Ok(dist)
    }
}

impl From<ProbDist> for ProbDistRepr {
    fn from(d: ProbDist) -> Self {
        ProbDistRepr {
            probs: d.probs,
            entropy_bits: d.entropy_bits,
            effective_options: d.effective_options,
        }
    }
}

/// Outcome of fitting a temperature for one (system, variant) stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub system_id: String,
    pub variant: InputVariant,
    pub temperature: f64,
    pub accuracy: f64,
    pub mean_max_prob_before: f64,
    pub mean_max_prob_after: f64,
    pub converged: bool,
}

/// Per-question entropies under both systems and the resulting mutual
/// information estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMetrics {
    pub question_id: String,
    pub num_options: usize,
    pub entropy_no_context: f64,
    pub entropy_full: f64,
    pub effective_options_no_context: f64,
    pub effective_options_full: f64,
    pub mutual_information: f64,
    pub correct_no_context: bool,
    pub correct_full: bool,
}

impl QuestionMetrics {
    pub fn new(
        question_id: impl Into<String>,
        gold: usize,
        no_context: &ProbDist,
        full: &ProbDist,
    ) -> Result<Self> {
        if no_context.num_options() != full.num_options() {
            return Err(Error::ShapeMismatch(format!(
                "no-context distribution has {} options, full has {}",
                no_context.num_options(),
                full.num_options()
            )));
        }
        Ok(QuestionMetrics {
            question_id: question_id.into(),
            num_options: full.num_options(),
            entropy_no_context: no_context.entropy_bits(),
            entropy_full: full.entropy_bits(),
            effective_options_no_context: no_context.effective_options(),
            effective_options_full: full.effective_options(),
            mutual_information: metrics::mutual_information(
                no_context.entropy_bits(),
                full.entropy_bits(),
            ),
            correct_no_context: metrics::predicted_answer(no_context) == gold,
            correct_full: metrics::predicted_answer(full) == gold,
        })
    }

    /// Overrides the correctness flags, e.g. with predictions taken from the
    /// untempered distributions.
    pub fn with_correctness(mut self, correct_no_context: bool, correct_full: bool) -> Self {
        self.correct_no_context = correct_no_context;
        self.correct_full = correct_full;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in InputVariant::LADDER {
            assert_eq!(v.as_str().parse::<InputVariant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert!(matches!(
            "noctx".parse::<InputVariant>(),
            Err(Error::InvalidVariant(_))
        ));
    }

    #[test]
    fn item_validation() {
        let mut item = McqItem {
            id: "q".into(),
            context: String::new(),
            question: "?".into(),
            options: vec!["a".into(), "b".into()],
            answer_index: 1,
        };
        assert!(item.validate().is_ok());
        item.options[1].clear();
        assert!(item.validate().is_err());
        item.options = vec!["a".into()];
        assert!(item.validate().is_err());
    }

    #[test]
    fn prob_dist_rejects_bad_input() {
        assert!(ProbDist::new(vec![0.5, 0.4]).is_err());
        assert!(ProbDist::new(vec![1.5, -0.5]).is_err());
        assert!(ProbDist::new(vec![1.0]).is_err());
        assert!(ProbDist::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn prob_dist_effective_options_is_exp2_of_entropy() {
        let d = ProbDist::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        assert_eq!(d.effective_options(), d.entropy_bits().exp2());
    }

    #[test]
    fn prob_dist_serde_round_trip_and_tamper_check() {
        let d = ProbDist::new(vec![0.6, 0.3, 0.1]).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        let back: ProbDist = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        let tampered = json.replace("\"entropy_bits\":", "\"entropy_bits\":0.5,\"x\":");
        assert!(serde_json::from_str::<ProbDist>(&tampered).is_err());
    }

    #[test]
    fn mutual_information_is_exact_difference() {
        let nc = ProbDist::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let full = ProbDist::new(vec![0.9, 0.05, 0.03, 0.02]).unwrap();
        let m = QuestionMetrics::new("q", 0, &nc, &full).unwrap();
        assert_eq!(m.mutual_information, m.entropy_no_context - m.entropy_full);
        assert!(m.correct_full && m.correct_no_context);
    }
}
