//! Error type shared by every stage of the audit pipeline.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid logits{}: {reason}", fmt_question(.question_id))]
    InvalidLogits {
        question_id: Option<String>,
        reason: String,
    },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid entropy {0}: must be a finite, non-negative number of bits")]
    InvalidEntropy(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("nothing to evaluate: {0}")]
    EmptyEvaluation(String),

    #[error("invalid temperature {0}: must be finite and > 0")]
    InvalidTemperature(f64),

    #[error("system cannot be calibrated: every item has temperature-invariant scores")]
    UncalibratableSystem,

    #[error("requested {bins} bins for only {questions} questions")]
    TooManyBins { bins: usize, questions: usize },

    #[error("bin count must be positive")]
    InvalidBinCount,

    #[error("requested {requested} questions but only {available} are available")]
    InsufficientQuestions { requested: usize, available: usize },

    #[error("invalid threshold {threshold}: must lie in (1, {max_options}]")]
    InvalidThreshold { threshold: f64, max_options: usize },

    #[error("duplicate cross-table cell: train={train} eval={eval} variant={variant}")]
    DuplicateCell {
        train: String,
        eval: String,
        variant: String,
    },

    #[error("{}: line {line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid item at line {line}: {message}")]
    InvalidItem { line: usize, message: String },

    #[error("duplicate question id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid label at line {line}: answer_index {answer_index} but only {num_options} options")]
    InvalidLabel {
        line: usize,
        answer_index: usize,
        num_options: usize,
    },

    #[error("dataset {} contains no items", .0.display())]
    EmptyDataset(PathBuf),

    #[error("unknown input variant {0:?}")]
    InvalidVariant(String),

    #[error("duplicate prediction for question {question_id:?} system {system_id:?} variant {variant} seed {seed}")]
    DuplicatePrediction {
        question_id: String,
        system_id: String,
        variant: String,
        seed: i64,
    },

    #[error("{count} predictions reference unknown questions (first: {first:?})")]
    OrphanPrediction { first: String, count: usize },

    #[error("missing predictions for {} question(s): {}", .missing.len(), summarize_ids(.missing))]
    Coverage { missing: Vec<String> },

    #[error("unsupported report schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("unknown dataset format {0:?}")]
    UnknownFormat(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidLogits { .. } => "InvalidLogits",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::InvalidEntropy(_) => "InvalidEntropy",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::EmptyEnsemble => "EmptyEnsemble",
            Error::EmptyEvaluation(_) => "EmptyEvaluation",
            Error::InvalidTemperature(_) => "InvalidTemperature",
            Error::UncalibratableSystem => "UncalibratableSystem",
            Error::TooManyBins { .. } => "TooManyBins",
            Error::InvalidBinCount => "InvalidBinCount",
            Error::InsufficientQuestions { .. } => "InsufficientQuestions",
            Error::InvalidThreshold { .. } => "InvalidThreshold",
            Error::DuplicateCell { .. } => "DuplicateCell",
            Error::Parse { .. } => "ParseError",
            Error::InvalidItem { .. } => "InvalidItem",
            Error::DuplicateId { .. } => "DuplicateId",
            Error::InvalidLabel { .. } => "InvalidLabel",
            Error::EmptyDataset(_) => "EmptyDataset",
            Error::InvalidVariant(_) => "InvalidVariant",
            Error::DuplicatePrediction { .. } => "DuplicatePrediction",
            Error::OrphanPrediction { .. } => "OrphanPrediction",
            Error::Coverage { .. } => "CoverageError",
            Error::Version { .. } => "VersionError",
            Error::UnknownFormat(_) => "UnknownFormat",
            Error::Io { .. } => "IoError",
        }
    }

    /// Process exit code: 2 for coverage failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Coverage { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a question id to an [`Error::InvalidLogits`] that lacks one.
    pub fn for_question(self, id: &str) -> Self {
        match self {
            Error::InvalidLogits {
                question_id: None,
                reason,
            } => Error::InvalidLogits {
                question_id: Some(id.to_owned()),
                reason,
            },
            other => other,
        }
    }
}

fn fmt_question(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" for question {id:?}"),
        None => String::new(),
    }
}

fn summarize_ids(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut out = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", ids.len() - SHOWN));
    }
    out
}
