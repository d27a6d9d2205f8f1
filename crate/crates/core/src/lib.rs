//! Audits multiple-choice reading-comprehension questions for answerability
//! without the passage.
//!
//! The pipeline takes per-option scores from a standard system (shown the
//! question, options and context) and a shortcut system (context withheld),
//! averages seeds into ensembles, calibrates each system with a single
//! temperature, and reports per-question entropy, effective number of
//! options and the entropy drop due to the context.
//!
//! ```
//! use mcq_audit::metrics;
//!
//! let d = metrics::softmax(&[0.0, 0.0, 0.0, 0.0]).unwrap();
//! assert_eq!(d.effective_options(), 4.0);
//! ```

pub mod analysis;
pub mod audit;
pub mod baseline;
pub mod calibration;
pub mod convert;
pub mod error;
pub mod ingestion;
pub mod metrics;
pub mod model;
pub mod report;
pub mod toy;
pub mod worksheet;

pub use error::{Error, Result};
pub use model::{CalibrationResult, InputVariant, McqItem, PredictionRecord, ProbDist, QuestionMetrics};
