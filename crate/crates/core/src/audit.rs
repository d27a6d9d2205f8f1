//! End-to-end audit: join, ensemble, calibrate both systems, compute
//! per-question metrics and every aggregate that goes into the report.

use rayon::prelude::*;

use crate::analysis::{self, CrossRun, EntropyStream};
use crate::calibration::{self, CalibrationItem};
use crate::error::{Error, Result};
use crate::ingestion::{self, CoveragePolicy, JoinedSet, StreamKey};
use crate::metrics;
use crate::model::{CalibrationResult, InputVariant, McqItem, PredictionRecord, ProbDist, QuestionMetrics};
use crate::report::{
    AuditReport, AuditSettings, BinTables, CrossSection, DatasetSummary, EntropySource, SCHEMA_VERSION,
};

#[derive(Debug, Clone)]
pub struct AuditConfig {
    /// System whose `full` predictions are audited.
    pub standard_system: String,
    /// System whose `no_context` predictions are audited.
    pub shortcut_system: String,
    pub dataset_tag: String,
    pub flag_threshold: f64,
    pub mi_bins: usize,
    pub entropy_source: EntropySource,
    pub coverage: CoveragePolicy,
}

impl AuditConfig {
    pub fn new(system: impl Into<String>, dataset_tag: impl Into<String>) -> Self {
        let system = system.into();
        AuditConfig {
            shortcut_system: system.clone(),
            standard_system: system,
            dataset_tag: dataset_tag.into(),
            flag_threshold: analysis::DEFAULT_FLAG_THRESHOLD,
            mi_bins: analysis::DEFAULT_MI_BINS,
            entropy_source: EntropySource::Calibrated,
            coverage: CoveragePolicy::Strict,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub report: AuditReport,
    /// Items that made it through the join, in dataset order.
    pub items: Vec<McqItem>,
    pub warnings: Vec<String>,
}

/// Fits one stream's temperature on its ensemble outputs.
///
/// A stream whose scores are temperature-invariant on every item is left at
/// `T = 1` (any temperature gives the same distributions) and reported as not
/// converged.
pub fn calibrate_stream(
    stream: &StreamKey,
    ensembles: &[(&ProbDist, usize)],
) -> Result<(CalibrationResult, Option<String>)> {
    let items = ensembles
        .iter()
        .map(|(d, gold)| CalibrationItem::from_dist(d, *gold))
        .collect::<Result<Vec<_>>>()?;
    match calibration::solve_temperature(&stream.system_id, stream.variant, &items) {
        Ok(r) => Ok((r, None)),
        Err(Error::UncalibratableSystem) => {
            let pairs: Vec<(usize, usize)> = ensembles
                .iter()
                .map(|(d, gold)| (metrics::predicted_answer(d), *gold))
                .collect();
            let mmp = calibration::mean_max_prob_at(&items, 1.0)?;
            let result = CalibrationResult {
                system_id: stream.system_id.clone(),
                variant: stream.variant,
                temperature: 1.0,
                accuracy: metrics::accuracy(&pairs)?,
                mean_max_prob_before: mmp,
                mean_max_prob_after: mmp,
                converged: false,
            };
            let warning = format!(
                "{} ({}) has temperature-invariant outputs on every question; left at T=1",
                stream.system_id, stream.variant
            );
            Ok((result, Some(warning)))
        }
        Err(e) => Err(e),
    }
}

pub fn run_audit(
    items: &[McqItem],
    predictions: &[PredictionRecord],
    config: &AuditConfig,
) -> Result<AuditOutcome> {
    let streams = [
        StreamKey::new(config.shortcut_system.clone(), InputVariant::NoContext),
        StreamKey::new(config.standard_system.clone(), InputVariant::Full),
    ];
    let joined = ingestion::join(items, predictions, &streams, config.coverage)?;
    audit_joined(&joined, config)
}

/// Runs the audit on an already-joined set whose streams are
/// `[no-context stream, full stream]`.
pub fn audit_joined(joined: &JoinedSet, config: &AuditConfig) -> Result<AuditOutcome> {
    let mut warnings = Vec::new();
    if !joined.dropped.is_empty() {
        warnings.push(format!(
            "dropped {} question(s) with missing predictions",
            joined.dropped.len()
        ));
    }
    if joined.questions.is_empty() {
        return Err(Error::EmptyEvaluation("no questions left after join".into()));
    }

    let mut calibration = Vec::with_capacity(2);
    for (s, stream) in joined.streams.iter().enumerate() {
        let ensembles: Vec<(&ProbDist, usize)> = joined
            .questions
            .iter()
            .map(|q| (&q.ensembles[s], q.item.answer_index))
            .collect();
        let (result, warning) = calibrate_stream(stream, &ensembles)?;
        warnings.extend(warning);
        calibration.push(result);
    }
    let (t_nc, t_full) = (calibration[0].temperature, calibration[1].temperature);

    let per_question: Vec<QuestionMetrics> = joined
        .questions
        .par_iter()
        .map(|q| {
            let (raw_nc, raw_full) = (&q.ensembles[0], &q.ensembles[1]);
            let gold = q.item.answer_index;
            let (nc, full) = match config.entropy_source {
                EntropySource::Calibrated => (
                    calibration::temper(raw_nc, t_nc)?,
                    calibration::temper(raw_full, t_full)?,
                ),
                EntropySource::Raw => (raw_nc.clone(), raw_full.clone()),
            };
            Ok(QuestionMetrics::new(q.item.id.clone(), gold, &nc, &full)?.with_correctness(
                metrics::predicted_answer(raw_nc) == gold,
                metrics::predicted_answer(raw_full) == gold,
            ))
        })
        .collect::<Result<_>>()?;

    let n = per_question.len();
    let mi_bins = if config.mi_bins > n {
        warnings.push(format!(
            "only {n} questions; using {n} MI rank bins instead of {}",
            config.mi_bins
        ));
        n
    } else {
        config.mi_bins
    };

    let accuracy = |f: fn(&QuestionMetrics) -> bool| {
        per_question.iter().filter(|m| f(m)).count() as f64 / n as f64 * 100.0
    };
    let runs = vec![
        CrossRun {
            train: config.shortcut_system.clone(),
            eval: config.dataset_tag.clone(),
            variant: InputVariant::NoContext,
            accuracy: accuracy(|m| m.correct_no_context),
        },
        CrossRun {
            train: config.standard_system.clone(),
            eval: config.dataset_tag.clone(),
            variant: InputVariant::Full,
            accuracy: accuracy(|m| m.correct_full),
        },
    ];

    let report = AuditReport {
        schema_version: SCHEMA_VERSION,
        dataset: DatasetSummary {
            tag: config.dataset_tag.clone(),
            num_questions: n,
            dropped: joined.dropped.clone(),
        },
        settings: AuditSettings {
            standard_system: config.standard_system.clone(),
            shortcut_system: config.shortcut_system.clone(),
            entropy_source: config.entropy_source,
            flag_threshold: config.flag_threshold,
            mi_bins,
        },
        calibration,
        bins: BinTables {
            no_context: analysis::bin_effective_options(&per_question, EntropyStream::NoContext)?,
            full: analysis::bin_effective_options(&per_question, EntropyStream::Full)?,
        },
        mi_curve: analysis::mi_rank_curve(&per_question, mi_bins)?,
        flags: vec![analysis::flag_low_entropy(&per_question, config.flag_threshold)?],
        cross_table: CrossSection { runs },
        per_question,
    };

    Ok(AuditOutcome {
        report,
        items: joined.questions.iter().map(|q| q.item.clone()).collect(),
        warnings,
    })
}
