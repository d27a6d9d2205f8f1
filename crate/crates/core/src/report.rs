//! The audit report document and its tabular renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{BinRow, CrossRun, FlagSet, MiRankBin};
use crate::model::{CalibrationResult, QuestionMetrics};

pub const SCHEMA_VERSION: u32 = 1;

/// Whether per-question entropies come from tempered or raw ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySource {
    #[default]
    Calibrated,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub tag: String,
    pub num_questions: usize,
    /// Questions dropped for missing predictions (permissive mode only).
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSettings {
    pub standard_system: String,
    pub shortcut_system: String,
    pub entropy_source: EntropySource,
    pub flag_threshold: f64,
    pub mi_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTables {
    pub no_context: Vec<BinRow>,
    pub full: Vec<BinRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub runs: Vec<CrossRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub dataset: DatasetSummary,
    pub settings: AuditSettings,
    pub calibration: Vec<CalibrationResult>,
    pub per_question: Vec<QuestionMetrics>,
    pub bins: BinTables,
    pub mi_curve: Vec<MiRankBin>,
    pub flags: Vec<FlagSet>,
    pub cross_table: CrossSection,
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl AuditReport {
    /// Effective-options histogram for both systems, one row per bin.
    pub fn bins_csv(&self) -> String {
        let rows = self
            .bins
            .no_context
            .iter()
            .zip(&self.bins.full)
            .map(|(nc, full)| {
                vec![
                    nc.bin_low.to_string(),
                    nc.bin_high.to_string(),
                    nc.count.to_string(),
                    opt(nc.accuracy),
                    full.count.to_string(),
                    opt(full.accuracy),
                ]
            });
        csv_string(
            &[
                "bin_low",
                "bin_high",
                "count_no_context",
                "accuracy_no_context",
                "count_full",
                "accuracy_full",
            ],
            rows,
        )
    }

    pub fn mi_curve_csv(&self) -> String {
        let rows = self.mi_curve.iter().map(|b| {
            vec![
                b.rank_bin.to_string(),
                b.first_rank.to_string(),
                b.count.to_string(),
                b.mean_mi.to_string(),
                b.min_mi.to_string(),
                b.max_mi.to_string(),
                b.accuracy_full.to_string(),
                b.accuracy_no_context.to_string(),
            ]
        });
        csv_string(
            &[
                "rank_bin",
                "first_rank",
                "count",
                "mean_mi",
                "min_mi",
                "max_mi",
                "accuracy_full",
                "accuracy_no_context",
            ],
            rows,
        )
    }

    pub fn per_question_csv(&self) -> String {
        let rows = self.per_question.iter().map(|m| {
            vec![
                m.question_id.clone(),
                m.num_options.to_string(),
                m.entropy_no_context.to_string(),
                m.entropy_full.to_string(),
                m.effective_options_no_context.to_string(),
                m.effective_options_full.to_string(),
                m.mutual_information.to_string(),
                m.correct_no_context.to_string(),
                m.correct_full.to_string(),
            ]
        });
        csv_string(
            &[
                "question_id",
                "num_options",
                "entropy_no_context",
                "entropy_full",
                "effective_options_no_context",
                "effective_options_full",
                "mutual_information",
                "correct_no_context",
                "correct_full",
            ],
            rows,
        )
    }

    pub fn calibration_csv(&self) -> String {
        let rows = self.calibration.iter().map(|c| {
            vec![
                c.system_id.clone(),
                c.variant.to_string(),
                c.temperature.to_string(),
                c.accuracy.to_string(),
                c.mean_max_prob_before.to_string(),
                c.mean_max_prob_after.to_string(),
                c.converged.to_string(),
            ]
        });
        csv_string(
            &[
                "system_id",
                "variant",
                "temperature",
                "accuracy",
                "mean_max_prob_before",
                "mean_max_prob_after",
                "converged",
            ],
            rows,
        )
    }

    /// Human-readable summary: calibration, histogram, MI curve and flags.
    pub fn summary_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# Audit of {} ({} questions)\n",
            self.dataset.tag, self.dataset.num_questions
        );
        if !self.dataset.dropped.is_empty() {
            let _ = writeln!(out, "Dropped for missing predictions: {}\n", self.dataset.dropped.len());
        }

        out.push_str("## Calibration\n\n| system | variant | T | accuracy | mean max p (before) | mean max p (after) | converged |\n|---|---|---|---|---|---|---|\n");
        for c in &self.calibration {
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |",
                c.system_id,
                c.variant.label(),
                c.temperature,
                c.accuracy,
                c.mean_max_prob_before,
                c.mean_max_prob_after,
                c.converged
            );
        }

        out.push_str("\n## Effective number of options\n\n| bin | count (no context) | accuracy (no context) | count (full) | accuracy (full) |\n|---|---|---|---|---|\n");
        let acc = |a: Option<f64>| a.map_or_else(|| "--".to_owned(), |v| format!("{v:.3}"));
        let last = self.bins.no_context.len().saturating_sub(1);
        for (i, (nc, full)) in self.bins.no_context.iter().zip(&self.bins.full).enumerate() {
            let close = if i == last { ']' } else { ')' };
            let _ = writeln!(
                out,
                "| [{:.1}, {:.1}{close} | {} | {} | {} | {} |",
                nc.bin_low,
                nc.bin_high,
                nc.count,
                acc(nc.accuracy),
                full.count,
                acc(full.accuracy)
            );
        }

        out.push_str("\n## Accuracy by MI rank\n\n| rank bin | count | mean MI | accuracy (full) | accuracy (no context) |\n|---|---|---|---|---|\n");
        for b in &self.mi_curve {
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {:.3} | {:.3} |",
                b.rank_bin, b.count, b.mean_mi, b.accuracy_full, b.accuracy_no_context
            );
        }

        out.push_str("\n## Flags\n\n");
        for f in &self.flags {
            let _ = writeln!(out, "- `{}`: {} question(s)", f.rule, f.question_ids.len());
            for id in &f.question_ids {
                let _ = writeln!(out, "  - {id}");
            }
        }
        out
    }
}
