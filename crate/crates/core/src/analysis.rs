//! Dataset-level aggregates over [`QuestionMetrics`]: effective-options
//! histograms, MI rank curves, extreme-subset selection, flagging and the
//! cross-performance pivot.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InputVariant, QuestionMetrics};

pub const BIN_WIDTH: f64 = 0.2;
pub const DEFAULT_FLAG_THRESHOLD: f64 = 2.0;
pub const DEFAULT_MI_BINS: usize = 50;

/// Which system's entropy a histogram is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyStream {
    NoContext,
    Full,
}

impl EntropyStream {
    fn effective_options(self, m: &QuestionMetrics) -> f64 {
        match self {
            EntropyStream::NoContext => m.effective_options_no_context,
            EntropyStream::Full => m.effective_options_full,
        }
    }

    fn correct(self, m: &QuestionMetrics) -> bool {
        match self {
            EntropyStream::NoContext => m.correct_no_context,
            EntropyStream::Full => m.correct_full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub accuracy: Option<f64>,
}

/// An ordered set of question ids selected by one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSet {
    pub rule: String,
    /// Cut-off used by the rule; for extreme subsets the boundary key value,
    /// `None` when the subset is empty.
    pub threshold: Option<f64>,
    pub question_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRankBin {
    pub rank_bin: usize,
    /// Rank (0-based, ascending MI) of the first question in the bin.
    pub first_rank: usize,
    pub count: usize,
    pub accuracy_full: f64,
    pub accuracy_no_context: f64,
    pub mean_mi: f64,
    pub min_mi: f64,
    pub max_mi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremeKey {
    EntropyNoContext,
    MutualInformation,
}

impl ExtremeKey {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtremeKey::EntropyNoContext => "entropy_no_context",
            ExtremeKey::MutualInformation => "mutual_information",
        }
    }

    fn value(self, m: &QuestionMetrics) -> f64 {
        match self {
            ExtremeKey::EntropyNoContext => m.entropy_no_context,
            ExtremeKey::MutualInformation => m.mutual_information,
        }
    }
}

fn max_options(metrics: &[QuestionMetrics]) -> Result<usize> {
    metrics
        .iter()
        .map(|m| m.num_options)
        .max()
        .ok_or_else(|| Error::EmptyEvaluation("no question metrics".into()))
}

/// `1 + 0.2 i`, rounded once so edges print as short decimals.
fn bin_edge(i: usize) -> f64 {
    (5 + i) as f64 / 5.0
}

/// Histogram of effective number of options in bins of width 0.2 over
/// `[1, K]`, with the accuracy of the selected system inside each bin.
///
/// Bins are half-open except the last, which also holds `N == K`.
pub fn bin_effective_options(
    metrics: &[QuestionMetrics],
    stream: EntropyStream,
) -> Result<Vec<BinRow>> {
    let k = max_options(metrics)?;
    let num_bins = ((k - 1) as f64 / BIN_WIDTH).round() as usize;
    let mut counts = vec![0usize; num_bins];
    let mut hits = vec![0usize; num_bins];

    for m in metrics {
        let n = stream.effective_options(m);
        let mut idx = (((n - 1.0) / BIN_WIDTH).floor().max(0.0) as usize).min(num_bins - 1);
        while idx + 1 < num_bins && n >= bin_edge(idx + 1) {
            idx += 1;
        }
        while idx > 0 && n < bin_edge(idx) {
            idx -= 1;
        }
        counts[idx] += 1;
        if stream.correct(m) {
            hits[idx] += 1;
        }
    }

    Ok((0..num_bins)
        .map(|i| BinRow {
            bin_low: bin_edge(i),
            bin_high: if i + 1 == num_bins { k as f64 } else { bin_edge(i + 1) },
            count: counts[i],
            accuracy: (counts[i] > 0).then(|| hits[i] as f64 / counts[i] as f64),
        })
        .collect())
}

fn by_key_then_id(key: impl Fn(&QuestionMetrics) -> f64) -> impl Fn(&&QuestionMetrics, &&QuestionMetrics) -> Ordering {
    move |a, b| {
        key(a)
            .total_cmp(&key(b))
            .then_with(|| a.question_id.cmp(&b.question_id))
    }
}

/// Sorts questions by MI (ascending, ties by id) and splits them into
/// `num_bins` equal-count rank bins. The first `n % num_bins` bins hold one
/// extra question.
pub fn mi_rank_curve(metrics: &[QuestionMetrics], num_bins: usize) -> Result<Vec<MiRankBin>> {
    if num_bins == 0 {
        return Err(Error::InvalidBinCount);
    }
    if metrics.is_empty() {
        return Err(Error::EmptyEvaluation("no question metrics".into()));
    }
    if num_bins > metrics.len() {
        return Err(Error::TooManyBins {
            bins: num_bins,
            questions: metrics.len(),
        });
    }
    let mut sorted: Vec<&QuestionMetrics> = metrics.iter().collect();
    sorted.sort_by(by_key_then_id(|m| m.mutual_information));

    let base = sorted.len() / num_bins;
    let extra = sorted.len() % num_bins;
    let mut out = Vec::with_capacity(num_bins);
    let mut start = 0;
    for b in 0..num_bins {
        let size = base + usize::from(b < extra);
        let chunk = &sorted[start..start + size];
        let frac = |pred: fn(&QuestionMetrics) -> bool| {
            chunk.iter().filter(|m| pred(m)).count() as f64 / size as f64
        };
        out.push(MiRankBin {
            rank_bin: b,
            first_rank: start,
            count: size,
            accuracy_full: frac(|m| m.correct_full),
            accuracy_no_context: frac(|m| m.correct_no_context),
            mean_mi: chunk.iter().map(|m| m.mutual_information).sum::<f64>() / size as f64,
            min_mi: chunk[0].mutual_information,
            max_mi: chunk[size - 1].mutual_information,
        });
        start += size;
    }
    Ok(out)
}

/// The `k_low` lowest and `k_high` highest questions by `key`.
///
/// The low set is ordered ascending and the high set descending; ties go to
/// the smaller question id in both. The two sets never overlap.
pub fn select_extremes(
    metrics: &[QuestionMetrics],
    key: ExtremeKey,
    k_low: usize,
    k_high: usize,
) -> Result<(FlagSet, FlagSet)> {
    let requested = k_low + k_high;
    if requested > metrics.len() {
        return Err(Error::InsufficientQuestions {
            requested,
            available: metrics.len(),
        });
    }
    let value = |m: &QuestionMetrics| key.value(m);

    let mut ascending: Vec<&QuestionMetrics> = metrics.iter().collect();
    ascending.sort_by(by_key_then_id(value));
    let low: Vec<&QuestionMetrics> = ascending[..k_low].to_vec();
    let taken: BTreeSet<&str> = low.iter().map(|m| m.question_id.as_str()).collect();

    let mut descending: Vec<&QuestionMetrics> = metrics.iter().collect();
    descending.sort_by(|a, b| {
        value(b)
            .total_cmp(&value(a))
            .then_with(|| a.question_id.cmp(&b.question_id))
    });
    let high: Vec<&QuestionMetrics> = descending
        .into_iter()
        .filter(|m| !taken.contains(m.question_id.as_str()))
        .take(k_high)
        .collect();

    let to_set = |rule: String, picked: &[&QuestionMetrics]| FlagSet {
        rule,
        threshold: picked.last().map(|m| value(m)),
        question_ids: picked.iter().map(|m| m.question_id.clone()).collect(),
    };
    Ok((
        to_set(format!("lowest:{}", key.as_str()), &low),
        to_set(format!("highest:{}", key.as_str()), &high),
    ))
}

/// Questions whose no-context effective number of options is below
/// `threshold`, ordered by that value then id.
pub fn flag_low_entropy(metrics: &[QuestionMetrics], threshold: f64) -> Result<FlagSet> {
    let k = max_options(metrics)?;
    if !(threshold > 1.0 && threshold <= k as f64) {
        return Err(Error::InvalidThreshold {
            threshold,
            max_options: k,
        });
    }
    let mut flagged: Vec<&QuestionMetrics> = metrics
        .iter()
        .filter(|m| m.effective_options_no_context < threshold)
        .collect();
    flagged.sort_by(by_key_then_id(|m| m.effective_options_no_context));
    Ok(FlagSet {
        rule: format!("effective_options_no_context<{threshold}"),
        threshold: Some(threshold),
        question_ids: flagged.into_iter().map(|m| m.question_id.clone()).collect(),
    })
}

/// One accuracy measurement: a system trained on `train`, shown `variant`,
/// evaluated on `eval`. Accuracy is in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRun {
    pub train: String,
    pub eval: String,
    pub variant: InputVariant,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub train: String,
    pub variant: InputVariant,
    /// One cell per entry of [`CrossTable::eval_tags`].
    pub cells: Vec<Option<f64>>,
}

/// Accuracy pivoted by (training source, variant) rows and evaluation
/// columns. Training sources and evaluation sets keep their first-seen order;
/// variants within a training source follow [`InputVariant::LADDER`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTable {
    pub eval_tags: Vec<String>,
    pub rows: Vec<CrossRow>,
}

pub fn cross_table(runs: &[CrossRun]) -> Result<CrossTable> {
    if runs.is_empty() {
        return Err(Error::EmptyEvaluation("no runs for cross table".into()));
    }
    let mut trains: Vec<&str> = Vec::new();
    let mut evals: Vec<&str> = Vec::new();
    let mut cells: HashMap<(&str, &str, InputVariant), f64> = HashMap::new();
    for run in runs {
        if !trains.contains(&run.train.as_str()) {
            trains.push(&run.train);
        }
        if !evals.contains(&run.eval.as_str()) {
            evals.push(&run.eval);
        }
        let key = (run.train.as_str(), run.eval.as_str(), run.variant);
        if cells.insert(key, run.accuracy).is_some() {
            return Err(Error::DuplicateCell {
                train: run.train.clone(),
                eval: run.eval.clone(),
                variant: run.variant.label().to_owned(),
            });
        }
    }

    let mut rows = Vec::new();
    for &train in &trains {
        for variant in InputVariant::LADDER {
            if !runs.iter().any(|r| r.train == train && r.variant == variant) {
                continue;
            }
            rows.push(CrossRow {
                train: train.to_owned(),
                variant,
                cells: evals
                    .iter()
                    .map(|&eval| cells.get(&(train, eval, variant)).copied())
                    .collect(),
            });
        }
    }
    Ok(CrossTable {
        eval_tags: evals.into_iter().map(str::to_owned).collect(),
        rows,
    })
}

pub const MISSING_CELL: &str = "--";

fn fmt_cell(cell: Option<f64>) -> String {
    match cell {
        Some(v) => format!("{v:.2}"),
        None => MISSING_CELL.to_owned(),
    }
}

impl CrossTable {
    pub fn cell(&self, train: &str, variant: InputVariant, eval: &str) -> Option<f64> {
        let col = self.eval_tags.iter().position(|e| e == eval)?;
        self.rows
            .iter()
            .find(|r| r.train == train && r.variant == variant)
            .and_then(|r| r.cells[col])
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| train | input |");
        for e in &self.eval_tags {
            let _ = write!(out, " {e} |");
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(self.eval_tags.len()));
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "| {} | {} |", row.train, row.variant.label());
            for c in &row.cells {
                let _ = write!(out, " {} |", fmt_cell(*c));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["train".to_owned(), "input".to_owned()];
        header.extend(self.eval_tags.iter().cloned());
        w.write_record(&header).expect("in-memory csv");
        for row in &self.rows {
            let mut rec = vec![row.train.clone(), row.variant.label().to_owned()];
            rec.extend(row.cells.iter().map(|c| fmt_cell(*c)));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}
