//! Reading, validating and joining the JSONL inputs, and persisting audit
//! reports.
//!
//! Dataset lines look like
//! `{"id": "...", "context": "...", "question": "...", "options": [...], "answer_index": 0}`
//! and prediction lines like
//! `{"question_id": "...", "system_id": "...", "variant": "no_context", "seed": 0, "logits": [...]}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{InputVariant, McqItem, PredictionRecord, ProbDist};
use crate::report::{AuditReport, SCHEMA_VERSION};

pub const REPORT_FILE: &str = "report.json";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const BINS_CSV: &str = "bins.csv";
pub const MI_CURVE_CSV: &str = "mi_curve.csv";
pub const PER_QUESTION_CSV: &str = "per_question.csv";
pub const CALIBRATION_CSV: &str = "calibration.csv";

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_line<T: for<'de> Deserialize<'de>>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line,
        message: e.to_string(),
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<McqItem>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_dataset(path, &text)
}

pub(crate) fn parse_dataset(path: &Path, text: &str) -> Result<Vec<McqItem>> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in numbered_lines(text) {
        let item: McqItem = parse_line(path, line, raw)?;
        item.validate()
            .map_err(|message| Error::InvalidItem { line, message })?;
        if item.answer_index >= item.num_options() {
            return Err(Error::InvalidLabel {
                line,
                answer_index: item.answer_index,
                num_options: item.num_options(),
            });
        }
        if !seen.insert(item.id.clone()) {
            return Err(Error::DuplicateId { id: item.id, line });
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(path.to_owned()));
    }
    Ok(items)
}

#[derive(Deserialize)]
struct RawPrediction {
    question_id: String,
    system_id: String,
    variant: String,
    seed: i64,
    logits: Vec<f64>,
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in numbered_lines(&text) {
        let raw: RawPrediction = parse_line(path, line, raw)?;
        let variant: InputVariant = raw.variant.parse()?;
        metrics::softmax(&raw.logits).map_err(|e| match e {
            Error::InvalidLogits { reason, .. } => Error::InvalidLogits {
                question_id: Some(raw.question_id.clone()),
                reason: format!("line {line}: {reason}"),
            },
            other => other,
        })?;
        let key = (raw.question_id.clone(), raw.system_id.clone(), variant, raw.seed);
        if !seen.insert(key) {
            return Err(Error::DuplicatePrediction {
                question_id: raw.question_id,
                system_id: raw.system_id,
                variant: variant.to_string(),
                seed: raw.seed,
            });
        }
        records.push(PredictionRecord {
            question_id: raw.question_id,
            system_id: raw.system_id,
            variant,
            seed: raw.seed,
            logits: raw.logits,
        });
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("serialisable row");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset(path: impl AsRef<Path>, items: &[McqItem]) -> Result<()> {
    write_jsonl(path.as_ref(), items)
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), records)
}

/// A (system, variant) pair whose predictions form one stream.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub system_id: String,
    pub variant: InputVariant,
}

impl StreamKey {
    pub fn new(system_id: impl Into<String>, variant: InputVariant) -> Self {
        StreamKey {
            system_id: system_id.into(),
            variant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoveragePolicy {
    /// Any missing (question, stream) pair is an error.
    #[default]
    Strict,
    /// Questions lacking a stream are dropped and reported.
    Permissive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedQuestion {
    pub item: McqItem,
    /// Ensemble distribution per requested stream, in request order.
    pub ensembles: Vec<ProbDist>,
    /// Number of seeds behind each ensemble.
    pub seed_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedSet {
    pub streams: Vec<StreamKey>,
    pub questions: Vec<JoinedQuestion>,
    /// Ids dropped under [`CoveragePolicy::Permissive`].
    pub dropped: Vec<String>,
}

/// Joins predictions onto dataset items and averages each stream's seeds
/// into one ensemble distribution per question. Output keeps dataset order.
pub fn join(
    items: &[McqItem],
    predictions: &[PredictionRecord],
    streams: &[StreamKey],
    policy: CoveragePolicy,
) -> Result<JoinedSet> {
    let by_id: HashMap<&str, &McqItem> = items.iter().map(|it| (it.id.as_str(), it)).collect();

    let orphans: Vec<&PredictionRecord> = predictions
        .iter()
        .filter(|p| !by_id.contains_key(p.question_id.as_str()))
        .collect();
    if let Some(first) = orphans.first() {
        return Err(Error::OrphanPrediction {
            first: first.question_id.clone(),
            count: orphans.len(),
        });
    }

    let wanted: HashMap<&StreamKey, usize> = streams.iter().enumerate().map(|(i, s)| (s, i)).collect();
    // (question, stream index) -> seed -> logits; seeds ordered for a stable ensemble
    let mut grouped: HashMap<(&str, usize), BTreeMap<i64, &[f64]>> = HashMap::new();
    for p in predictions {
        let item = by_id[p.question_id.as_str()];
        if p.logits.len() != item.num_options() {
            return Err(Error::ShapeMismatch(format!(
                "question {:?} has {} options but system {:?} ({}) seed {} gave {} logits",
                p.question_id,
                item.num_options(),
                p.system_id,
                p.variant,
                p.seed,
                p.logits.len()
            )));
        }
        let key = StreamKey::new(p.system_id.clone(), p.variant);
        if let Some(&s) = wanted.get(&key) {
            grouped
                .entry((p.question_id.as_str(), s))
                .or_default()
                .insert(p.seed, &p.logits);
        }
    }

    let joined: Vec<Result<Option<JoinedQuestion>>> = items
        .par_iter()
        .map(|item| {
            let mut ensembles = Vec::with_capacity(streams.len());
            let mut seed_counts = Vec::with_capacity(streams.len());
            for s in 0..streams.len() {
                let Some(seeds) = grouped.get(&(item.id.as_str(), s)) else {
                    return Ok(None);
                };
                let members = seeds
                    .values()
                    .map(|l| metrics::softmax(l).map_err(|e| e.for_question(&item.id)))
                    .collect::<Result<Vec<_>>>()?;
                ensembles.push(metrics::ensemble_average(&members)?);
                seed_counts.push(members.len());
            }
            Ok(Some(JoinedQuestion {
                item: item.clone(),
                ensembles,
                seed_counts,
            }))
        })
        .collect();

    let mut questions = Vec::with_capacity(items.len());
    let mut missing = Vec::new();
    for (item, res) in items.iter().zip(joined) {
        match res? {
            Some(q) => questions.push(q),
            None => missing.push(item.id.clone()),
        }
    }
    if !missing.is_empty() && policy == CoveragePolicy::Strict {
        return Err(Error::Coverage { missing });
    }
    Ok(JoinedSet {
        streams: streams.to_vec(),
        questions,
        dropped: missing,
    })
}

/// Writes `report.json` plus the plot-data CSVs into `dir`.
pub fn write_report(report: &AuditReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(report).expect("serialisable report");
    json.push('\n');
    let path = dir.join(REPORT_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    for (name, body) in [
        (BINS_CSV, report.bins_csv()),
        (MI_CURVE_CSV, report.mi_curve_csv()),
        (PER_QUESTION_CSV, report.per_question_csv()),
        (CALIBRATION_CSV, report.calibration_csv()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_report(dir: impl AsRef<Path>) -> Result<AuditReport> {
    let path = dir.as_ref().join(REPORT_FILE);
    let text = read_to_string(&path)?;
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 1,
            message: "missing schema_version".into(),
        })?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(parse_err)
}

/// Items of the audited questions, stored next to the report so worksheets
/// can be built from the report directory alone.
pub fn write_report_items(dir: impl AsRef<Path>, items: &[McqItem]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join(ITEMS_FILE), items)
}
