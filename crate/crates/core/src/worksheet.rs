//! Human-evaluation worksheets built from extreme-subset selections.
//!
//! Entropy worksheets have a single phase in which the context is withheld.
//! MI worksheets have two: the questions are first answered without context
//! and then again with it. Rows inside each phase are shuffled with a seeded
//! generator so the output is reproducible.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{ExtremeKey, FlagSet};
use crate::error::{Error, Result};
use crate::model::McqItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    NoContext,
    WithContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorksheetRow {
    pub position: usize,
    pub phase: Phase,
    pub subset: Subset,
    pub question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub question: String,
    pub options: Vec<String>,
}

pub fn build_worksheet(
    items: &[McqItem],
    key: ExtremeKey,
    low: &FlagSet,
    high: &FlagSet,
    seed: u64,
) -> Result<Vec<WorksheetRow>> {
    let by_id: HashMap<&str, &McqItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut picked: Vec<(Subset, &McqItem)> = Vec::new();
    let mut missing = Vec::new();
    for (subset, set) in [(Subset::Low, low), (Subset::High, high)] {
        for id in &set.question_ids {
            match by_id.get(id.as_str()) {
                Some(item) => picked.push((subset, item)),
                None => missing.push(id.clone()),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }

    let phases: &[Phase] = match key {
        ExtremeKey::EntropyNoContext => &[Phase::NoContext],
        ExtremeKey::MutualInformation => &[Phase::NoContext, Phase::WithContext],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(picked.len() * phases.len());
    for &phase in phases {
        let mut order = picked.clone();
        order.shuffle(&mut rng);
        for (subset, item) in order {
            rows.push(WorksheetRow {
                position: rows.len(),
                phase,
                subset,
                question_id: item.id.clone(),
                context: (phase == Phase::WithContext).then(|| item.context.clone()),
                question: item.question.clone(),
                options: item.options.clone(),
            });
        }
    }
    Ok(rows)
}
