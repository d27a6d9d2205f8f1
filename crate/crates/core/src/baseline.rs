//! Model-free lexical scorer.
//!
//! Each option is scored by how many of its distinct tokens appear in the
//! text the variant makes visible:
//!
//! | variant           | visible text                        |
//! |-------------------|-------------------------------------|
//! | `full`            | question and context                |
//! | `no_context`      | question                            |
//! | `options_context` | context                             |
//! | `options_only`    | the other options                   |
//!
//! With `s` shared tokens out of `n` distinct option tokens the logit is
//! `ln(1 + s) + s / n`. Options with no overlap score exactly zero, so an
//! item with no lexical signal gets a uniform distribution.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::model::{InputVariant, McqItem, PredictionRecord};

pub const DEFAULT_SYSTEM_ID: &str = "lexical-baseline";

/// Lowercased whitespace tokens with non-alphanumeric characters removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

fn option_logit(option: &BTreeSet<String>, visible: &BTreeSet<String>) -> f64 {
    if option.is_empty() {
        return 0.0;
    }
    let shared = option.intersection(visible).count() as f64;
    shared.ln_1p() + shared / option.len() as f64
}

pub fn score(item: &McqItem, variant: InputVariant) -> Vec<f64> {
    let options: Vec<BTreeSet<String>> = item.options.iter().map(|o| token_set(o)).collect();

    if variant == InputVariant::OptionsOnly {
        return (0..options.len())
            .map(|i| {
                let others: BTreeSet<String> = options
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .flat_map(|(_, o)| o.iter().cloned())
                    .collect();
                option_logit(&options[i], &others)
            })
            .collect();
    }

    let mut visible = BTreeSet::new();
    if variant.shows_question() {
        visible.extend(token_set(&item.question));
    }
    if variant.shows_context() {
        visible.extend(token_set(&item.context));
    }
    options.iter().map(|o| option_logit(o, &visible)).collect()
}

/// Scores every item, producing one prediction record per item.
pub fn score_dataset(
    items: &[McqItem],
    variant: InputVariant,
    system_id: &str,
    seed: i64,
) -> Vec<PredictionRecord> {
    items
        .par_iter()
        .map(|item| PredictionRecord {
            question_id: item.id.clone(),
            system_id: system_id.to_owned(),
            variant,
            seed,
            logits: score(item, variant),
        })
        .collect()
}
