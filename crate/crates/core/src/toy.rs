//! A bundled 20-question corpus with planted giveaways.
//!
//! Questions `g01`..`g10` repeat the words of their correct option, so they
//! can be answered from the question alone. Questions `c01`..`c10` share no
//! words with any option; only the context points at the answer.

use std::path::Path;

use crate::error::Result;
use crate::ingestion;
use crate::model::McqItem;

pub const TOY_CORPUS_JSONL: &str = include_str!("../data/toy_corpus.jsonl");

pub fn toy_corpus() -> Vec<McqItem> {
    ingestion::parse_dataset(Path::new("toy_corpus.jsonl"), TOY_CORPUS_JSONL)
        .expect("bundled corpus is valid")
}

pub fn is_giveaway(id: &str) -> bool {
    id.starts_with('g')
}

pub fn write_toy_corpus(path: impl AsRef<Path>) -> Result<()> {
    ingestion::write_dataset(path, &toy_corpus())
}
