//! Converters from public reading-comprehension distributions into the
//! canonical dataset JSONL.
//!
//! * `race`: RACE / RACE++ passage files, one JSON object per passage with
//!   `article`, `questions`, `options`, `answers` (letters) and `id`. The
//!   input may be a single file (one or more objects, one per line) or a
//!   directory tree of such files.
//! * `cosmos`: CosmosQA JSONL with `id`, `context`, `question`,
//!   `answer0`..`answer3` and `label`.
//! * `reclor`: ReClor JSON array with `id_string`, `context`, `question`,
//!   `answers` and `label`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::McqItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Race,
    Cosmos,
    Reclor,
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "race" | "race++" => Ok(SourceFormat::Race),
            "cosmos" | "cosmosqa" => Ok(SourceFormat::Cosmos),
            "reclor" => Ok(SourceFormat::Reclor),
            other => Err(Error::UnknownFormat(other.to_owned())),
        }
    }
}

pub fn convert(format: SourceFormat, input: impl AsRef<Path>) -> Result<Vec<McqItem>> {
    let input = input.as_ref();
    let items = match format {
        SourceFormat::Race => {
            let mut items = Vec::new();
            for file in collect_files(input)? {
                items.extend(convert_race_file(&file)?);
            }
            items
        }
        SourceFormat::Cosmos => convert_cosmos(input)?,
        SourceFormat::Reclor => convert_reclor(input)?,
    };
    for (i, item) in items.iter().enumerate() {
        item.validate()
            .map_err(|message| Error::InvalidItem { line: i + 1, message })?;
    }
    Ok(items)
}

fn collect_files(root: &Path) -> Result<Vec<PathBuf>> {
    if root.is_file() {
        return Ok(vec![root.to_owned()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

/// Parses either a single JSON document or JSONL.
fn json_documents(path: &Path) -> Result<Vec<(usize, Value)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(v) = serde_json::from_str::<Value>(&text) {
        return Ok(vec![(1, v)]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| parse_error(path, i + 1, e.to_string()))
        })
        .collect()
}

#[derive(Deserialize)]
struct RacePassage {
    id: String,
    article: String,
    questions: Vec<String>,
    options: Vec<Vec<String>>,
    answers: Vec<String>,
}

fn letter_index(letter: &str) -> Option<usize> {
    let mut chars = letter.trim().chars();
    let c = chars.next()?.to_ascii_uppercase();
    if chars.next().is_some() || !c.is_ascii_uppercase() {
        return None;
    }
    Some((c as u8 - b'A') as usize)
}

fn convert_race_file(path: &Path) -> Result<Vec<McqItem>> {
    let mut items = Vec::new();
    for (line, doc) in json_documents(path)? {
        let passage: RacePassage =
            serde_json::from_value(doc).map_err(|e| parse_error(path, line, e.to_string()))?;
        if passage.questions.len() != passage.options.len()
            || passage.questions.len() != passage.answers.len()
        {
            return Err(parse_error(
                path,
                line,
                format!("passage {:?}: questions/options/answers lengths differ", passage.id),
            ));
        }
        for (qi, ((question, options), answer)) in passage
            .questions
            .into_iter()
            .zip(passage.options)
            .zip(&passage.answers)
            .enumerate()
        {
            let answer_index = letter_index(answer).ok_or_else(|| {
                parse_error(path, line, format!("answer {answer:?} is not a letter"))
            })?;
            if answer_index >= options.len() {
                return Err(Error::InvalidLabel {
                    line,
                    answer_index,
                    num_options: options.len(),
                });
            }
            items.push(McqItem {
                id: format!("{}-{qi}", passage.id),
                context: passage.article.clone(),
                question,
                options,
                answer_index,
            });
        }
    }
    Ok(items)
}

fn label_value(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|x| x as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn str_field(path: &Path, line: usize, obj: &Value, key: &str) -> Result<String> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| parse_error(path, line, format!("missing string field {key:?}")))
}

fn convert_cosmos(path: &Path) -> Result<Vec<McqItem>> {
    let mut items = Vec::new();
    for (line, doc) in json_documents(path)? {
        let options = (0..4)
            .map(|k| str_field(path, line, &doc, &format!("answer{k}")))
            .collect::<Result<Vec<_>>>()?;
        let answer_index = doc.get("label").and_then(label_value).ok_or_else(|| {
            parse_error(path, line, "missing or non-integer label (unlabelled split?)")
        })?;
        if answer_index >= options.len() {
            return Err(Error::InvalidLabel {
                line,
                answer_index,
                num_options: options.len(),
            });
        }
        items.push(McqItem {
            id: str_field(path, line, &doc, "id")?,
            context: str_field(path, line, &doc, "context")?,
            question: str_field(path, line, &doc, "question")?,
            options,
            answer_index,
        });
    }
    Ok(items)
}

#[derive(Deserialize)]
struct ReclorEntry {
    id_string: String,
    context: String,
    question: String,
    answers: Vec<String>,
    label: Option<Value>,
}

fn convert_reclor(path: &Path) -> Result<Vec<McqItem>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<ReclorEntry> =
        serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e.to_string()))?;
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let line = i + 1;
            let answer_index = e.label.as_ref().and_then(label_value).ok_or_else(|| {
                parse_error(
                    path,
                    line,
                    format!("entry {:?} has no label (unlabelled split?)", e.id_string),
                )
            })?;
            if answer_index >= e.answers.len() {
                return Err(Error::InvalidLabel {
                    line,
                    answer_index,
                    num_options: e.answers.len(),
                });
            }
            Ok(McqItem {
                id: e.id_string,
                context: e.context,
                question: e.question,
                options: e.answers,
                answer_index,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn race_passage_expands_to_questions() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "high1.txt",
            r#"{"id":"high1.txt","article":"A story.","questions":["Q1?","Q2?"],
                "options":[["a","b","c","d"],["e","f","g","h"]],"answers":["C","a"]}"#,
        );
        let items = convert(SourceFormat::Race, dir.path()).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].id, "high1.txt-0");
        assert_eq!(items[0].answer_index, 2);
        assert_eq!(items[1].answer_index, 0);
        assert_eq!(items[1].context, "A story.");
    }

    #[test]
    fn cosmos_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "dev.jsonl",
            concat!(
                r#"{"id":"x1","context":"c","question":"q","answer0":"a","answer1":"b","answer2":"c","answer3":"d","label":"3"}"#,
                "\n",
                r#"{"id":"x2","context":"c","question":"q","answer0":"a","answer1":"b","answer2":"c","answer3":"d","label":1}"#,
                "\n"
            ),
        );
        let items = convert(SourceFormat::Cosmos, &p).unwrap();
        assert_eq!(items.iter().map(|i| i.answer_index).collect::<Vec<_>>(), [3, 1]);
    }

    #[test]
    fn reclor_requires_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "val.json",
            r#"[{"id_string":"r1","context":"c","question":"q","answers":["a","b","c","d"],"label":2}]"#,
        );
        assert_eq!(convert(SourceFormat::Reclor, &p).unwrap()[0].answer_index, 2);
        let p = write(
            dir.path(),
            "test.json",
            r#"[{"id_string":"r1","context":"c","question":"q","answers":["a","b","c","d"]}]"#,
        );
        assert!(matches!(convert(SourceFormat::Reclor, &p), Err(Error::Parse { .. })));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("squad".parse::<SourceFormat>(), Err(Error::UnknownFormat(_))));
    }
}
