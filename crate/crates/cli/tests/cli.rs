use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mcq_audit::{ingestion, InputVariant, McqItem, PredictionRecord};

const BIN: &str = env!("CARGO_BIN_EXE_mcq-audit");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MCQ_AUDIT_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Last stderr line parsed as the machine-readable error record.
fn error_kind(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr is empty");
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    v["error"].as_str().unwrap().to_owned()
}

fn items(n: usize) -> Vec<McqItem> {
    (0..n)
        .map(|i| McqItem {
            id: format!("q{i}"),
            context: "ctx".into(),
            question: "what?".into(),
            options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            answer_index: 0,
        })
        .collect()
}

fn preds(items: &[McqItem], variant: InputVariant, logits: impl Fn(usize) -> Vec<f64>) -> Vec<PredictionRecord> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| PredictionRecord {
            question_id: item.id.clone(),
            system_id: "sys".into(),
            variant,
            seed: 0,
            logits: logits(i),
        })
        .collect()
}

fn audit_fixture(dir: &Path, n: usize) -> std::path::PathBuf {
    let data = dir.join("data.jsonl");
    let pred_path = dir.join("preds.jsonl");
    let it = items(n);
    let mut p = preds(&it, InputVariant::NoContext, |i| vec![1.0 + i as f64 * 0.3, 0.5, 0.0, -0.5]);
    p.extend(preds(&it, InputVariant::Full, |i| vec![2.0, 0.1 * i as f64, 0.0, 1.0]));
    ingestion::write_dataset(&data, &it).unwrap();
    ingestion::write_predictions(&pred_path, &p).unwrap();
    let rep = dir.join("rep");
    let out = run(&[
        "audit", "--dataset", s(&data), "--preds", s(&pred_path), "--system", "sys", "--out", s(&rep),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    rep
}

#[test]
fn select_more_than_available_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let rep = audit_fixture(dir.path(), 3);
    let ws = dir.path().join("ws.jsonl");
    let out = run(&[
        "select", "--report", s(&rep), "--key", "entropy", "--low", "2", "--high", "2", "--out", s(&ws),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "InsufficientQuestions");
    assert!(!ws.exists());
}

#[test]
fn select_writes_a_worksheet() {
    let dir = tempfile::tempdir().unwrap();
    let rep = audit_fixture(dir.path(), 6);
    let ws = dir.path().join("ws.jsonl");
    let out = run(&[
        "select", "--report", s(&rep), "--key", "mi", "--low", "2", "--high", "2", "--out", s(&ws),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // two phases of four questions
    assert_eq!(fs::read_to_string(&ws).unwrap().lines().count(), 8);
}

#[test]
fn constant_logits_are_uncalibratable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let pred_path = dir.path().join("preds.jsonl");
    let it = items(4);
    ingestion::write_dataset(&data, &it).unwrap();
    ingestion::write_predictions(&pred_path, &preds(&it, InputVariant::Full, |_| vec![0.3; 4])).unwrap();
    let out = run(&[
        "calibrate", "--dataset", s(&data), "--preds", s(&pred_path), "--system", "sys", "--variant", "full",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "UncalibratableSystem");
}

#[test]
fn calibrate_prints_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let pred_path = dir.path().join("preds.jsonl");
    let it = items(4);
    ingestion::write_dataset(&data, &it).unwrap();
    let p = preds(&it, InputVariant::Full, |i| vec![3.0, 0.0, i as f64 * 1.5, 0.0]);
    ingestion::write_predictions(&pred_path, &p).unwrap();
    let out = run(&[
        "calibrate", "--dataset", s(&data), "--preds", s(&pred_path), "--system", "sys", "--variant", "full",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["variant"], "full");
    assert!(v["temperature"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_predictions_exit_with_coverage_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let pred_path = dir.path().join("preds.jsonl");
    let it = items(4);
    ingestion::write_dataset(&data, &it).unwrap();
    // no-context stream is absent
    ingestion::write_predictions(&pred_path, &preds(&it, InputVariant::Full, |_| vec![1.0, 0.0, 0.0, 0.0]))
        .unwrap();
    let args = ["audit", "--dataset", s(&data), "--preds", s(&pred_path), "--system", "sys"];
    let rep = dir.path().join("rep");
    let out = run(&[&args[..], &["--out", s(&rep)]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "CoverageError");
}

#[test]
fn corrupted_report_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let rep = audit_fixture(dir.path(), 4);
    let path = rep.join(ingestion::REPORT_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() / 3]).unwrap();
    let out = run(&["report", "--report", s(&rep)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "ParseError");
}

#[test]
fn report_renders_external_runs() {
    let dir = tempfile::tempdir().unwrap();
    let rep = audit_fixture(dir.path(), 4);
    let runs = dir.path().join("runs.jsonl");
    fs::write(
        &runs,
        "{\"train\":\"RACE\",\"eval\":\"ReClor\",\"variant\":\"full\",\"accuracy\":57.32}\n",
    )
    .unwrap();
    for format in ["md", "csv"] {
        let out = run(&["report", "--report", s(&rep), "--runs", s(&runs), "--format", format]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.contains("57.32"), "{format}: {stdout}");
        assert!(stdout.contains("--"), "{format}: missing cells should render as --");
    }
}

#[test]
fn help_lists_defaults() {
    let out = run(&["audit", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    assert!(help.contains("[default: 2]"), "{help}");
    assert!(help.contains("[default: 50]"), "{help}");
    assert!(help.contains("[default: calibrated]"), "{help}");
}

#[test]
fn invalid_variant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    ingestion::write_dataset(&data, &items(2)).unwrap();
    let out = run(&[
        "score", "--dataset", s(&data), "--variant", "question_only", "--out", s(&dir.path().join("p.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "UsageError");
}

#[test]
fn convert_reclor() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("val.json");
    let dst = dir.path().join("out.jsonl");
    fs::write(
        &src,
        r#"[{"id_string":"r1","context":"All cats purr.","question":"Which follows?",
            "answers":["Cats purr.","Dogs purr.","Nothing.","Cats bark."],"label":0}]"#,
    )
    .unwrap();
    let out = run(&["convert", "reclor", s(&src), s(&dst)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let items = ingestion::load_dataset(&dst).unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0].id, "r1");
    assert_eq!(items[0].options.len(), 4);

    fs::write(&src, r#"[{"id_string":"r2","context":"c","question":"q","answers":["a","b"]}]"#).unwrap();
    let out = run(&["convert", "reclor", s(&src), s(&dst)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "ParseError");
}

#[test]
fn toy_corpus_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.jsonl");
    assert!(run(&["toy-corpus", "--out", s(&data)]).status.success());
    assert_eq!(ingestion::load_dataset(&data).unwrap().len(), 20);
}

#[test]
fn bad_thread_count_is_reported() {
    let out = Command::new(BIN)
        .args(["toy-corpus", "--out", "/nonexistent/x"])
        .env("MCQ_AUDIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "InvalidEnvironment");
}
