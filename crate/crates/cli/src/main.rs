use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mcq_audit::analysis::{self, CrossRun, ExtremeKey};
use mcq_audit::audit::{self, AuditConfig};
use mcq_audit::calibration::{self, CalibrationItem};
use mcq_audit::convert::{self, SourceFormat};
use mcq_audit::ingestion::{self, CoveragePolicy, StreamKey};
use mcq_audit::report::EntropySource;
use mcq_audit::{baseline, toy, worksheet, Error, InputVariant, Result};

const THREADS_ENV: &str = "MCQ_AUDIT_THREADS";

/// Flags multiple-choice questions that can be answered without the passage.
#[derive(Parser, Debug)]
#[command(name = "mcq-audit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a public dataset distribution to canonical JSONL
    Convert {
        /// Source format: race, cosmos or reclor
        format: String,
        /// Input file or directory
        input: PathBuf,
        /// Output JSONL path
        output: PathBuf,
    },
    /// Score a dataset with the lexical baseline and write predictions
    Score {
        /// Canonical dataset JSONL
        #[arg(long)]
        dataset: PathBuf,
        /// full, no_context, options_only or options_context
        #[arg(long, value_parser = parse_variant)]
        variant: InputVariant,
        /// Output predictions JSONL
        #[arg(long)]
        out: PathBuf,
        /// System id written into every record
        #[arg(long, default_value = baseline::DEFAULT_SYSTEM_ID)]
        system: String,
        /// Seed written into every record
        #[arg(long, default_value_t = 0)]
        seed: i64,
    },
    /// Fit a temperature for one system and variant and print the result
    Calibrate {
        /// Canonical dataset JSONL
        #[arg(long)]
        dataset: PathBuf,
        /// Prediction files (repeatable)
        #[arg(long, required = true)]
        preds: Vec<PathBuf>,
        /// System id to calibrate
        #[arg(long)]
        system: String,
        /// full, no_context, options_only or options_context
        #[arg(long, value_parser = parse_variant)]
        variant: InputVariant,
    },
    /// Run the full audit and write a report directory
    Audit {
        /// Canonical dataset JSONL
        #[arg(long)]
        dataset: PathBuf,
        /// Prediction files (repeatable)
        #[arg(long, required = true)]
        preds: Vec<PathBuf>,
        /// System providing the `full` predictions
        #[arg(long)]
        system: String,
        /// System providing the `no_context` predictions [default: same as --system]
        #[arg(long)]
        shortcut_system: Option<String>,
        /// Dataset label used in the cross-performance table [default: dataset file stem]
        #[arg(long)]
        dataset_tag: Option<String>,
        /// Flag questions whose no-context effective options fall below this
        #[arg(long, default_value_t = analysis::DEFAULT_FLAG_THRESHOLD)]
        flag_threshold: f64,
        /// Number of equal-count MI rank bins
        #[arg(long, default_value_t = analysis::DEFAULT_MI_BINS)]
        mi_bins: usize,
        /// Entropies from calibrated or raw ensemble outputs
        #[arg(long, value_enum, default_value_t = EntropyArg::Calibrated)]
        entropy: EntropyArg,
        /// Drop questions with missing predictions instead of failing
        #[arg(long, default_value_t = false)]
        permissive: bool,
        /// Report directory to create
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a human-evaluation worksheet of the lowest/highest questions
    Select {
        /// Report directory written by `audit`
        #[arg(long)]
        report: PathBuf,
        /// Rank by no-context entropy or by mutual information
        #[arg(long, value_enum)]
        key: KeyArg,
        /// Number of lowest-ranked questions
        #[arg(long)]
        low: usize,
        /// Number of highest-ranked questions
        #[arg(long)]
        high: usize,
        /// Worksheet JSONL to write
        #[arg(long)]
        out: PathBuf,
        /// Shuffle seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset to take question text from [default: items stored with the report]
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Render report tables, including the cross-performance pivot
    Report {
        /// Report directories (repeatable)
        #[arg(long, required = true)]
        report: Vec<PathBuf>,
        /// Extra cross-table rows as JSONL {train, eval, variant, accuracy}
        #[arg(long)]
        runs: Option<PathBuf>,
        /// Output format
        #[arg(long, value_enum, default_value_t = FormatArg::Md)]
        format: FormatArg,
    },
    /// Write the bundled 20-question toy corpus
    ToyCorpus {
        /// Output dataset JSONL
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EntropyArg {
    Calibrated,
    Raw,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KeyArg {
    Entropy,
    Mi,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Md,
}

fn parse_variant(s: &str) -> std::result::Result<InputVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned())
}

fn load_all_predictions(paths: &[PathBuf]) -> Result<Vec<mcq_audit::PredictionRecord>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(ingestion::load_predictions(p)?);
    }
    Ok(all)
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Convert {
            format,
            input,
            output,
        } => {
            let format: SourceFormat = format.parse()?;
            let items = convert::convert(format, &input)?;
            ingestion::write_dataset(&output, &items)?;
            eprintln!("converted {} questions", items.len());
        }
        Command::Score {
            dataset,
            variant,
            out,
            system,
            seed,
        } => {
            let items = ingestion::load_dataset(&dataset)?;
            let records = baseline::score_dataset(&items, variant, &system, seed);
            ingestion::write_predictions(&out, &records)?;
        }
        Command::Calibrate {
            dataset,
            preds,
            system,
            variant,
        } => {
            let items = ingestion::load_dataset(&dataset)?;
            let records = load_all_predictions(&preds)?;
            let stream = StreamKey::new(system, variant);
            let joined = ingestion::join(
                &items,
                &records,
                std::slice::from_ref(&stream),
                CoveragePolicy::Strict,
            )?;
            let cal_items = joined
                .questions
                .iter()
                .map(|q| CalibrationItem::from_dist(&q.ensembles[0], q.item.answer_index))
                .collect::<Result<Vec<_>>>()?;
            let result = calibration::solve_temperature(&stream.system_id, variant, &cal_items)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result).expect("serialisable result")
            );
        }
        Command::Audit {
            dataset,
            preds,
            system,
            shortcut_system,
            dataset_tag,
            flag_threshold,
            mi_bins,
            entropy,
            permissive,
            out,
        } => {
            let items = ingestion::load_dataset(&dataset)?;
            let records = load_all_predictions(&preds)?;
            let mut config = AuditConfig::new(system, dataset_tag.unwrap_or_else(|| file_stem(&dataset)));
            if let Some(s) = shortcut_system {
                config.shortcut_system = s;
            }
            config.flag_threshold = flag_threshold;
            config.mi_bins = mi_bins;
            config.entropy_source = match entropy {
                EntropyArg::Calibrated => EntropySource::Calibrated,
                EntropyArg::Raw => EntropySource::Raw,
            };
            if permissive {
                config.coverage = CoveragePolicy::Permissive;
            }
            let outcome = audit::run_audit(&items, &records, &config)?;
            for w in &outcome.warnings {
                warn(w);
            }
            ingestion::write_report(&outcome.report, &out)?;
            ingestion::write_report_items(&out, &outcome.items)?;
            let flagged: usize = outcome.report.flags.iter().map(|f| f.question_ids.len()).sum();
            eprintln!(
                "audited {} questions, {} flagged; report in {}",
                outcome.report.dataset.num_questions,
                flagged,
                out.display()
            );
        }
        Command::Select {
            report,
            key,
            low,
            high,
            out,
            seed,
            dataset,
        } => {
            let audit_report = ingestion::read_report(&report)?;
            let key = match key {
                KeyArg::Entropy => ExtremeKey::EntropyNoContext,
                KeyArg::Mi => ExtremeKey::MutualInformation,
            };
            let (low_set, high_set) =
                analysis::select_extremes(&audit_report.per_question, key, low, high)?;
            let items = match dataset {
                Some(d) => ingestion::load_dataset(d)?,
                None => ingestion::load_dataset(report.join(ingestion::ITEMS_FILE))?,
            };
            let rows = worksheet::build_worksheet(&items, key, &low_set, &high_set, seed)?;
            let mut body = String::new();
            for r in &rows {
                body.push_str(&serde_json::to_string(r).expect("serialisable row"));
                body.push('\n');
            }
            write_text(&out, &body)?;
        }
        Command::Report {
            report,
            runs,
            format,
        } => {
            let reports = report
                .iter()
                .map(ingestion::read_report)
                .collect::<Result<Vec<_>>>()?;
            let mut all_runs: Vec<CrossRun> = reports
                .iter()
                .flat_map(|r| r.cross_table.runs.iter().cloned())
                .collect();
            if let Some(path) = runs {
                all_runs.extend(load_runs(&path)?);
            }
            let table = analysis::cross_table(&all_runs)?;
            match format {
                FormatArg::Md => {
                    for r in &reports {
                        println!("{}", r.summary_markdown());
                    }
                    println!("## Cross-performance (accuracy, %)\n");
                    print!("{}", table.to_markdown());
                }
                FormatArg::Csv => print!("{}", table.to_csv()),
                FormatArg::Json => {
                    let calibration: Vec<_> =
                        reports.iter().flat_map(|r| r.calibration.iter()).collect();
                    let doc = serde_json::json!({
                        "cross_table": table,
                        "calibration": calibration,
                    });
                    println!("{}", serde_json::to_string_pretty(&doc).expect("serialisable"));
                }
            }
        }
        Command::ToyCorpus { out } => toy::write_toy_corpus(&out)?,
    }
    Ok(())
}

fn load_runs(path: &Path) -> Result<Vec<CrossRun>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV}={raw:?} is not a positive integer"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn error_line(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "message": message })
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            error_line("UsageError", &e.kind().to_string());
            return ExitCode::from(1);
        }
    };
    if let Err(msg) = configure_threads() {
        error_line("InvalidEnvironment", &msg);
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            error_line(e.kind(), &e.to_string());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
