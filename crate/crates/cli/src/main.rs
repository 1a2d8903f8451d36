//! `calibench` command-line tool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use calibench_cli::config::{AskSection, Overrides};
use calibench_cli::exit::{CliError, CliResult};
use calibench_cli::{pipeline, stages};
use calibench_core::calibration::{ConfidenceField, ScoredRecord};
use calibench_core::gateway::{load_responses, save_responses, Frame, MockProfile};
use calibench_core::inference::{load_closure, save_closure};
use calibench_core::kb::{load_manifest, KnowledgeBase, PredicateMeta};
use calibench_core::parser::ModelResponse;
use calibench_core::qgen::{load_questions, save_questions};
use calibench_core::{exposure, jsonl};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "calibench", version, about = "Knowledge-triple confidence calibration benchmark")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge base operations.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
    /// Closes a knowledge base under the inference rules.
    Derive {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders and samples yes/no questions from a closure.
    Qgen {
        #[arg(long)]
        closure: PathBuf,
        /// Predicate manifest for surface forms.
        #[arg(long)]
        predicates: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        quota: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        balance_truth: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Queries models for every question.
    Ask(AskArgs),
    /// Parses raw responses into answers and confidences.
    Parse {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of missing-answer rates.
        #[arg(long)]
        quality: Option<PathBuf>,
    },
    /// Scores parsed responses and writes calibration summaries.
    Calibrate {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "model")]
        group_by: Vec<String>,
        #[arg(long, default_value = "self_reported")]
        confidence: String,
        #[arg(long, default_value_t = 1)]
        round: u32,
        /// Output directory for scored.jsonl, calibration.csv and calibration.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores knowledge items against the evidence triples.
    Similarity {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long)]
        predicates: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value = "jaccard")]
        function: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the exposure regression battery on experiment data.
    Exposure {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "all")]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        /// Optional confidence-cell summary.
        #[arg(long)]
        subgroups: Option<PathBuf>,
    },
    /// Welfare comparative statics for one scenario, or a (p, b) grid.
    Welfare(WelfareArgs),
    /// Draws calibration figures from scored records.
    Report {
        #[arg(long)]
        scored: PathBuf,
        #[arg(long, default_value = "self_reported")]
        confidence: String,
        /// Output directory; one SVG per model.
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every configured stage from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quota: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        /// Replaces the configured model list.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KbAction {
    /// Imports a pipe-separated triple file.
    Import {
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        predicates: Option<PathBuf>,
        #[arg(long)]
        default_domain: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes the triples of a knowledge base file in pipe-separated form.
    Export {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AskArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    #[arg(long = "frame", default_value = "baseline")]
    frames: Vec<String>,
    #[arg(long = "temperature", default_value = "0")]
    temperatures: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Requests per second per provider.
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Line-delimited log that every response is appended to.
    #[arg(long)]
    log: Option<PathBuf>,
    /// TOML file of named mock profiles, addressable as `mock:<name>`.
    #[arg(long)]
    mock_profiles: Option<PathBuf>,
    /// Predicate manifest used to phrase evidence for mock providers.
    #[arg(long)]
    predicates: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WelfareArgs {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    pi: f64,
    #[arg(long, default_value = "exp:1.0")]
    cost: String,
    #[arg(long, default_value_t = 0.05)]
    dp: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Grid of p values (start:stop:step or a,b,c); enables grid mode.
    #[arg(long, requires = "grid_b")]
    grid_p: Option<String>,
    #[arg(long, requires = "grid_p")]
    grid_b: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn predicates(path: Option<&Path>) -> CliResult<BTreeMap<String, PredicateMeta>> {
    Ok(match path {
        Some(p) => load_manifest(p)?,
        None => BTreeMap::new(),
    })
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Kb { action } => match action {
            KbAction::Import {
                triples,
                predicates,
                default_domain,
                out,
            } => {
                let (kb, report) = stages::import_kb(&triples, predicates.as_deref(), default_domain.as_deref())?;
                kb.save(&out)?;
                eprintln!(
                    "read {}, kept {}, duplicates {}, rejected {}",
                    report.read,
                    report.kept,
                    report.duplicates,
                    report.rejected.len()
                );
            }
            KbAction::Export { kb, out } => {
                let kb = KnowledgeBase::load(&kb)?;
                write(&out, &kb.export())?;
            }
        },
        Command::Derive { kb, depth, out } => {
            let kb = KnowledgeBase::load(&kb)?;
            let (facts, report) = stages::derive(&kb, depth)?;
            save_closure(&facts, &out)?;
            eprintln!(
                "{} base, {} facts, {} levels, {} conflicts{}",
                report.base_count,
                facts.len(),
                report.iteration_count,
                report.conflicts,
                if report.truncated { ", truncated" } else { "" }
            );
        }
        Command::Qgen {
            closure,
            predicates: manifest,
            quota,
            seed,
            balance_truth,
            out,
        } => {
            let facts = load_closure(&closure)?;
            let (questions, report) =
                stages::generate(&facts, &predicates(manifest.as_deref())?, quota, seed, balance_truth)?;
            save_questions(&questions, &out)?;
            eprintln!("{} questions over {} cells", questions.len(), report.cells.len());
        }
        Command::Ask(a) => {
            let questions = load_questions(&a.questions)?;
            let frames = a
                .frames
                .iter()
                .map(|f| f.parse::<Frame>().map_err(CliError::from))
                .collect::<CliResult<Vec<_>>>()?;
            let mocks: BTreeMap<String, MockProfile> = match &a.mock_profiles {
                Some(p) => {
                    let text = std::fs::read_to_string(p)?;
                    toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid mock profiles: {e}")))?
                }
                None => BTreeMap::new(),
            };
            let section = AskSection {
                models: a.models,
                frames,
                temperatures: a.temperatures,
                parallelism: a.parallelism,
                rate_limit: a.rate_limit,
                max_retries: a.max_retries,
                cache_dir: a.cache_dir.clone(),
                timeout_secs: None,
                base_urls: BTreeMap::new(),
            };
            let gw = stages::gateway(&section, &mocks, a.cache_dir, a.log, predicates(a.predicates.as_deref())?)?;
            let batch = stages::ask(&gw, &questions, &stages::job_spec(&section))?;
            save_responses(&batch.responses, &a.out)?;
            eprintln!(
                "{} responses ({} cached, {} provider errors)",
                batch.responses.len(),
                batch.stats.cache_hits,
                batch.stats.provider_errors
            );
        }
        Command::Parse { responses, out, quality } => {
            let parsed = stages::parse(&load_responses(&responses)?);
            jsonl::save(&parsed, &out)?;
            if let Some(q) = quality {
                write(&q, &stages::quality_csv(&parsed)?)?;
            }
        }
        Command::Calibrate {
            questions,
            parsed,
            group_by,
            confidence,
            round,
            out,
        } => {
            let field: ConfidenceField = confidence.parse()?;
            let keys = stages::parse_group_keys(&group_by)?;
            let parsed: Vec<ModelResponse> = jsonl::load(&parsed)?;
            let cal = stages::calibrate(&parsed, &load_questions(&questions)?, round, &keys, field)?;
            std::fs::create_dir_all(&out)?;
            jsonl::save(&cal.scored, &out.join("scored.jsonl"))?;
            write(&out.join("calibration.csv"), &cal.summary_csv)?;
            write(&out.join("calibration.txt"), &cal.summary_txt)?;
            print!("{}", cal.summary_txt);
        }
        Command::Similarity {
            questions,
            parsed,
            predicates: manifest,
            threshold,
            function,
            out,
        } => {
            let cfg = stages::similarity_config(threshold, &function)?;
            let parsed: Vec<ModelResponse> = jsonl::load(&parsed)?;
            let csv = stages::similarity(&load_questions(&questions)?, &parsed, &predicates(manifest.as_deref())?, &cfg)?;
            write(&out, &csv)?;
        }
        Command::Exposure {
            data,
            spec,
            out,
            subgroups,
        } => {
            let records = exposure::load_records(&data)?;
            let res = stages::exposure(&records, &spec)?;
            write(&out, &res.csv)?;
            if let Some(s) = subgroups {
                write(&s, &res.subgroups)?;
            }
        }
        Command::Welfare(w) => {
            let text = match (&w.grid_p, &w.grid_b) {
                (Some(gp), Some(gb)) => {
                    stages::welfare_grid(&stages::parse_range(gp)?, &stages::parse_range(gb)?, w.pi, &w.cost)?
                }
                _ => {
                    let (Some(p), Some(b)) = (w.p, w.b) else {
                        return Err(CliError::usage("--p and --b are required outside grid mode"));
                    };
                    stages::welfare_report(p, b, w.pi, &w.cost, w.dp, w.alpha)?
                }
            };
            match &w.out {
                Some(path) => write(path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Report { scored, confidence, out } => {
            let field: ConfidenceField = confidence.parse()?;
            let records: Vec<ScoredRecord> = jsonl::load(&scored)?;
            if records.is_empty() {
                return Err(CliError::data(format!("{} holds no scored records", scored.display())));
            }
            std::fs::create_dir_all(&out)?;
            for (name, svg) in stages::figures(&records, field) {
                write(&out.join(format!("calibration_{name}.svg")), &svg)?;
            }
        }
        Command::Pipeline {
            config,
            out_dir,
            seed,
            quota,
            depth,
            models,
            parallelism,
            cache_dir,
        } => {
            let o = Overrides {
                out_dir,
                seed,
                quota,
                depth,
                models,
                parallelism,
                cache_dir,
            };
            let summary = pipeline::load_and_run(&config, &o)?;
            println!("run directory: {}", summary.out_dir.display());
            println!("manifest: {}", summary.manifest_hash);
            println!("questions: {}, responses: {}", summary.questions, summary.responses);
            for r in &summary.calibration {
                let group: Vec<String> = r.group.iter().map(|(_, v)| v.clone()).collect();
                println!(
                    "{}: n {}, accuracy {:.4}, confidence {:.4}, bias {:.4}",
                    group.join(" / "),
                    r.n,
                    r.accuracy,
                    r.mean_confidence,
                    r.bias
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
