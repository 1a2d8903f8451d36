//! End-to-end run driven by a [`PipelineConfig`].
//!
//! Stages run in order; the first failure aborts the run and is reported
//! with the stage name. Every artifact is listed in `manifest.json` with its
//! SHA-256, and text reports open with a comment naming the manifest hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calibench_core::calibration::{ConfidenceField, SummaryRow};
use calibench_core::exposure::load_records;
use calibench_core::inference::write_closure;
use calibench_core::jsonl;
use calibench_core::Error;

use crate::config::PipelineConfig;
use crate::exit::{CliError, CliResult};
use crate::manifest::{hash_file, RunManifest};
use crate::stages;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What a finished run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest_hash: String,
    pub questions: usize,
    pub responses: usize,
    pub calibration: Vec<SummaryRow>,
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn write(&mut self, rel: &str, stage: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.record(rel, stage, bytes);
        Ok(())
    }

    /// Writes a text report prefixed with the manifest comment line.
    fn report(&mut self, rel: &str, stage: &str, comment: &str, body: &str) -> CliResult<()> {
        let text = self.manifest.header(comment) + body;
        self.write(rel, stage, text.as_bytes())
    }

    fn jsonl<T: serde::Serialize>(&mut self, rel: &str, stage: &str, records: &[T]) -> CliResult<()> {
        let mut buf = Vec::new();
        jsonl::write_lines(records, &mut buf)?;
        self.write(rel, stage, &buf)
    }
}

fn stage<T>(name: &str, r: CliResult<T>) -> CliResult<T> {
    r.map_err(|e| {
        log::error!("stage `{name}` failed");
        e.in_stage(name)
    })
}

fn core<T>(name: &str, r: Result<T, Error>) -> CliResult<T> {
    stage(name, r.map_err(CliError::from))
}

/// Checks inputs and provider credentials without touching the network.
pub fn preflight(cfg: &PipelineConfig) -> CliResult<()> {
    stage("config", cfg.check_inputs())?;
    let gw = stages::gateway(&cfg.ask, &cfg.mock, None, None, BTreeMap::new());
    let gw = stage("ask", gw)?;
    for m in &cfg.ask.models {
        core("ask", gw.registry.resolve(m).map(|_| ()))?;
    }
    Ok(())
}

pub fn run(cfg: &PipelineConfig) -> CliResult<RunSummary> {
    preflight(cfg)?;
    let field: ConfidenceField = stage("config", cfg.calibrate.confidence.parse().map_err(CliError::from))?;
    let group_by = stage("config", stages::parse_group_keys(&cfg.calibrate.group_by))?;

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let mut inputs = BTreeMap::new();
    for p in cfg.inputs() {
        inputs.insert(p.display().to_string(), stage("config", hash_file(&p))?);
    }
    let mut seeds = BTreeMap::from([("qgen".to_string(), cfg.seed)]);
    for (name, profile) in &cfg.mock {
        seeds.insert(format!("mock:{name}"), profile.seed);
    }
    let mut run = Run {
        dir: cfg.out_dir.clone(),
        manifest: RunManifest::new(cfg.to_toml(), inputs, seeds),
    };
    let result = stages_in_order(cfg, &mut run, field, &group_by);
    run.manifest.finished_at = Some(crate::manifest::unix_now());
    run.manifest.save(&run.dir.join(MANIFEST_FILE))?;
    result
}

fn stages_in_order(
    cfg: &PipelineConfig,
    run: &mut Run,
    field: ConfidenceField,
    group_by: &[calibench_core::calibration::GroupKey],
) -> CliResult<RunSummary> {
    log::info!("kb: importing {}", cfg.kb.triples.display());
    let (kb, import) = stage(
        "kb",
        stages::import_kb(&cfg.kb.triples, cfg.kb.predicates.as_deref(), cfg.kb.default_domain.as_deref()),
    )?;
    let kb_json = serde_json::to_vec_pretty(&kb).map_err(Error::from)?;
    stage("kb", run.write("kb.json", "kb", &kb_json))?;
    let import_json = serde_json::to_vec_pretty(&import).map_err(Error::from)?;
    stage("kb", run.write("kb_import.json", "kb", &import_json))?;

    log::info!("derive: closing {} triples at depth {}", kb.len(), cfg.derive.depth);
    let (facts, closure) = stage("derive", stages::derive(&kb, cfg.derive.depth))?;
    let mut buf = Vec::new();
    core("derive", write_closure(&facts, &mut buf))?;
    stage("derive", run.write("closure.jsonl", "derive", &buf))?;
    let closure_json = serde_json::to_vec_pretty(&closure).map_err(Error::from)?;
    stage("derive", run.write("closure_report.json", "derive", &closure_json))?;

    log::info!("qgen: quota {} per cell from {} facts", cfg.qgen.quota, facts.len());
    let (questions, sample) = stage(
        "qgen",
        stages::generate(&facts, kb.predicates(), cfg.qgen.quota, cfg.seed, cfg.qgen.balance_truth),
    )?;
    stage("qgen", run.jsonl("questions.jsonl", "qgen", &questions))?;
    let sample_json = serde_json::to_vec_pretty(&sample).map_err(Error::from)?;
    stage("qgen", run.write("sample_report.json", "qgen", &sample_json))?;

    log::info!("ask: {} questions against {}", questions.len(), cfg.ask.models.join(", "));
    let gw = stage(
        "ask",
        stages::gateway(
            &cfg.ask,
            &cfg.mock,
            Some(cfg.cache_dir()),
            Some(run.dir.join("responses.log")),
            kb.predicates().clone(),
        ),
    )?;
    let batch = stage("ask", stages::ask(&gw, &questions, &stages::job_spec(&cfg.ask)))?;
    stage("ask", run.jsonl("responses.jsonl", "ask", &batch.responses))?;

    let parsed = stages::parse(&batch.responses);
    stage("parse", run.jsonl("parsed.jsonl", "parse", &parsed))?;
    let quality = stage("parse", stages::quality_csv(&parsed))?;
    stage("parse", run.report("parse_quality.csv", "parse", "#", &quality))?;

    log::info!("calibrate: {} parsed responses", parsed.len());
    let cal = stage("calibrate", stages::calibrate(&parsed, &questions, cfg.calibrate.round, group_by, field))?;
    stage("calibrate", run.jsonl("scored.jsonl", "calibrate", &cal.scored))?;
    stage("calibrate", run.report("calibration.csv", "calibrate", "#", &cal.summary_csv))?;
    stage("calibrate", run.report("calibration.txt", "calibrate", "#", &cal.summary_txt))?;
    for (name, svg) in stages::figures(&cal.scored, field) {
        let body = with_svg_comment(&svg, &run.manifest.hash);
        stage("report", run.write(&format!("figures/calibration_{name}.svg"), "report", body.as_bytes()))?;
    }

    if let Some(sim) = &cfg.similarity {
        log::info!("similarity: scoring knowledge items");
        let scfg = stage("similarity", stages::similarity_config(sim.threshold, &sim.function))?;
        let csv = stage("similarity", stages::similarity(&questions, &parsed, kb.predicates(), &scfg))?;
        stage("similarity", run.report("similarity.csv", "similarity", "#", &csv))?;
    }

    if let Some(ex) = &cfg.exposure {
        log::info!("exposure: {} with spec {}", ex.data.display(), ex.spec);
        let records = core("exposure", load_records(&ex.data))?;
        let out = stage("exposure", stages::exposure(&records, &ex.spec))?;
        stage("exposure", run.report("exposure.csv", "exposure", "#", &out.csv))?;
        stage("exposure", run.report("exposure_subgroups.txt", "exposure", "#", &out.subgroups))?;
    }

    if let Some(w) = &cfg.welfare {
        log::info!("welfare: p {} b {} pi {} cost {}", w.p, w.b, w.pi, w.cost);
        let text = stage("welfare", stages::welfare_report(w.p, w.b, w.pi, &w.cost, w.dp, w.alpha))?;
        stage("welfare", run.report("welfare.txt", "welfare", "#", &text))?;
        if let Some(g) = &w.grid {
            let csv = stage("welfare", stages::welfare_grid(&g.p, &g.b, w.pi, &w.cost))?;
            stage("welfare", run.report("welfare_grid.csv", "welfare", "#", &csv))?;
        }
    }

    let rows = calibench_core::calibration::summarize(&cal.scored, group_by, field);
    Ok(RunSummary {
        out_dir: run.dir.clone(),
        manifest_hash: run.manifest.hash.clone(),
        questions: questions.len(),
        responses: batch.responses.len(),
        calibration: rows,
    })
}

/// Inserts an XML comment naming the manifest right after the opening tag line.
pub fn with_svg_comment(svg: &str, hash: &str) -> String {
    let comment = format!("<!-- manifest {hash} -->\n");
    match svg.find('\n') {
        Some(i) if svg.starts_with("<?xml") => format!("{}{}{}", &svg[..=i], comment, &svg[i + 1..]),
        _ => comment + svg,
    }
}

pub fn load_and_run(path: &Path, overrides: &crate::config::Overrides) -> CliResult<RunSummary> {
    let mut cfg = PipelineConfig::load(path)?;
    cfg.apply(overrides);
    run(&cfg)
}
