//! Stage implementations shared by the subcommands and the pipeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use calibench_core::calibration::{
    self, calibration_svg, confidence_levels, fit_gradient, overconfidence_test, summarize, summary_csv,
    summary_text, ConfidenceField, GroupKey, ScoredRecord,
};
use calibench_core::exposure::{self, run_battery, subgroup_summary, ExposureRecord, RegressionResult, HIGH_LLM_CONF};
use calibench_core::gateway::{BatchOutcome, Gateway, JobSpec, MockProfile, ProviderRegistry, RawResponse, ResponseCache};
use calibench_core::inference::{close, ClosureReport, DerivedFact, InferenceConfig};
use calibench_core::kb::{import_files, Domain, ImportReport, KnowledgeBase, PredicateMeta};
use calibench_core::parser::{parse_quality, parse_response, ModelResponse};
use calibench_core::qgen::{balance_sample, render_all, BenchmarkQuestion, SampleReport, SampleSpec};
use calibench_core::similarity::{rows_csv, score_corpus, SimFunction, SimilarityConfig};
use calibench_core::welfare::{self, CostSpec, WelfareScenario};

use crate::config::AskSection;
use crate::exit::{CliError, CliResult};

pub fn import_kb(triples: &Path, predicates: Option<&Path>, default_domain: Option<&str>) -> CliResult<(KnowledgeBase, ImportReport)> {
    let domain = default_domain.map(str::parse::<Domain>).transpose()?;
    let (kb, report) = import_files(triples, predicates, domain)?;
    for r in &report.rejected {
        log::warn!("{}:{}: {}", triples.display(), r.line, r.reason);
    }
    if !report.unregistered_predicates.is_empty() {
        log::info!("predicates without manifest entry: {}", report.unregistered_predicates.join(", "));
    }
    if kb.is_empty() {
        return Err(CliError::data(format!("no usable triples in {}", triples.display())));
    }
    Ok((kb, report))
}

pub fn derive(kb: &KnowledgeBase, depth: usize) -> CliResult<(Vec<DerivedFact>, ClosureReport)> {
    if depth == 0 {
        return Err(CliError::usage("depth must be at least 1"));
    }
    let cfg = InferenceConfig {
        max_composite_depth: depth,
        ..InferenceConfig::default()
    };
    let (facts, report) = close(kb, &cfg);
    if report.truncated {
        log::info!("closure truncated at depth {depth}");
    }
    Ok((facts, report))
}

pub fn generate(
    facts: &[DerivedFact],
    predicates: &BTreeMap<String, PredicateMeta>,
    quota: usize,
    seed: u64,
    balance_truth: bool,
) -> CliResult<(Vec<BenchmarkQuestion>, SampleReport)> {
    let (all, skipped) = render_all(facts, predicates);
    if !skipped.is_empty() {
        log::warn!("{} facts could not be rendered as questions", skipped.len());
    }
    let mut spec = SampleSpec::new(quota, seed);
    spec.balance_truth = balance_truth;
    let (sample, report) = balance_sample(&all, &spec);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if sample.is_empty() {
        return Err(CliError::data("question sample is empty"));
    }
    Ok((sample, report))
}

/// Builds a gateway whose mock providers come from `mocks`.
pub fn gateway(
    ask: &AskSection,
    mocks: &BTreeMap<String, MockProfile>,
    cache_dir: Option<PathBuf>,
    log_path: Option<PathBuf>,
    predicates: BTreeMap<String, PredicateMeta>,
) -> CliResult<Gateway> {
    let mut registry = ProviderRegistry::new();
    for (name, profile) in mocks {
        registry.register_mock(name, profile.clone())?;
    }
    for (prefix, url) in &ask.base_urls {
        registry.set_base_url(prefix, url);
    }
    if let Some(t) = ask.timeout_secs {
        registry.set_timeout(Duration::from_secs(t));
    }
    let mut gw = Gateway::new(registry);
    gw.cache = cache_dir.map(ResponseCache::new);
    gw.log_path = log_path;
    gw.predicates = predicates;
    Ok(gw)
}

pub fn job_spec(ask: &AskSection) -> JobSpec {
    let mut spec = JobSpec::new(ask.models.clone(), ask.frames.clone(), ask.temperatures.clone());
    spec.parallelism = ask.parallelism;
    spec.rate_limit = ask.rate_limit;
    spec.max_retries = ask.max_retries;
    spec
}

pub fn ask(gw: &Gateway, questions: &[BenchmarkQuestion], spec: &JobSpec) -> CliResult<BatchOutcome> {
    let out = gw.run_batch(questions, spec)?;
    log::info!(
        "{} jobs: {} live, {} cached, {} retries, {} provider errors",
        out.stats.jobs,
        out.stats.live_calls,
        out.stats.cache_hits,
        out.stats.retries,
        out.stats.provider_errors
    );
    Ok(out)
}

pub fn parse(responses: &[RawResponse]) -> Vec<ModelResponse> {
    responses.iter().map(parse_response).collect()
}

pub fn quality_csv(parsed: &[ModelResponse]) -> CliResult<String> {
    csv_of(&parse_quality(parsed))
}

pub fn csv_of<T: serde::Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(calibench_core::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub struct CalibrationOutput {
    pub scored: Vec<ScoredRecord>,
    pub summary_csv: String,
    pub summary_txt: String,
}

pub fn parse_group_keys(keys: &[String]) -> CliResult<Vec<GroupKey>> {
    keys.iter().map(|k| k.parse::<GroupKey>().map_err(CliError::from)).collect()
}

fn models(records: &[ScoredRecord]) -> Vec<String> {
    let mut m: Vec<String> = records.iter().map(|r| r.model.clone()).collect();
    m.sort();
    m.dedup();
    m
}

/// Joins, summarizes and tests calibration for every model.
pub fn calibrate(
    parsed: &[ModelResponse],
    questions: &[BenchmarkQuestion],
    round: u32,
    group_by: &[GroupKey],
    field: ConfidenceField,
) -> CliResult<CalibrationOutput> {
    let (scored, report) = calibration::score(parsed, questions, round);
    if scored.is_empty() {
        return Err(CliError::data(format!(
            "no responses match the question set ({} unknown ids)",
            report.unknown_questions.len()
        )));
    }
    let rows = summarize(&scored, group_by, field);
    let mut txt = summary_text(&rows);
    for m in models(&scored) {
        let mine: Vec<ScoredRecord> = scored.iter().filter(|r| r.model == m).cloned().collect();
        let _ = writeln!(txt, "\n{m}");
        match overconfidence_test(&mine, field) {
            Ok(t) => {
                let _ = writeln!(
                    txt,
                    "  mean bias {:.4} (robust se {:.4}, t {:.2}, p {:.4}, n {})",
                    t.mean_bias, t.robust_se, t.t, t.p, t.n
                );
            }
            Err(e) => {
                let _ = writeln!(txt, "  overconfidence test unavailable: {e}");
            }
        }
        match fit_gradient(&mine, field) {
            Ok(g) => {
                let _ = writeln!(
                    txt,
                    "  gradient slope {:.4} (se {:.4}), intercept {:.4} (se {:.4}), r2 {:.4}, levels {}",
                    g.slope, g.slope_se, g.intercept, g.intercept_se, g.r2, g.levels
                );
            }
            Err(e) => {
                let _ = writeln!(txt, "  gradient unavailable: {e}");
            }
        }
    }
    Ok(CalibrationOutput {
        summary_csv: summary_csv(&rows)?,
        summary_txt: txt,
        scored,
    })
}

/// One calibration figure per model, keyed by a file-safe model name.
pub fn figures(scored: &[ScoredRecord], field: ConfidenceField) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for m in models(scored) {
        let mine: Vec<ScoredRecord> = scored.iter().filter(|r| r.model == m).cloned().collect();
        let levels = confidence_levels(&mine, field);
        let safe: String = m
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        out.insert(safe, calibration_svg(&levels, &m));
    }
    out
}

pub fn similarity_config(threshold: f64, function: &str) -> CliResult<SimilarityConfig> {
    let cfg = SimilarityConfig {
        token_match_threshold: threshold,
        sim_function: function.parse::<SimFunction>()?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn similarity(
    questions: &[BenchmarkQuestion],
    parsed: &[ModelResponse],
    predicates: &BTreeMap<String, PredicateMeta>,
    cfg: &SimilarityConfig,
) -> CliResult<String> {
    let rows = score_corpus(questions, parsed, predicates, cfg)?;
    Ok(rows_csv(&rows)?)
}

pub struct ExposureOutput {
    pub results: Vec<RegressionResult>,
    pub csv: String,
    pub subgroups: String,
}

pub fn exposure(records: &[ExposureRecord], spec: &str) -> CliResult<ExposureOutput> {
    let results = run_battery(records, spec)?;
    let csv = exposure::results_csv(&results)?;
    let mut subgroups = String::new();
    match subgroup_summary(records, HIGH_LLM_CONF) {
        Ok(s) => {
            let _ = writeln!(
                subgroups,
                "llm threshold {:.2}, human median {:.4}, excluded without llm confidence {}",
                s.llm_threshold, s.human_median, s.excluded_without_llm_conf
            );
            let _ = writeln!(subgroups, "llm_conf human_conf n share human_acc human_bias llm_acc llm_bias");
            for c in &s.cells {
                let f = |m: &Option<exposure::MeanSd>| m.as_ref().map_or("NA".to_string(), |v| format!("{:.3}", v.mean));
                let _ = writeln!(
                    subgroups,
                    "{} {} {} {:.3} {} {} {} {}",
                    if c.high_llm { "high" } else { "low" },
                    if c.high_human { "high" } else { "low" },
                    c.n,
                    c.share,
                    f(&c.human_accuracy),
                    f(&c.human_bias),
                    f(&c.llm_accuracy),
                    f(&c.llm_bias)
                );
            }
        }
        Err(e) => {
            let _ = writeln!(subgroups, "subgroup summary unavailable: {e}");
        }
    }
    Ok(ExposureOutput { results, csv, subgroups })
}

pub fn welfare_report(p: f64, b: f64, pi: f64, cost: &str, dp: f64, alpha: f64) -> CliResult<String> {
    let cost: CostSpec = cost.parse()?;
    let s = WelfareScenario::new(p, b, pi, cost)?;
    Ok(welfare::report(&s, dp, alpha)?)
}

pub fn welfare_grid(ps: &[f64], bs: &[f64], pi: f64, cost: &str) -> CliResult<String> {
    let cost: CostSpec = cost.parse()?;
    let points = welfare::grid(ps, bs, pi, &cost)?;
    Ok(welfare::grid_csv(&points)?)
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::usage(format!("invalid range `{s}`; use start:stop:step or a,b,c"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else { return Err(bad()) };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + i as f64 * step).collect())
    } else {
        s.split(',').map(num).collect()
    }
}
