//! Analysis of the human exposure experiment: participants answer, see an
//! LLM's answer (optionally with its confidence), and may revise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, Coefficient};

/// LLM confidence above this is "high".
pub const HIGH_LLM_CONF: f64 = 0.9;
/// The LLM-confidence binary specification keeps records above this.
pub const LLM_SUBSAMPLE_FLOOR: f64 = 0.8;
/// Centre of LLM confidence in the continuous specification.
pub const LLM_CONF_CENTER: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    LlmAnswer,
    LlmAnswerConf,
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' ', '+'], "_").as_str() {
            "control" => Ok(Arm::Control),
            "llm_answer" | "answer" => Ok(Arm::LlmAnswer),
            "llm_answer_conf" | "llm_answer__conf" | "llm_answer_confidence" | "answer_conf" => Ok(Arm::LlmAnswerConf),
            _ => Err(Error::InvalidArgument(format!("unknown arm `{s}`"))),
        }
    }
}

fn yes_no<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" | "true" | "1" => Ok(true),
        "no" | "n" | "false" | "0" => Ok(false),
        other => Err(serde::de::Error::custom(format!("expected yes/no, got `{other}`"))),
    }
}

fn arm_de<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Arm, D::Error> {
    String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
}

fn opt_string<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub participant_id: String,
    pub question_id: String,
    #[serde(deserialize_with = "arm_de")]
    pub arm: Arm,
    #[serde(deserialize_with = "yes_no")]
    pub pre_answer: bool,
    #[serde(deserialize_with = "yes_no")]
    pub post_answer: bool,
    pub pre_conf: f64,
    pub post_conf: f64,
    #[serde(deserialize_with = "yes_no")]
    pub truth: bool,
    #[serde(default, deserialize_with = "opt_string")]
    pub shown_model: Option<String>,
    /// Shown model's confidence; for Control the average across benchmark models.
    #[serde(default)]
    pub llm_conf: Option<f64>,
    /// Shown model's correctness; for Control the average across benchmark models.
    #[serde(default)]
    pub llm_accuracy: Option<f64>,
}

impl ExposureRecord {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("pre_conf", self.pre_conf)?;
        unit("post_conf", self.post_conf)?;
        if let Some(c) = self.llm_conf {
            unit("llm_conf", c)?;
        }
        if let Some(a) = self.llm_accuracy {
            unit("llm_accuracy", a)?;
        }
        if self.arm == Arm::Control && self.shown_model.is_some() {
            return Err(Error::InvalidArgument("control records cannot have a shown model".into()));
        }
        Ok(())
    }

    pub fn pre_correct(&self) -> bool {
        self.pre_answer == self.truth
    }

    pub fn post_correct(&self) -> bool {
        self.post_answer == self.truth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub d_accuracy: f64,
    pub d_bias: f64,
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Post minus pre change in correctness and in bias (confidence − correct).
pub fn deltas(r: &ExposureRecord) -> Deltas {
    let (pre, post) = (ind(r.pre_correct()), ind(r.post_correct()));
    Deltas {
        d_accuracy: post - pre,
        d_bias: (r.post_conf - post) - (r.pre_conf - pre),
    }
}

pub fn read_records(text: &str) -> Result<Vec<ExposureRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ExposureRecord>().enumerate() {
        let line = i + 2;
        let rec = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<ExposureRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_records(&text)
}

pub fn write_records(records: &[ExposureRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "participant_id",
        "question_id",
        "arm",
        "pre_answer",
        "post_answer",
        "pre_conf",
        "post_conf",
        "truth",
        "shown_model",
        "llm_conf",
        "llm_accuracy",
    ])?;
    let yn = |b: bool| if b { "yes" } else { "no" }.to_string();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let arm = match r.arm {
            Arm::Control => "control",
            Arm::LlmAnswer => "llm_answer",
            Arm::LlmAnswerConf => "llm_answer_conf",
        };
        w.write_record([
            r.participant_id.clone(),
            r.question_id.clone(),
            arm.to_string(),
            yn(r.pre_answer),
            yn(r.post_answer),
            r.pre_conf.to_string(),
            r.post_conf.to_string(),
            yn(r.truth),
            r.shown_model.clone().unwrap_or_default(),
            opt(r.llm_conf),
            opt(r.llm_accuracy),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    DeltaAccuracy,
    DeltaBias,
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::DeltaAccuracy, Outcome::DeltaBias];

    fn value(self, d: Deltas) -> f64 {
        match self {
            Outcome::DeltaAccuracy => d.d_accuracy,
            Outcome::DeltaBias => d.d_bias,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::DeltaAccuracy => "d_accuracy",
            Outcome::DeltaBias => "d_bias",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moderator {
    /// Arm indicators only.
    None,
    /// Baseline confidence above the sample median.
    HumanConfBinary,
    /// LLM confidence above 0.9, on records with LLM confidence above 0.8.
    LlmConfBinary,
    /// LLM confidence centred at 0.8.
    ContinuousLlm,
    /// Raw baseline confidence.
    ContinuousHuman,
    /// The four (LLM high/low) × (human high/low) cells; reference is high/high.
    Subsample4x4,
}

impl Moderator {
    pub fn as_str(self) -> &'static str {
        match self {
            Moderator::None => "none",
            Moderator::HumanConfBinary => "human_conf_binary",
            Moderator::LlmConfBinary => "llm_conf_binary",
            Moderator::ContinuousLlm => "continuous_llm",
            Moderator::ContinuousHuman => "continuous_human",
            Moderator::Subsample4x4 => "subsample4x4",
        }
    }

    fn needs_llm_conf(self) -> bool {
        matches!(self, Moderator::LlmConfBinary | Moderator::ContinuousLlm | Moderator::Subsample4x4)
    }
}

/// Named table specifications and the regressions they expand to.
pub fn battery(spec: &str) -> Result<Vec<Moderator>> {
    match spec.to_ascii_lowercase().as_str() {
        "fig2" => Ok(vec![Moderator::None]),
        "table3" => Ok(vec![Moderator::HumanConfBinary, Moderator::LlmConfBinary]),
        "continuous" => Ok(vec![Moderator::ContinuousLlm, Moderator::ContinuousHuman]),
        "subsample4x4" => Ok(vec![Moderator::Subsample4x4]),
        "all" => Ok(vec![
            Moderator::None,
            Moderator::HumanConfBinary,
            Moderator::LlmConfBinary,
            Moderator::ContinuousLlm,
            Moderator::ContinuousHuman,
            Moderator::Subsample4x4,
        ]),
        other => Err(Error::InvalidArgument(format!(
            "unknown exposure spec `{other}` (expected fig2, table3, continuous, subsample4x4 or all)"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub estimate: f64,
    pub se: f64,
    pub chi2: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub moderator: Moderator,
    pub outcome: Outcome,
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub r2: f64,
    pub participants: usize,
    pub questions: usize,
    /// The two-way covariance needed eigenvalue truncation.
    pub vcov_clipped: bool,
    /// LLM Answer + Conf minus LLM Answer.
    pub arm_difference: WaldTest,
}

impl RegressionResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

struct Design {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    kept: Vec<usize>,
}

fn build_design(records: &[ExposureRecord], moderator: Moderator) -> Result<Design> {
    let mut kept: Vec<usize> = (0..records.len())
        .filter(|&i| !moderator.needs_llm_conf() || records[i].llm_conf.is_some())
        .collect();
    if moderator == Moderator::LlmConfBinary {
        kept.retain(|&i| records[i].llm_conf.is_some_and(|c| c > LLM_SUBSAMPLE_FLOOR));
    }
    let dropped = records.len() - kept.len();
    if dropped > 0 {
        log::info!("{}: {dropped} records outside the estimation sample", moderator.as_str());
    }
    let human_median = median(&kept.iter().map(|&i| records[i].pre_conf).collect::<Vec<_>>());

    let arms = ["llm_answer", "llm_answer_conf"];
    let mut names: Vec<String> = vec!["const".into()];
    names.extend(arms.iter().map(|s| s.to_string()));
    let moderators: Vec<&str> = match moderator {
        Moderator::None => vec![],
        Moderator::HumanConfBinary => vec!["high_human_conf"],
        Moderator::LlmConfBinary => vec!["high_llm_conf"],
        Moderator::ContinuousLlm => vec!["llm_conf_c"],
        Moderator::ContinuousHuman => vec!["baseline_conf"],
        Moderator::Subsample4x4 => vec!["low_llm_low_human", "high_llm_low_human", "low_llm_high_human"],
    };
    names.extend(moderators.iter().map(|s| s.to_string()));
    for a in arms {
        for m in &moderators {
            names.push(format!("{a}:{m}"));
        }
    }

    let rows = kept
        .iter()
        .map(|&i| {
            let r = &records[i];
            let a = [ind(r.arm == Arm::LlmAnswer), ind(r.arm == Arm::LlmAnswerConf)];
            let llm = r.llm_conf.unwrap_or(f64::NAN);
            let high_human = r.pre_conf > human_median;
            let high_llm = llm > HIGH_LLM_CONF;
            let m: Vec<f64> = match moderator {
                Moderator::None => vec![],
                Moderator::HumanConfBinary => vec![ind(high_human)],
                Moderator::LlmConfBinary => vec![ind(high_llm)],
                Moderator::ContinuousLlm => vec![llm - LLM_CONF_CENTER],
                Moderator::ContinuousHuman => vec![r.pre_conf],
                Moderator::Subsample4x4 => vec![
                    ind(!high_llm && !high_human),
                    ind(high_llm && !high_human),
                    ind(!high_llm && high_human),
                ],
            };
            let mut row = vec![1.0, a[0], a[1]];
            row.extend(&m);
            for av in a {
                row.extend(m.iter().map(|x| av * x));
            }
            row
        })
        .collect();
    Ok(Design { names, rows, kept })
}

/// OLS of the outcome delta on arm indicators, a moderator and their
/// interactions, with errors clustered by participant and by question.
pub fn treatment_regression(records: &[ExposureRecord], moderator: Moderator, outcome: Outcome) -> Result<RegressionResult> {
    let d = build_design(records, moderator)?;
    let n = d.kept.len();
    if n == 0 {
        return Err(Error::InvalidArgument(format!("{}: empty estimation sample", moderator.as_str())));
    }
    let participants: Vec<&str> = d.kept.iter().map(|&i| records[i].participant_id.as_str()).collect();
    let questions: Vec<&str> = d.kept.iter().map(|&i| records[i].question_id.as_str()).collect();
    let n_p = participants.iter().collect::<BTreeSet<_>>().len();
    let n_q = questions.iter().collect::<BTreeSet<_>>().len();
    if n_p < 2 || n_q < 2 {
        return Err(Error::InvalidArgument(format!(
            "two-way clustering needs ≥ 2 clusters per dimension ({n_p} participants, {n_q} questions)"
        )));
    }
    let k = d.names.len();
    let x = DMatrix::from_row_iterator(n, k, d.rows.iter().flatten().copied());
    let y = DVector::from_iterator(n, d.kept.iter().map(|&i| outcome.value(deltas(&records[i]))));
    let fit = stats::ols(&x, &y, &d.names)?;
    let (vcov, clipped) = stats::two_way_vcov(&x, &fit, &participants, &questions);
    if clipped {
        log::warn!("{} {outcome}: two-way covariance was not PSD; negative eigenvalues set to zero", moderator.as_str());
    }
    let coefficients = stats::coefficients(&fit, &vcov);
    let diff = fit.beta[2] - fit.beta[1];
    let var = vcov[(1, 1)] + vcov[(2, 2)] - 2.0 * vcov[(1, 2)];
    let se = var.max(0.0).sqrt();
    let chi2 = if se > 0.0 { (diff / se).powi(2) } else { f64::NAN };
    Ok(RegressionResult {
        moderator,
        outcome,
        coefficients,
        n,
        r2: fit.r2,
        participants: n_p,
        questions: n_q,
        vcov_clipped: clipped,
        arm_difference: WaldTest {
            estimate: diff,
            se,
            chi2,
            p: stats::two_sided_p(chi2.sqrt(), usize::MAX, 0),
        },
    })
}

/// Every regression of a named specification, for both outcomes.
pub fn run_battery(records: &[ExposureRecord], spec: &str) -> Result<Vec<RegressionResult>> {
    let mut out = Vec::new();
    for m in battery(spec)? {
        for o in Outcome::ALL {
            out.push(treatment_regression(records, m, o)?);
        }
    }
    Ok(out)
}

pub fn results_csv(results: &[RegressionResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["spec", "outcome", "term", "estimate", "se", "t", "p", "n", "r2", "participants", "questions"])?;
    for r in results {
        for c in &r.coefficients {
            w.write_record([
                r.moderator.as_str().to_string(),
                r.outcome.to_string(),
                c.name.clone(),
                c.estimate.to_string(),
                c.se.to_string(),
                c.t.to_string(),
                c.p.to_string(),
                r.n.to_string(),
                r.r2.to_string(),
                r.participants.to_string(),
                r.questions.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

fn mean_sd(xs: &[f64]) -> Option<MeanSd> {
    (!xs.is_empty()).then(|| MeanSd {
        mean: stats::mean(xs),
        sd: stats::sample_sd(xs),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCell {
    pub high_llm: bool,
    pub high_human: bool,
    pub n: usize,
    pub share: f64,
    pub human_accuracy: Option<MeanSd>,
    pub human_bias: Option<MeanSd>,
    pub llm_accuracy: Option<MeanSd>,
    pub llm_bias: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub llm_threshold: f64,
    pub human_median: f64,
    /// Ordered (low, low), (low, high), (high, low), (high, high) as (LLM, human).
    pub cells: Vec<SubgroupCell>,
    pub excluded_without_llm_conf: usize,
}

/// Baseline human and LLM accuracy and bias in the four confidence cells.
/// Human measures are taken at the pre-exposure stage.
pub fn subgroup_summary(records: &[ExposureRecord], llm_threshold: f64) -> Result<SubgroupSummary> {
    if !(0.0..=1.0).contains(&llm_threshold) {
        return Err(Error::InvalidArgument(format!("LLM threshold {llm_threshold} outside [0, 1]")));
    }
    let usable: Vec<&ExposureRecord> = records.iter().filter(|r| r.llm_conf.is_some()).collect();
    let human_median = median(&usable.iter().map(|r| r.pre_conf).collect::<Vec<_>>());
    let mut cells = Vec::new();
    for high_llm in [false, true] {
        for high_human in [false, true] {
            let rs: Vec<&&ExposureRecord> = usable
                .iter()
                .filter(|r| (r.llm_conf.unwrap() > llm_threshold) == high_llm && (r.pre_conf > human_median) == high_human)
                .collect();
            let hacc: Vec<f64> = rs.iter().map(|r| ind(r.pre_correct())).collect();
            let hbias: Vec<f64> = rs.iter().map(|r| r.pre_conf - ind(r.pre_correct())).collect();
            let lacc: Vec<f64> = rs.iter().filter_map(|r| r.llm_accuracy).collect();
            let lbias: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.llm_accuracy.map(|a| r.llm_conf.unwrap() - a))
                .collect();
            cells.push(SubgroupCell {
                high_llm,
                high_human,
                n: rs.len(),
                share: if usable.is_empty() { f64::NAN } else { rs.len() as f64 / usable.len() as f64 },
                human_accuracy: mean_sd(&hacc),
                human_bias: mean_sd(&hbias),
                llm_accuracy: mean_sd(&lacc),
                llm_bias: mean_sd(&lbias),
            });
        }
    }
    Ok(SubgroupSummary {
        llm_threshold,
        human_median,
        cells,
        excluded_without_llm_conf: records.len() - usable.len(),
    })
}

pub const BASELINE_MEASURES: [&str; 4] = ["llm_accuracy", "llm_confidence", "baseline_accuracy", "baseline_confidence"];

/// Pairwise correlations of LLM accuracy, LLM confidence, baseline human
/// accuracy and baseline human confidence, on records with all four.
pub fn baseline_correlations(records: &[ExposureRecord]) -> Result<BTreeMap<(String, String), stats::Correlation>> {
    let rows: Vec<[f64; 4]> = records
        .iter()
        .filter_map(|r| {
            Some([r.llm_accuracy?, r.llm_conf?, ind(r.pre_correct()), r.pre_conf])
        })
        .collect();
    let mut out = BTreeMap::new();
    for i in 0..4 {
        for j in 0..i {
            let a: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let b: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            out.insert(
                (BASELINE_MEASURES[i].to_string(), BASELINE_MEASURES[j].to_string()),
                stats::pearson(&a, &b)?,
            );
        }
    }
    Ok(out)
}

/// One-way ANOVA of baseline confidence and accuracy across arms.
pub fn randomization_check(records: &[ExposureRecord]) -> Result<(stats::Anova, stats::Anova)> {
    let mut conf: BTreeMap<Arm, Vec<f64>> = BTreeMap::new();
    let mut acc: BTreeMap<Arm, Vec<f64>> = BTreeMap::new();
    for r in records {
        conf.entry(r.arm).or_default().push(r.pre_conf);
        acc.entry(r.arm).or_default().push(ind(r.pre_correct()));
    }
    Ok((
        stats::anova_oneway(&conf.into_values().collect::<Vec<_>>())?,
        stats::anova_oneway(&acc.into_values().collect::<Vec<_>>())?,
    ))
}
