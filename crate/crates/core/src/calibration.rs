//! Accuracy, confidence and bias summaries, overconfidence tests, the
//! confidence gradient, replication consistency and calibration plots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::Frame;
use crate::inference::ReasoningType;
use crate::kb::Domain;
use crate::parser::{Answer, ModelResponse};
use crate::qgen::BenchmarkQuestion;
use crate::stats::{self, two_sided_p};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceField {
    /// The stated probability that the answer is correct.
    #[default]
    SelfReported,
    /// Facts confidence times reasoning confidence.
    Derived,
}

impl std::str::FromStr for ConfidenceField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "self_reported" | "self" | "answer" => Ok(ConfidenceField::SelfReported),
            "derived" => Ok(ConfidenceField::Derived),
            _ => Err(Error::InvalidArgument(format!("unknown confidence field `{s}`"))),
        }
    }
}

/// One parsed response joined with its question's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub question_id: String,
    pub model: String,
    pub domain: Domain,
    pub reasoning_type: ReasoningType,
    pub frame: Frame,
    pub temperature: f64,
    #[serde(default)]
    pub round: u32,
    pub answer: Answer,
    /// False when unanswered.
    pub correct: bool,
    pub conf_answer: Option<f64>,
    pub conf_derived: Option<f64>,
}

impl ScoredRecord {
    pub fn answered(&self) -> bool {
        self.answer != Answer::Missing
    }

    pub fn confidence(&self, field: ConfidenceField) -> Option<f64> {
        match field {
            ConfidenceField::SelfReported => self.conf_answer,
            ConfidenceField::Derived => self.conf_derived,
        }
    }

    /// (correct, confidence) when the record is a complete case.
    pub fn complete(&self, field: ConfidenceField) -> Option<(f64, f64)> {
        if !self.answered() {
            return None;
        }
        self.confidence(field).map(|c| (if self.correct { 1.0 } else { 0.0 }, c))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scored: usize,
    pub unknown_questions: Vec<String>,
}

/// Joins parsed responses with their questions.
pub fn score(parsed: &[ModelResponse], questions: &[BenchmarkQuestion], round: u32) -> (Vec<ScoredRecord>, ScoreReport) {
    let by_id: BTreeMap<&str, &BenchmarkQuestion> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut report = ScoreReport::default();
    let mut out = Vec::with_capacity(parsed.len());
    for r in parsed {
        let Some(q) = by_id.get(r.question_id.as_str()) else {
            report.unknown_questions.push(r.question_id.clone());
            continue;
        };
        out.push(ScoredRecord {
            question_id: r.question_id.clone(),
            model: r.model.clone(),
            domain: q.domain,
            reasoning_type: q.reasoning_type,
            frame: r.frame,
            temperature: r.temperature,
            round,
            answer: r.answer,
            correct: r.answer.as_bool() == Some(q.truth),
            conf_answer: r.conf_answer,
            conf_derived: r.derived_conf,
        });
    }
    if !report.unknown_questions.is_empty() {
        log::warn!("{} responses refer to unknown question ids", report.unknown_questions.len());
    }
    report.scored = out.len();
    (out, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Model,
    Domain,
    ReasoningType,
    Frame,
    Temperature,
    Round,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Model => "model",
            GroupKey::Domain => "domain",
            GroupKey::ReasoningType => "reasoning_type",
            GroupKey::Frame => "frame",
            GroupKey::Temperature => "temperature",
            GroupKey::Round => "round",
        }
    }

    fn value(self, r: &ScoredRecord) -> String {
        match self {
            GroupKey::Model => r.model.clone(),
            GroupKey::Domain => r.domain.to_string(),
            GroupKey::ReasoningType => r.reasoning_type.to_string(),
            GroupKey::Frame => r.frame.to_string(),
            GroupKey::Temperature => format!("{}", r.temperature),
            GroupKey::Round => r.round.to_string(),
        }
    }
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "model" => Ok(GroupKey::Model),
            "domain" => Ok(GroupKey::Domain),
            "reasoning_type" | "type" => Ok(GroupKey::ReasoningType),
            "frame" => Ok(GroupKey::Frame),
            "temperature" => Ok(GroupKey::Temperature),
            "round" => Ok(GroupKey::Round),
            _ => Err(Error::InvalidArgument(format!("unknown group key `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: Vec<(GroupKey, String)>,
    /// Complete cases: answered with a numeric confidence.
    pub n: usize,
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub bias: f64,
    pub sd_correct: f64,
    pub sd_confidence: f64,
    pub sd_bias: f64,
    /// All records in the group, including non-answers.
    pub n_total: usize,
    pub n_missing_answer: usize,
    /// Accuracy with non-answers scored as incorrect.
    pub accuracy_punish_non_answer: f64,
}

fn group_records<'a>(records: &'a [ScoredRecord], group_by: &[GroupKey]) -> BTreeMap<Vec<String>, Vec<&'a ScoredRecord>> {
    let mut groups: BTreeMap<Vec<String>, Vec<&ScoredRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry(group_by.iter().map(|k| k.value(r)).collect())
            .or_default()
            .push(r);
    }
    groups
}

/// Per-group accuracy, mean confidence and bias over complete cases.
/// Groups without any complete case are omitted with a warning.
pub fn summarize(records: &[ScoredRecord], group_by: &[GroupKey], field: ConfidenceField) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (values, rs) in group_records(records, group_by) {
        let complete: Vec<(f64, f64)> = rs.iter().filter_map(|r| r.complete(field)).collect();
        if complete.is_empty() {
            log::warn!("group {values:?} has no complete records; omitted");
            continue;
        }
        let correct: Vec<f64> = complete.iter().map(|c| c.0).collect();
        let conf: Vec<f64> = complete.iter().map(|c| c.1).collect();
        let diff: Vec<f64> = complete.iter().map(|c| c.1 - c.0).collect();
        let accuracy = stats::mean(&correct);
        let mean_confidence = stats::mean(&conf);
        let n_missing_answer = rs.iter().filter(|r| !r.answered()).count();
        rows.push(SummaryRow {
            group: group_by.iter().copied().zip(values).collect(),
            n: complete.len(),
            accuracy,
            mean_confidence,
            bias: mean_confidence - accuracy,
            sd_correct: stats::sample_sd(&correct),
            sd_confidence: stats::sample_sd(&conf),
            sd_bias: stats::sample_sd(&diff),
            n_total: rs.len(),
            n_missing_answer,
            accuracy_punish_non_answer: rs.iter().filter(|r| r.correct).count() as f64 / rs.len() as f64,
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverconfidenceTest {
    pub n: usize,
    pub mean_bias: f64,
    /// Heteroskedasticity-robust (HC0) standard error of the mean.
    pub robust_se: f64,
    pub t: f64,
    pub p: f64,
    /// Zero variance in the bias: the test is degenerate.
    pub degenerate: bool,
}

/// Tests whether mean(confidence − correct) differs from zero.
pub fn overconfidence_test(records: &[ScoredRecord], field: ConfidenceField) -> Result<OverconfidenceTest> {
    let d: Vec<f64> = records
        .iter()
        .filter_map(|r| r.complete(field))
        .map(|(c, p)| p - c)
        .collect();
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("overconfidence test needs at least 2 complete records, got {n}")));
    }
    let mean_bias = stats::mean(&d);
    let ss: f64 = d.iter().map(|x| (x - mean_bias).powi(2)).sum();
    let robust_se = ss.sqrt() / n as f64;
    let degenerate = ss == 0.0;
    let t = if !degenerate {
        mean_bias / robust_se
    } else if mean_bias == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(mean_bias)
    };
    Ok(OverconfidenceTest {
        n,
        mean_bias,
        robust_se,
        t,
        p: two_sided_p(t, n, n - 1),
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceLevel {
    pub confidence: f64,
    pub n: usize,
    pub correct: usize,
}

impl ConfidenceLevel {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }
}

/// Complete cases grouped by exact confidence value, ascending.
pub fn confidence_levels(records: &[ScoredRecord], field: ConfidenceField) -> Vec<ConfidenceLevel> {
    let mut levels: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for (c, p) in records.iter().filter_map(|r| r.complete(field)) {
        // Non-negative floats order the same as their bit patterns.
        let e = levels.entry(p.to_bits()).or_default();
        e.0 += 1;
        e.1 += c as usize;
    }
    levels
        .into_iter()
        .map(|(bits, (n, correct))| ConfidenceLevel {
            confidence: f64::from_bits(bits),
            n,
            correct,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientFit {
    /// Coefficient on (confidence − 1).
    pub slope: f64,
    /// Predicted accuracy at confidence 1.
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub slope_p: f64,
    pub intercept_p: f64,
    pub n: usize,
    pub r2: f64,
    pub levels: usize,
}

/// Regression of correctness on (confidence − 1), fitted on confidence
/// levels weighted by their frequency. This equals OLS on the individual
/// records; the HC0 errors are computed at the individual level from the
/// per-level counts.
pub fn fit_gradient(records: &[ScoredRecord], field: ConfidenceField) -> Result<GradientFit> {
    let levels = confidence_levels(records, field);
    if levels.len() < 2 {
        return Err(Error::Unidentified(format!(
            "{} distinct confidence level(s); the gradient needs at least 2",
            levels.len()
        )));
    }
    let n: usize = levels.iter().map(|l| l.n).sum();
    let k_total: usize = levels.iter().map(|l| l.correct).sum();

    // Weighted normal equations on (1, x) with weights n_j.
    let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for l in &levels {
        let w = l.n as f64;
        let x = l.confidence - 1.0;
        let y = l.accuracy();
        sw += w;
        swx += w * x;
        swxx += w * x * x;
        swy += w * y;
        swxy += w * x * y;
    }
    let xtx = DMatrix::from_row_slice(2, 2, &[sw, swx, swx, swxx]);
    let xtx_inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Unidentified("confidence has no variation".into()))?;
    let beta = &xtx_inv * DVector::from_vec(vec![swy, swxy]);
    let (b0, b1) = (beta[0], beta[1]);

    let mut meat = DMatrix::<f64>::zeros(2, 2);
    let mut ssr = 0.0;
    for l in &levels {
        let x = l.confidence - 1.0;
        let fitted = b0 + b1 * x;
        let k = l.correct as f64;
        let e2 = k * (1.0 - fitted).powi(2) + (l.n as f64 - k) * fitted.powi(2);
        ssr += e2;
        let xi = DVector::from_vec(vec![1.0, x]);
        meat += &xi * xi.transpose() * e2;
    }
    let v = &xtx_inv * meat * &xtx_inv;
    let ybar = k_total as f64 / n as f64;
    let sst = k_total as f64 * (1.0 - ybar).powi(2) + (n - k_total) as f64 * ybar.powi(2);
    let (intercept_se, slope_se) = (v[(0, 0)].sqrt(), v[(1, 1)].sqrt());
    let df = n - 2;
    Ok(GradientFit {
        slope: b1,
        intercept: b0,
        slope_se,
        intercept_se,
        slope_p: two_sided_p(b1 / slope_se, n, df),
        intercept_p: two_sided_p(b0 / intercept_se, n, df),
        n,
        r2: if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN },
        levels: levels.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPair {
    pub a: usize,
    pub b: usize,
    pub n: usize,
    pub mean_diff_accuracy: f64,
    pub sd_diff_accuracy: f64,
    pub mean_diff_confidence: f64,
    pub sd_diff_confidence: f64,
    /// Share of questions answered in both rounds whose yes/no answer differs.
    pub answer_change_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub rounds: usize,
    pub questions: usize,
    pub dropped_unmatched: usize,
    pub pairs: Vec<RoundPair>,
    /// Correctness pattern per question across rounds ('1', '0', or '.' for no answer).
    pub patterns: BTreeMap<String, usize>,
    /// Share of questions with the same correctness in every round.
    pub consistency_rate: f64,
}

/// Compares repeated runs of the same questions. Only question ids present
/// in every round are used.
pub fn replication_consistency(rounds: &[Vec<ScoredRecord>], field: ConfidenceField) -> Result<ReplicationReport> {
    if rounds.len() < 2 {
        return Err(Error::InvalidArgument("replication needs at least 2 rounds".into()));
    }
    let maps: Vec<BTreeMap<&str, &ScoredRecord>> = rounds
        .iter()
        .map(|r| r.iter().map(|x| (x.question_id.as_str(), x)).collect())
        .collect();
    let all: BTreeSet<&str> = maps.iter().flat_map(|m| m.keys().copied()).collect();
    let common: Vec<&str> = all
        .iter()
        .copied()
        .filter(|id| maps.iter().all(|m| m.contains_key(id)))
        .collect();
    let dropped_unmatched = all.len() - common.len();
    if dropped_unmatched > 0 {
        log::warn!("{dropped_unmatched} question ids are missing from some rounds; using the intersection");
    }
    if common.is_empty() {
        return Err(Error::InvalidArgument("rounds share no question ids".into()));
    }

    let mut pairs = Vec::new();
    for a in 0..maps.len() {
        for b in a + 1..maps.len() {
            let mut dacc = Vec::new();
            let mut dconf = Vec::new();
            let (mut both, mut changed) = (0usize, 0usize);
            for id in &common {
                let (ra, rb) = (maps[a][id], maps[b][id]);
                if ra.answered() && rb.answered() {
                    both += 1;
                    changed += (ra.answer != rb.answer) as usize;
                    dacc.push(ra.correct as u8 as f64 - rb.correct as u8 as f64);
                }
                if let (Some((_, ca)), Some((_, cb))) = (ra.complete(field), rb.complete(field)) {
                    dconf.push(ca - cb);
                }
            }
            let m = |v: &[f64]| if v.is_empty() { f64::NAN } else { stats::mean(v) };
            pairs.push(RoundPair {
                a,
                b,
                n: both,
                mean_diff_accuracy: m(&dacc),
                sd_diff_accuracy: stats::sample_sd(&dacc),
                mean_diff_confidence: m(&dconf),
                sd_diff_confidence: stats::sample_sd(&dconf),
                answer_change_rate: if both == 0 { f64::NAN } else { changed as f64 / both as f64 },
            });
        }
    }

    let mut patterns: BTreeMap<String, usize> = BTreeMap::new();
    let mut consistent = 0;
    for id in &common {
        let p: String = maps
            .iter()
            .map(|m| {
                let r = m[id];
                match (r.answered(), r.correct) {
                    (false, _) => '.',
                    (true, true) => '1',
                    (true, false) => '0',
                }
            })
            .collect();
        if p.chars().all(|c| c == '1') || p.chars().all(|c| c == '0') {
            consistent += 1;
        }
        *patterns.entry(p).or_default() += 1;
    }
    Ok(ReplicationReport {
        rounds: rounds.len(),
        questions: common.len(),
        dropped_unmatched,
        pairs,
        patterns,
        consistency_rate: consistent as f64 / common.len() as f64,
    })
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let keys: Vec<GroupKey> = rows.first().map(|r| r.group.iter().map(|g| g.0).collect()).unwrap_or_default();
    let mut header: Vec<String> = keys.iter().map(|k| k.as_str().to_string()).collect();
    header.extend(
        [
            "n",
            "accuracy",
            "mean_confidence",
            "bias",
            "sd_correct",
            "sd_confidence",
            "sd_bias",
            "n_total",
            "n_missing_answer",
            "accuracy_punish_non_answer",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.group.iter().map(|g| g.1.clone()).collect();
        rec.extend([
            r.n.to_string(),
            r.accuracy.to_string(),
            r.mean_confidence.to_string(),
            r.bias.to_string(),
            r.sd_correct.to_string(),
            r.sd_confidence.to_string(),
            r.sd_bias.to_string(),
            r.n_total.to_string(),
            r.n_missing_answer.to_string(),
            r.accuracy_punish_non_answer.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders rows as a fixed-width text table.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &mut dyn Iterator<Item = String>, out: &mut String| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut header.iter().map(|s| s.to_string()), &mut out);
    line(&mut widths.iter().map(|w| "-".repeat(*w)), &mut out);
    for r in rows {
        line(&mut r.iter().cloned(), &mut out);
    }
    out
}

pub fn summary_text(rows: &[SummaryRow]) -> String {
    let keys: Vec<&str> = rows
        .first()
        .map(|r| r.group.iter().map(|g| g.0.as_str()).collect())
        .unwrap_or_default();
    let mut header = keys.clone();
    header.extend(["N", "accuracy", "confidence", "bias", "sd(conf)", "sd(bias)", "missing"]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v: Vec<String> = r.group.iter().map(|g| g.1.clone()).collect();
            v.extend([
                r.n.to_string(),
                format!("{:.3}", r.accuracy),
                format!("{:.3}", r.mean_confidence),
                format!("{:.3}", r.bias),
                format!("{:.3}", r.sd_confidence),
                format!("{:.3}", r.sd_bias),
                r.n_missing_answer.to_string(),
            ]);
            v
        })
        .collect();
    aligned_table(&header, &body)
}

/// Scatter of accuracy against confidence level with a 45° reference line.
/// Marker area is proportional to the number of records at each level.
pub fn calibration_svg(levels: &[ConfidenceLevel], title: &str) -> String {
    const W: f64 = 480.0;
    const M: f64 = 50.0;
    let plot = W - 2.0 * M;
    let px = |v: f64| M + v * plot;
    let py = |v: f64| W - M - v * plot;
    let max_n = levels.iter().map(|l| l.n).max().unwrap_or(1).max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{W}" viewBox="0 0 {W} {W}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{W}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{v:.1}</text>"#, px(v), W - M + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{v:.1}</text>"#, M - 6.0, py(v) + 3.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">Confidence</text>"#, W / 2.0, W - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">Accuracy</text>"#,
        W / 2.0,
        W / 2.0
    );
    for l in levels {
        let r = 2.0 + 14.0 * (l.n as f64 / max_n).sqrt();
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" fill="steelblue" fill-opacity="0.6"><title>conf {:.2}, acc {:.3}, n {}</title></circle>"#,
            px(l.confidence),
            py(l.accuracy()),
            l.confidence,
            l.accuracy(),
            l.n
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(correct: bool, conf: f64) -> ScoredRecord {
        ScoredRecord {
            question_id: String::new(),
            model: "m".into(),
            domain: Domain::Math,
            reasoning_type: ReasoningType::Inverse,
            frame: Frame::Baseline,
            temperature: 0.0,
            round: 0,
            answer: Answer::Yes,
            correct,
            conf_answer: Some(conf),
            conf_derived: None,
        }
    }

    fn fixture(levels: &[(f64, usize, usize)]) -> Vec<ScoredRecord> {
        let mut out = Vec::new();
        for &(c, n, k) in levels {
            for i in 0..n {
                out.push(rec(i < k, c));
            }
        }
        out
    }

    #[test]
    fn two_record_arithmetic() {
        let rows = summarize(&[rec(true, 0.9), rec(false, 0.9)], &[], ConfidenceField::SelfReported);
        assert_eq!(rows[0].accuracy, 0.5);
        assert!((rows[0].bias - 0.4).abs() < 1e-12);
    }

    #[test]
    fn perfect_calibration_has_zero_bias() {
        let rows = summarize(&fixture(&[(1.0, 10, 10)]), &[], ConfidenceField::SelfReported);
        assert_eq!(rows[0].bias, 0.0);
        let t = overconfidence_test(&fixture(&[(1.0, 10, 10)]), ConfidenceField::SelfReported).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.t, 0.0);
    }

    #[test]
    fn constant_nonzero_bias_is_infinite_t() {
        let t = overconfidence_test(&fixture(&[(0.9, 5, 0)]), ConfidenceField::SelfReported).unwrap();
        assert!(t.degenerate && t.t.is_infinite() && t.p == 0.0);
    }

    #[test]
    fn exact_line_gradient() {
        let fit = fit_gradient(&[rec(true, 1.0), rec(false, 0.5)], ConfidenceField::SelfReported).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_level_is_unidentified() {
        assert!(matches!(
            fit_gradient(&fixture(&[(0.9, 10, 5)]), ConfidenceField::SelfReported),
            Err(Error::Unidentified(_))
        ));
    }

    #[test]
    fn non_answers_are_excluded_but_counted() {
        let mut rs = fixture(&[(0.8, 4, 2)]);
        let mut m = rec(false, 0.8);
        m.answer = Answer::Missing;
        m.conf_answer = None;
        rs.push(m);
        let row = &summarize(&rs, &[GroupKey::Model], ConfidenceField::SelfReported)[0];
        assert_eq!(row.n, 4);
        assert_eq!(row.n_missing_answer, 1);
        assert_eq!(row.accuracy, 0.5);
        assert!((row.accuracy_punish_non_answer - 0.4).abs() < 1e-12);
    }

    #[test]
    fn replication_identical_rounds() {
        let r: Vec<ScoredRecord> = (0..10)
            .map(|i| ScoredRecord {
                question_id: format!("q{i}"),
                ..rec(i % 3 == 0, 0.9)
            })
            .collect();
        let rep = replication_consistency(&vec![r.clone(); 6], ConfidenceField::SelfReported).unwrap();
        assert_eq!(rep.consistency_rate, 1.0);
        assert_eq!(rep.pairs.len(), 15);
        assert!(rep.pairs.iter().all(|p| p.mean_diff_accuracy == 0.0 && p.answer_change_rate == 0.0));
        assert_eq!(rep.patterns.get("111111"), Some(&4));
        assert_eq!(rep.patterns.get("000000"), Some(&6));
    }

    #[test]
    fn replication_change_rate_and_intersection() {
        let a: Vec<ScoredRecord> = (0..100)
            .map(|i| ScoredRecord {
                question_id: format!("q{i}"),
                ..rec(true, 0.9)
            })
            .collect();
        let mut b = a.clone();
        for r in b.iter_mut().take(2) {
            r.answer = Answer::No;
            r.correct = false;
        }
        b.pop();
        let rep = replication_consistency(&[a, b], ConfidenceField::SelfReported).unwrap();
        assert_eq!(rep.dropped_unmatched, 1);
        assert_eq!(rep.questions, 99);
        assert!((rep.pairs[0].answer_change_rate - 2.0 / 99.0).abs() < 1e-12);
    }

    #[test]
    fn svg_has_reference_line_and_points() {
        let levels = confidence_levels(&fixture(&[(0.8, 10, 5), (1.0, 40, 30)]), ConfidenceField::SelfReported);
        let svg = calibration_svg(&levels, "m & n");
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("m &amp; n"));
    }

    #[test]
    fn csv_and_text_reports() {
        let rows = summarize(&fixture(&[(0.9, 4, 2)]), &[GroupKey::Model], ConfidenceField::SelfReported);
        let csv = summary_csv(&rows).unwrap();
        assert!(csv.starts_with("model,n,accuracy"));
        let text = summary_text(&rows);
        assert!(text.lines().next().unwrap().starts_with("model"));
    }
}
