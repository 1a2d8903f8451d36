//! Facts and reasoning similarity between a question's evidence triples and
//! the triples extracted from a model's knowledge items.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{PredicateMeta, TripleKey};
use crate::parser::{extract_triples, ModelResponse};
use crate::qgen::BenchmarkQuestion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimFunction {
    /// |A ∩ B| / |A ∪ B| over lowercase word tokens.
    #[default]
    JaccardTokens,
    /// |A ∩ B| / min(|A|, |B|).
    NormalizedOverlap,
}

impl std::str::FromStr for SimFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "jaccard" | "jaccard_tokens" => Ok(SimFunction::JaccardTokens),
            "overlap" | "normalized_overlap" => Ok(SimFunction::NormalizedOverlap),
            _ => Err(Error::InvalidArgument(format!("unknown similarity function `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub token_match_threshold: f64,
    pub sim_function: SimFunction,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            token_match_threshold: 0.5,
            sim_function: SimFunction::JaccardTokens,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.token_match_threshold) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "similarity threshold {} outside [0, 1]",
                self.token_match_threshold
            )))
        }
    }

    pub fn sim(&self, a: &str, b: &str) -> f64 {
        let (ta, tb) = (tokens(a), tokens(b));
        if ta.is_empty() && tb.is_empty() {
            return 1.0;
        }
        let shared = ta.intersection(&tb).count() as f64;
        match self.sim_function {
            SimFunction::JaccardTokens => shared / ta.union(&tb).count() as f64,
            SimFunction::NormalizedOverlap => {
                let m = ta.len().min(tb.len());
                if m == 0 {
                    0.0
                } else {
                    shared / m as f64
                }
            }
        }
    }

    fn similar(&self, a: &str, b: &str) -> (f64, bool) {
        let s = self.sim(a, b);
        (s, s >= self.token_match_threshold)
    }
}

/// Lowercase alphanumeric word tokens.
pub fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Evidence subjects of one or two words need one shared word with the
/// response subject; longer subjects need two.
pub fn subject_matches(evidence_subject: &str, response_subject: &str) -> bool {
    let ev = tokens(evidence_subject);
    let shared = ev.intersection(&tokens(response_subject)).count();
    if ev.len() <= 2 {
        shared >= 1
    } else {
        shared >= 2
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScores {
    pub fact_avg: Option<f64>,
    pub fact_max: Option<f64>,
    pub reasoning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact_missing_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_missing_reason: Option<String>,
}

fn content(t: &TripleKey) -> (&str, &str, &str) {
    (&t.subject, &t.predicate, &t.object)
}

/// Scores attributed to each evidence triple (indexed like `evidence`), or
/// `None` when no response subject matches any evidence subject.
///
/// Each response joins the subject group it overlaps most. Inside a group,
/// evidence and responses are paired greedily by object similarity; any
/// response left over is scored against every evidence object of the group
/// and keeps the higher score.
pub fn attributed_scores(evidence: &[TripleKey], response: &[TripleKey], cfg: &SimilarityConfig) -> Option<Vec<Vec<f64>>> {
    let subjects: BTreeSet<&str> = evidence.iter().map(|e| e.subject.as_str()).collect();
    let mut groups: BTreeMap<&str, Vec<&TripleKey>> = BTreeMap::new();
    for r in response {
        let rt = tokens(&r.subject);
        let best = subjects
            .iter()
            .filter(|s| subject_matches(s, &r.subject))
            .map(|s| {
                let st = tokens(s);
                let shared = st.intersection(&rt).count();
                let jac = shared as f64 / st.union(&rt).count() as f64;
                (*s, shared, jac)
            })
            .max_by(|a, b| a.1.cmp(&b.1).then(a.2.total_cmp(&b.2)).then(b.0.cmp(a.0)));
        if let Some((s, _, _)) = best {
            groups.entry(s).or_default().push(r);
        }
    }
    if groups.is_empty() {
        return None;
    }

    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); evidence.len()];
    for (subject, mut rs) in groups {
        rs.sort_by(|a, b| content(a).cmp(&content(b)));
        let mut ev: Vec<usize> = (0..evidence.len()).filter(|&i| evidence[i].subject == subject).collect();
        ev.sort_by(|&a, &b| content(&evidence[a]).cmp(&content(&evidence[b])).then(a.cmp(&b)));

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ri, r) in rs.iter().enumerate() {
            for (ei, &e) in ev.iter().enumerate() {
                pairs.push((cfg.sim(&evidence[e].object, &r.object), ei, ri));
            }
        }
        // Highest similarity first; ties by canonical position.
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut ev_used = vec![false; ev.len()];
        let mut r_used = vec![false; rs.len()];
        for (s, ei, ri) in pairs {
            if !ev_used[ei] && !r_used[ri] {
                ev_used[ei] = true;
                r_used[ri] = true;
                scores[ev[ei]].push(s);
            }
        }
        for (ri, r) in rs.iter().enumerate() {
            if r_used[ri] {
                continue;
            }
            let (best_e, best_s) = ev
                .iter()
                .map(|&e| (e, cfg.sim(&evidence[e].object, &r.object)))
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            scores[best_e].push(best_s);
        }
    }
    Some(scores)
}

/// Average and maximum facts similarity.
///
/// `avg` is the mean over evidence triples of the mean score attributed to
/// each; `max` is the mean of the per-evidence maxima. Evidence triples that
/// no response addresses count as 0 in both.
pub fn fact_similarity(
    evidence: &[TripleKey],
    response: &[TripleKey],
    cfg: &SimilarityConfig,
) -> Result<(Option<f64>, Option<f64>), String> {
    if evidence.is_empty() {
        return Err("no evidence triples".into());
    }
    let Some(scores) = attributed_scores(evidence, response, cfg) else {
        return Err("no response subject matches any evidence subject".into());
    };
    let n = evidence.len() as f64;
    let mut avg = 0.0;
    let mut max = 0.0;
    for s in &scores {
        if s.is_empty() {
            continue;
        }
        avg += s.iter().sum::<f64>() / s.len() as f64;
        max += s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok((Some(avg / n), Some(max / n)))
}

/// Mean predicate similarity over subject-matched (evidence, response)
/// pairs whose predicates or objects are similar. Pairs where neither is
/// similar are excluded.
pub fn reasoning_similarity(evidence: &[TripleKey], response: &[TripleKey], cfg: &SimilarityConfig) -> Result<f64, String> {
    if evidence.is_empty() {
        return Err("no evidence triples".into());
    }
    let mut kept = Vec::new();
    for e in evidence {
        for r in response.iter().filter(|r| subject_matches(&e.subject, &r.subject)) {
            let (ps, p_ok) = cfg.similar(&e.predicate, &r.predicate);
            let (_, o_ok) = cfg.similar(&e.object, &r.object);
            if p_ok || o_ok {
                kept.push(ps);
            }
        }
    }
    if kept.is_empty() {
        return Err("every subject-matched pair has dissimilar predicate and object".into());
    }
    // Sorting first keeps the floating-point sum independent of input order.
    kept.sort_by(f64::total_cmp);
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

pub fn score(evidence: &[TripleKey], response: &[TripleKey], cfg: &SimilarityConfig) -> SimilarityScores {
    let mut out = SimilarityScores::default();
    match fact_similarity(evidence, response, cfg) {
        Ok((a, m)) => {
            out.fact_avg = a;
            out.fact_max = m;
        }
        Err(reason) => out.fact_missing_reason = Some(reason),
    }
    match reasoning_similarity(evidence, response, cfg) {
        Ok(r) => out.reasoning = Some(r),
        Err(reason) => out.reasoning_missing_reason = Some(reason),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub question_id: String,
    pub model: String,
    pub frame: String,
    pub temperature: f64,
    pub n_evidence: usize,
    pub n_response: usize,
    pub dropped_items: usize,
    pub fact_avg: Option<f64>,
    pub fact_max: Option<f64>,
    pub reasoning: Option<f64>,
    pub missing_reason: Option<String>,
}

/// Scores every parsed response against its question's evidence.
pub fn score_corpus(
    questions: &[BenchmarkQuestion],
    parsed: &[ModelResponse],
    predicates: &BTreeMap<String, PredicateMeta>,
    cfg: &SimilarityConfig,
) -> Result<Vec<SimilarityRow>> {
    cfg.validate()?;
    let by_id: BTreeMap<&str, &BenchmarkQuestion> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut rows = Vec::new();
    for r in parsed {
        let Some(q) = by_id.get(r.question_id.as_str()) else {
            log::warn!("similarity: unknown question id {}", r.question_id);
            continue;
        };
        let evidence: Vec<TripleKey> = q.evidence.iter().map(|t| t.key()).collect();
        let ex = extract_triples(&r.knowledge_items, predicates, q.domain);
        let response: Vec<TripleKey> = ex.triples.iter().map(|t| t.key()).collect();
        let s = score(&evidence, &response, cfg);
        let missing_reason = match (&s.fact_missing_reason, &s.reasoning_missing_reason) {
            (Some(f), Some(r)) => Some(format!("facts: {f}; reasoning: {r}")),
            (Some(f), None) => Some(format!("facts: {f}")),
            (None, Some(r)) => Some(format!("reasoning: {r}")),
            (None, None) => None,
        };
        rows.push(SimilarityRow {
            question_id: r.question_id.clone(),
            model: r.model.clone(),
            frame: r.frame.to_string(),
            temperature: r.temperature,
            n_evidence: evidence.len(),
            n_response: response.len(),
            dropped_items: ex.dropped,
            fact_avg: s.fact_avg,
            fact_max: s.fact_max,
            reasoning: s.reasoning,
            missing_reason,
        });
    }
    rows.sort_by(|a, b| {
        (a.question_id.as_str(), a.model.as_str(), a.frame.as_str())
            .cmp(&(b.question_id.as_str(), b.model.as_str(), b.frame.as_str()))
            .then(a.temperature.partial_cmp(&b.temperature).unwrap_or(Ordering::Equal))
    });
    Ok(rows)
}

pub fn rows_csv(rows: &[SimilarityRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
