//! Structured extraction from raw completions: the yes/no answer, the three
//! stated probabilities, the enumerated knowledge items, and triples parsed
//! out of those items.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::{Frame, RawResponse, ResponseStatus};
use crate::kb::{Domain, KnowledgeTriple, PredicateMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    Missing,
}

impl Answer {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Answer::Yes => Some(true),
            Answer::No => Some(false),
            Answer::Missing => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFlags {
    /// Frame probability exactly 0.5; no implied answer.
    #[serde(default)]
    pub tie: bool,
    /// Keyword and position disagreed, or one item got two different values.
    #[serde(default)]
    pub item_conflict: bool,
    /// Confidence given in words rather than numbers.
    #[serde(default)]
    pub textual_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub question_id: String,
    pub model: String,
    pub frame: Frame,
    pub temperature: f64,
    pub status: ResponseStatus,
    pub answer: Answer,
    pub conf_answer: Option<f64>,
    pub conf_facts: Option<f64>,
    pub conf_reasoning: Option<f64>,
    pub knowledge_items: Vec<String>,
    pub derived_conf: Option<f64>,
    #[serde(default)]
    pub flags: ParseFlags,
}

impl ModelResponse {
    fn empty(raw: &RawResponse) -> Self {
        Self {
            question_id: raw.question_id.clone(),
            model: raw.model.clone(),
            frame: raw.frame,
            temperature: raw.temperature,
            status: raw.status,
            answer: Answer::Missing,
            conf_answer: None,
            conf_facts: None,
            conf_reasoning: None,
            knowledge_items: Vec::new(),
            derived_conf: None,
            flags: ParseFlags::default(),
        }
    }

    fn set_derived(&mut self) {
        self.derived_conf = match (self.conf_facts, self.conf_reasoning) {
            (Some(f), Some(r)) => Some(f * r),
            _ => None,
        };
    }
}

static ANSWER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)the\s+answer\s+to\s+the\s+question\s+is\s*:?\s*[*_`'\x22]*\s*(yes|no)\b").unwrap()
});
static PERCENT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(\d{1,3}(?:\.\d+)?)\s*(?:%|percent\b|per\s+cent\b)").unwrap());
static BARE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[^\w.])(\d{1,3}(?:\.\d+)?)\b").unwrap());
static ENUM_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\d+[.)]|[-*•])\s+(.+?)\s*$").unwrap());
static NUMBERED_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\d+[.)]\s+(.+?)\s*$").unwrap());
static TEXTUAL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(very\s+high|high|moderate|medium|low|very\s+low|certain|uncertain)\b").unwrap());

const ELICITATION: [&str; 4] = ["probab", "confiden", "estimate", "likelihood"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    Answer,
    Facts,
    Reasoning,
}

fn classify(context: &str) -> Option<Item> {
    let c = context.to_lowercase();
    if c.contains("fact") {
        Some(Item::Facts)
    } else if c.contains("reason") {
        Some(Item::Reasoning)
    } else if c.contains("answer") {
        Some(Item::Answer)
    } else {
        None
    }
}

fn has_elicitation(line: &str) -> bool {
    let l = line.to_lowercase();
    ELICITATION.iter().any(|k| l.contains(k))
}

/// Converts a matched number to a probability. Percent-marked values are
/// divided by 100; bare decimals up to 1 are already fractions.
fn to_probability(num: &str, explicit_percent: bool) -> Option<f64> {
    let v: f64 = num.parse().ok()?;
    let p = if !explicit_percent && num.contains('.') && v <= 1.0 { v } else { v / 100.0 };
    (0.0..=1.0).contains(&p).then_some(p)
}

struct Candidate {
    value: f64,
    item: Option<Item>,
}

/// Probability values in one line, each with the text leading up to it.
fn line_candidates(line: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut prev = 0;
    let explicit: Vec<_> = PERCENT_RE.captures_iter(line).collect();
    if !explicit.is_empty() {
        for cap in explicit {
            let m = cap.get(0).unwrap();
            if let Some(value) = to_probability(&cap[1], true) {
                out.push(Candidate {
                    value,
                    item: classify(&line[prev..m.end()]),
                });
            }
            prev = m.end();
        }
    } else if has_elicitation(line) {
        for cap in BARE_RE.captures_iter(line) {
            let m = cap.get(1).unwrap();
            if let Some(value) = to_probability(m.as_str(), false) {
                out.push(Candidate {
                    value,
                    item: classify(&line[prev..m.end()]),
                });
            }
            prev = m.end();
        }
    }
    out
}

/// Finds the three stated probabilities. Values are matched to items by
/// keyword first, then by order for the unlabeled remainder.
fn extract_confidences(text: &str, flags: &mut ParseFlags) -> [Option<f64>; 3] {
    let mut labeled: BTreeMap<Item, f64> = BTreeMap::new();
    let mut unlabeled = Vec::new();
    let mut keyword_order = Vec::new();
    for line in text.lines() {
        let probability_line = has_elicitation(line) || classify(line).is_some();
        if !probability_line {
            continue;
        }
        let cands = line_candidates(line);
        if cands.is_empty() && has_elicitation(line) && TEXTUAL_RE.is_match(line) {
            flags.textual_confidence = true;
        }
        for c in cands {
            match c.item {
                Some(item) => {
                    keyword_order.push(item);
                    match labeled.get(&item) {
                        Some(v) if (*v - c.value).abs() > 1e-12 => flags.item_conflict = true,
                        Some(_) => {}
                        None => {
                            labeled.insert(item, c.value);
                        }
                    }
                }
                None => unlabeled.push(c.value),
            }
        }
    }
    if labeled.len() >= 2 && !keyword_order.is_sorted() {
        flags.item_conflict = true;
    }
    let mut rest = unlabeled.into_iter();
    let mut out = [None; 3];
    for (slot, item) in out.iter_mut().zip([Item::Answer, Item::Facts, Item::Reasoning]) {
        *slot = labeled.get(&item).copied().or_else(|| rest.next());
    }
    out
}

/// Enumerated declarative sentences, preferring the list under a
/// "knowledge" heading.
pub fn knowledge_items(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut blocks: Vec<(bool, Vec<String>)> = Vec::new();
    let mut after_heading = false;
    let mut current: Option<(bool, Vec<String>)> = None;
    for line in &lines {
        if let Some(cap) = NUMBERED_RE.captures(line) {
            current
                .get_or_insert_with(|| (after_heading, Vec::new()))
                .1
                .push(cap[1].to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if let Some(b) = current.take() {
            blocks.push(b);
        }
        after_heading = line.to_lowercase().contains("knowledge");
    }
    if let Some(b) = current.take() {
        blocks.push(b);
    }
    let is_probability_block = |items: &[String]| items.iter().any(|s| s.contains('%') || has_elicitation(s));
    blocks
        .iter()
        .find(|(h, items)| *h && !is_probability_block(items))
        .or_else(|| blocks.iter().find(|(_, items)| !is_probability_block(items)))
        .map(|(_, items)| items.clone())
        .unwrap_or_default()
}

/// Parses a response to the five-step prompt.
pub fn parse_baseline(raw: &RawResponse) -> ModelResponse {
    let mut out = ModelResponse::empty(raw);
    if raw.status == ResponseStatus::ProviderError {
        return out;
    }
    let text = raw.text.as_str();
    if let Some(cap) = ANSWER_RE.captures(text) {
        out.answer = if cap[1].eq_ignore_ascii_case("yes") { Answer::Yes } else { Answer::No };
    }
    let [a, f, r] = extract_confidences(text, &mut out.flags);
    out.conf_answer = a;
    out.conf_facts = f;
    out.conf_reasoning = r;
    out.knowledge_items = knowledge_items(text);
    out.set_derived();
    out
}

/// Implied answer and confidence from a stated probability `q` that the
/// framed answer is correct.
pub fn implied_from_frame(framed: bool, q: f64) -> (Answer, Option<f64>) {
    if q > 0.5 {
        (Answer::from_bool(framed), Some(q))
    } else if q < 0.5 {
        (Answer::from_bool(!framed), Some(1.0 - q))
    } else {
        (Answer::Missing, None)
    }
}

/// Parses a response to a direct-probability frame.
pub fn parse_frame(raw: &RawResponse) -> ModelResponse {
    let mut out = ModelResponse::empty(raw);
    let Some(framed) = raw.frame.framed_answer() else {
        return parse_baseline(raw);
    };
    if raw.status == ResponseStatus::ProviderError {
        return out;
    }
    // The final stated estimate wins; prefer lines naming the correct answer.
    let mut preferred = None;
    let mut fallback = None;
    for line in raw.text.lines() {
        let lower = line.to_lowercase();
        let cands = line_candidates(line);
        if let Some(c) = cands.last() {
            if lower.contains("correct answer") && has_elicitation(line) {
                preferred = Some(c.value);
            } else if has_elicitation(line) {
                fallback = Some(c.value);
            }
        } else if has_elicitation(line) && TEXTUAL_RE.is_match(line) {
            out.flags.textual_confidence = true;
        }
    }
    if let Some(q) = preferred.or(fallback) {
        let (answer, conf) = implied_from_frame(framed, q);
        out.answer = answer;
        out.conf_answer = conf;
        out.flags.tie = answer == Answer::Missing;
    }
    out
}

/// Dispatches on the response's frame.
pub fn parse_response(raw: &RawResponse) -> ModelResponse {
    match raw.frame {
        Frame::Baseline => parse_baseline(raw),
        Frame::YesFrame | Frame::NoFrame => parse_frame(raw),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub triples: Vec<KnowledgeTriple>,
    pub dropped: usize,
}

const AUXILIARIES: [&str; 16] = [
    "is", "are", "was", "were", "has", "have", "had", "does", "did", "will", "can", "could", "would", "should", "may",
    "might",
];
const PREPOSITIONS: [&str; 12] = ["in", "of", "by", "to", "from", "at", "on", "with", "as", "for", "into", "than"];
const DETERMINERS: [&str; 3] = ["the", "a", "an"];
const CONNECTORS: [&str; 5] = ["of", "the", "de", "von", "van"];

fn clean_phrase(s: &str) -> String {
    crate::kb::normalize(s.trim().trim_end_matches(['.', ';', ',', '!', '?']).trim())
}

fn find_word_phrase(haystack_lower: &str, phrase: &str) -> Option<usize> {
    let mut start = 0;
    while let Some(pos) = haystack_lower[start..].find(phrase) {
        let at = start + pos;
        let before_ok = at == 0 || !haystack_lower[..at].ends_with(|c: char| c.is_alphanumeric());
        let end = at + phrase.len();
        let after_ok = end == haystack_lower.len() || !haystack_lower[end..].starts_with(|c: char| c.is_alphanumeric());
        if before_ok && after_ok {
            return Some(at);
        }
        start = at + phrase.len().max(1);
    }
    None
}

fn pivot_split(sentence: &str, pivots: &[(String, String)]) -> Option<(String, String, String)> {
    let lower = sentence.to_lowercase();
    for (surface, name) in pivots {
        if let Some(at) = find_word_phrase(&lower, surface) {
            let subject = clean_phrase(&sentence[..at]);
            let object = clean_phrase(&sentence[at + surface.len()..]);
            if !subject.is_empty() && !object.is_empty() {
                return Some((subject, name.clone(), object));
            }
        }
    }
    None
}

fn first_verb_split(sentence: &str) -> Option<(String, String, String)> {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    let starts_upper = |t: &str| t.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit());
    let lower = |t: &str| t.to_lowercase();

    let mut i = 0;
    if tokens.first().is_some_and(|t| starts_upper(t) && !AUXILIARIES.contains(&lower(t).as_str())) {
        while i < tokens.len() {
            let t = tokens[i];
            let name_word = starts_upper(t) && (i == 0 || !AUXILIARIES.contains(&lower(t).as_str()));
            let connector = CONNECTORS.contains(&t) && tokens.get(i + 1).is_some_and(|n| starts_upper(n));
            if name_word || connector {
                i += 1;
            } else {
                break;
            }
        }
    } else {
        i = tokens.iter().position(|t| AUXILIARIES.contains(&lower(t).as_str()))?;
    }
    if i == 0 || i >= tokens.len() {
        return None;
    }
    let verb_start = i;
    let first = lower(tokens[i]);
    i += 1;
    if AUXILIARIES.contains(&first.as_str()) {
        if let Some(next) = tokens.get(i) {
            let n = lower(next);
            if !starts_upper(next) && !DETERMINERS.contains(&n.as_str()) && !PREPOSITIONS.contains(&n.as_str()) {
                i += 1;
            }
        }
    }
    if let Some(next) = tokens.get(i) {
        if PREPOSITIONS.contains(&lower(next).as_str()) && i > verb_start + 1 {
            i += 1;
        }
    }
    if i >= tokens.len() {
        return None;
    }
    let verb = tokens[verb_start..i]
        .iter()
        .map(|t| lower(t).trim_matches(|c: char| !c.is_alphanumeric() && c != '\'').to_string())
        .collect::<Vec<_>>()
        .join("_");
    if !verb.chars().any(char::is_alphabetic) {
        return None;
    }
    let subject = clean_phrase(&tokens[..verb_start].join(" "));
    let object = clean_phrase(&tokens[i..].join(" "));
    (!subject.is_empty() && !object.is_empty()).then_some((subject, verb, object))
}

/// Splits each knowledge item into (subject, predicate, object), pivoting on
/// manifest surface forms (longest first) and otherwise on the first verb.
pub fn extract_triples(
    items: &[String],
    predicates: &BTreeMap<String, PredicateMeta>,
    domain: Domain,
) -> Extraction {
    let mut pivots: Vec<(String, String)> = Vec::new();
    for (name, meta) in predicates {
        if let Some(s) = &meta.surface {
            pivots.push((crate::kb::normalize(&s.to_lowercase()), name.clone()));
        }
        let raw = name.replace('_', " ").to_lowercase();
        if raw.contains(' ') {
            pivots.push((raw, name.clone()));
        }
    }
    pivots.retain(|(s, _)| !s.is_empty());
    pivots.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.cmp(b)));

    let mut out = Extraction::default();
    for item in items {
        let sentence = ENUM_RE
            .captures(item)
            .map(|c| c[1].to_string())
            .unwrap_or_else(|| item.clone());
        let split = pivot_split(&sentence, &pivots).or_else(|| first_verb_split(&sentence));
        match split.and_then(|(s, p, o)| KnowledgeTriple::new(&s, &p, &o, domain).ok()) {
            Some(t) => out.triples.push(t),
            None => out.dropped += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseQualityRow {
    pub model: String,
    pub frame: Frame,
    pub temperature: f64,
    pub total: usize,
    pub ok: usize,
    pub truncated: usize,
    pub provider_error: usize,
    pub answered: usize,
    pub answer_missing: usize,
    pub confidence_missing: usize,
    /// Share of all slots without a usable answer.
    pub missing_rate: f64,
}

/// Missing-answer and missing-confidence rates per (model, frame, temperature).
pub fn parse_quality(parsed: &[ModelResponse]) -> Vec<ParseQualityRow> {
    let mut groups: BTreeMap<(String, Frame, u64), Vec<&ModelResponse>> = BTreeMap::new();
    for r in parsed {
        groups
            .entry((r.model.clone(), r.frame, r.temperature.to_bits()))
            .or_default()
            .push(r);
    }
    let mut rows: Vec<ParseQualityRow> = groups
        .into_iter()
        .map(|((model, frame, t), rs)| {
            let count = |f: &dyn Fn(&ModelResponse) -> bool| rs.iter().filter(|r| f(r)).count();
            let answered = count(&|r| r.answer != Answer::Missing);
            let total = rs.len();
            ParseQualityRow {
                model,
                frame,
                temperature: f64::from_bits(t),
                total,
                ok: count(&|r| r.status == ResponseStatus::Ok),
                truncated: count(&|r| r.status == ResponseStatus::Truncated),
                provider_error: count(&|r| r.status == ResponseStatus::ProviderError),
                answered,
                answer_missing: total - answered,
                confidence_missing: count(&|r| r.conf_answer.is_none()),
                missing_rate: (total - answered) as f64 / total as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.model.as_str(), a.frame)
            .cmp(&(b.model.as_str(), b.frame))
            .then(a.temperature.total_cmp(&b.temperature))
    });
    rows
}
