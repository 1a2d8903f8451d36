//! Derivation rules and the labeled closure of a knowledge base.
//!
//! Four rules are applied natively: negation, symmetry, inverse and
//! transitivity. Chaining two or more rule applications yields a composite
//! fact. The closure is computed level by level, where a fact's level is
//! the number of rule applications in its cheapest derivation (its
//! provenance length). Level `k` only combines facts whose levels add up to
//! `k - 1`, so every fact is discovered first at its minimal depth.
//!
//! Only true facts feed further rules. A negation step marks its output
//! false and ends the chain. If the same triple is both derivable as true
//! and as a negated (false) statement, the true label wins and the conflict
//! is counted in the report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, KnowledgeTriple, PredicateMeta, TripleKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReasoningType {
    Negation,
    Symmetric,
    Inverse,
    Transitive,
    Composite,
    Temporal,
}

impl ReasoningType {
    pub const ALL: [ReasoningType; 6] = [
        ReasoningType::Negation,
        ReasoningType::Symmetric,
        ReasoningType::Inverse,
        ReasoningType::Transitive,
        ReasoningType::Composite,
        ReasoningType::Temporal,
    ];

    /// The five types produced by the native rules.
    pub const NATIVE: [ReasoningType; 5] = [
        ReasoningType::Negation,
        ReasoningType::Symmetric,
        ReasoningType::Inverse,
        ReasoningType::Transitive,
        ReasoningType::Composite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningType::Negation => "Negation",
            ReasoningType::Symmetric => "Symmetric",
            ReasoningType::Inverse => "Inverse",
            ReasoningType::Transitive => "Transitive",
            ReasoningType::Composite => "Composite",
            ReasoningType::Temporal => "Temporal",
        }
    }
}

impl fmt::Display for ReasoningType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReasoningType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReasoningType::ALL
            .iter()
            .copied()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown reasoning type `{s}`")))
    }
}

/// A single derivation rule. Variants are ordered by name, which is the
/// provenance tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Pre-derived fact brought in from outside the rule engine.
    Imported,
    Inverse,
    Negation,
    Symmetric,
    Transitive,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Imported => "imported",
            Rule::Inverse => "inverse",
            Rule::Negation => "negation",
            Rule::Symmetric => "symmetric",
            Rule::Transitive => "transitive",
        }
    }

    fn reasoning_type(self) -> ReasoningType {
        match self {
            Rule::Imported => ReasoningType::Temporal,
            Rule::Inverse => ReasoningType::Inverse,
            Rule::Negation => ReasoningType::Negation,
            Rule::Symmetric => ReasoningType::Symmetric,
            Rule::Transitive => ReasoningType::Transitive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Step {
    pub rule: Rule,
    pub inputs: Vec<KnowledgeTriple>,
    pub output: KnowledgeTriple,
}

/// A triple with its ground-truth label and derivation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedFact {
    pub triple: KnowledgeTriple,
    pub truth: bool,
    pub reasoning_type: ReasoningType,
    /// Rule applications in post-order; the last step produces `triple`.
    pub provenance: Vec<Step>,
}

impl DerivedFact {
    fn from_provenance(provenance: Vec<Step>, truth: bool) -> Self {
        let last = provenance.last().expect("provenance is non-empty");
        let reasoning_type = if provenance.len() >= 2 {
            ReasoningType::Composite
        } else {
            last.rule.reasoning_type()
        };
        Self {
            triple: last.output.clone(),
            truth,
            reasoning_type,
            provenance,
        }
    }

    /// Wraps an externally derived fact, e.g. a temporal statement.
    pub fn imported(triple: KnowledgeTriple, truth: bool, reasoning_type: ReasoningType) -> Self {
        Self {
            provenance: vec![Step {
                rule: Rule::Imported,
                inputs: vec![triple.clone()],
                output: triple.clone(),
            }],
            triple,
            truth,
            reasoning_type,
        }
    }

    /// Number of rule applications in the derivation.
    pub fn depth(&self) -> usize {
        self.provenance.len()
    }

    /// Base triples the derivation starts from, in order of first use.
    pub fn evidence(&self) -> Vec<KnowledgeTriple> {
        let produced: BTreeSet<TripleKey> = self
            .provenance
            .iter()
            .filter(|s| s.rule != Rule::Imported)
            .map(|s| s.output.key())
            .collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for step in &self.provenance {
            for input in &step.inputs {
                if !produced.contains(&input.key()) && seen.insert(input.key()) {
                    out.push(input.clone());
                }
            }
        }
        out
    }
}

fn derived_triple(subject: &str, predicate: &str, object: &str, like: &KnowledgeTriple) -> KnowledgeTriple {
    KnowledgeTriple {
        subject: subject.to_string(),
        predicate: predicate.to_string(),
        object: object.to_string(),
        domain: like.domain,
    }
}

fn single_step(rule: Rule, inputs: Vec<KnowledgeTriple>, output: KnowledgeTriple, truth: bool) -> DerivedFact {
    DerivedFact::from_provenance(
        vec![Step {
            rule,
            inputs,
            output,
        }],
        truth,
    )
}

fn negation_of(t: &KnowledgeTriple, meta: &PredicateMeta) -> Option<KnowledgeTriple> {
    let neg = meta.negation.as_deref()?;
    Some(derived_triple(&t.subject, neg, &t.object, t))
}

fn symmetric_of(t: &KnowledgeTriple, meta: &PredicateMeta) -> Option<KnowledgeTriple> {
    meta.symmetric
        .then(|| derived_triple(&t.object, &t.predicate, &t.subject, t))
}

fn inverse_of(t: &KnowledgeTriple, meta: &PredicateMeta) -> Option<KnowledgeTriple> {
    let inv = meta.inverse.as_deref()?;
    Some(derived_triple(&t.object, inv, &t.subject, t))
}

fn transitive_of(a: &KnowledgeTriple, b: &KnowledgeTriple, meta: &PredicateMeta) -> Option<KnowledgeTriple> {
    let joins = meta.transitive
        && a.predicate == meta.name
        && b.predicate == meta.name
        && a.object == b.subject;
    joins.then(|| derived_triple(&a.subject, &a.predicate, &b.object, a))
}

/// `nm(s, o)` gives the false statement `nm̄(s, o)`. `None` when the
/// predicate has no negation form.
pub fn apply_negation(t: &KnowledgeTriple, meta: &PredicateMeta) -> Option<DerivedFact> {
    negation_of(t, meta).map(|out| single_step(Rule::Negation, vec![t.clone()], out, false))
}

/// `nm(s, o)` gives `nm(o, s)` for symmetric predicates.
pub fn apply_symmetric(t: &KnowledgeTriple, meta: &PredicateMeta) -> Option<DerivedFact> {
    symmetric_of(t, meta).map(|out| single_step(Rule::Symmetric, vec![t.clone()], out, true))
}

/// `nm(s, o)` gives `nm′(o, s)` where `nm′` is the declared inverse.
pub fn apply_inverse(t: &KnowledgeTriple, meta: &PredicateMeta) -> Option<DerivedFact> {
    inverse_of(t, meta).map(|out| single_step(Rule::Inverse, vec![t.clone()], out, true))
}

/// `nm(s₁, o₁)` and `nm(s₂, o₂)` with `o₁ = s₂` give `nm(s₁, o₂)`.
/// Entities join on exact equality after normalization.
pub fn apply_transitive(
    t1: &KnowledgeTriple,
    t2: &KnowledgeTriple,
    meta: &PredicateMeta,
) -> Option<DerivedFact> {
    transitive_of(t1, t2, meta)
        .map(|out| single_step(Rule::Transitive, vec![t1.clone(), t2.clone()], out, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub max_iterations: usize,
    pub max_composite_depth: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            max_iterations: 64,
            max_composite_depth: 3,
        }
    }
}

impl InferenceConfig {
    fn cap(&self) -> usize {
        self.max_iterations.min(self.max_composite_depth)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub base_count: usize,
    pub derived_count: BTreeMap<ReasoningType, usize>,
    pub iteration_count: usize,
    /// Further facts exist beyond the depth cap.
    pub truncated: bool,
    /// Negated statements dropped because the same triple is derivable as true.
    pub conflicts: usize,
}

type Provenance = Vec<Step>;

/// Orders competing derivations of equal length: rule-name sequence first,
/// then the steps themselves.
fn provenance_order(a: &Provenance, b: &Provenance) -> std::cmp::Ordering {
    let names = |p: &Provenance| p.iter().map(|s| s.rule.name()).collect::<Vec<_>>();
    names(a).cmp(&names(b)).then_with(|| a.cmp(b))
}

fn offer(best: &mut BTreeMap<TripleKey, Provenance>, key: TripleKey, prov: Provenance) {
    match best.get(&key) {
        Some(existing) if provenance_order(existing, &prov).is_le() => {}
        _ => {
            best.insert(key, prov);
        }
    }
}

struct Level {
    facts: Vec<(KnowledgeTriple, Provenance)>,
    /// (predicate, subject) -> indices into `facts`
    by_subject: BTreeMap<(String, String), Vec<usize>>,
}

impl Level {
    fn new(facts: Vec<(KnowledgeTriple, Provenance)>) -> Self {
        let mut by_subject: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (i, (t, _)) in facts.iter().enumerate() {
            by_subject
                .entry((t.predicate.clone(), t.subject.clone()))
                .or_default()
                .push(i);
        }
        Self { facts, by_subject }
    }
}

fn concat(parts: &[&Provenance], step: Step) -> Provenance {
    let mut out: Provenance = parts.iter().flat_map(|p| p.iter().cloned()).collect();
    out.push(step);
    out
}

/// Candidate true facts whose cheapest derivation has exactly `k` steps,
/// given levels `0..k`.
fn positive_candidates(
    kb: &KnowledgeBase,
    levels: &[Level],
    known: &BTreeSet<TripleKey>,
    k: usize,
) -> BTreeMap<TripleKey, Provenance> {
    let mut best = BTreeMap::new();
    for (t, prov) in &levels[k - 1].facts {
        let Some(meta) = kb.predicate(&t.predicate) else {
            continue;
        };
        for (rule, out) in [
            (Rule::Symmetric, symmetric_of(t, meta)),
            (Rule::Inverse, inverse_of(t, meta)),
        ] {
            if let Some(out) = out {
                if !known.contains(&out.key()) {
                    let step = Step {
                        rule,
                        inputs: vec![t.clone()],
                        output: out.clone(),
                    };
                    offer(&mut best, out.key(), concat(&[prov], step));
                }
            }
        }
    }
    for left in 0..k {
        let right = k - 1 - left;
        for (a, pa) in &levels[left].facts {
            let Some(meta) = kb.predicate(&a.predicate) else {
                continue;
            };
            if !meta.transitive {
                continue;
            }
            let Some(idxs) = levels[right]
                .by_subject
                .get(&(a.predicate.clone(), a.object.clone()))
            else {
                continue;
            };
            for &j in idxs {
                let (b, pb) = &levels[right].facts[j];
                if let Some(out) = transitive_of(a, b, meta) {
                    if !known.contains(&out.key()) {
                        let step = Step {
                            rule: Rule::Transitive,
                            inputs: vec![a.clone(), b.clone()],
                            output: out.clone(),
                        };
                        offer(&mut best, out.key(), concat(&[pa, pb], step));
                    }
                }
            }
        }
    }
    best
}

fn negative_candidates(
    kb: &KnowledgeBase,
    sources: &[(KnowledgeTriple, Provenance)],
) -> BTreeMap<TripleKey, Provenance> {
    let mut best = BTreeMap::new();
    for (t, prov) in sources {
        let Some(meta) = kb.predicate(&t.predicate) else {
            continue;
        };
        if let Some(out) = negation_of(t, meta) {
            let step = Step {
                rule: Rule::Negation,
                inputs: vec![t.clone()],
                output: out.clone(),
            };
            offer(&mut best, out.key(), concat(&[prov], step));
        }
    }
    best
}

fn materialize(key: &TripleKey, prov: &Provenance) -> KnowledgeTriple {
    let out = &prov.last().expect("non-empty").output;
    debug_assert_eq!(&out.key(), key);
    out.clone()
}

/// Computes the deduplicated closure of `kb` up to the configured depth.
///
/// Output is sorted by triple then truth label, and is a pure function of
/// `(kb, config)`.
pub fn close(kb: &KnowledgeBase, config: &InferenceConfig) -> (Vec<DerivedFact>, ClosureReport) {
    let cap = config.cap();
    let base: Vec<(KnowledgeTriple, Provenance)> = kb.dump().map(|t| (t, Vec::new())).collect();
    let mut known: BTreeSet<TripleKey> = base.iter().map(|(t, _)| t.key()).collect();
    let mut levels = vec![Level::new(base)];

    for k in 1..=cap {
        let found = positive_candidates(kb, &levels, &known, k);
        let facts: Vec<_> = found
            .iter()
            .map(|(key, prov)| (materialize(key, prov), prov.clone()))
            .collect();
        known.extend(found.into_keys());
        levels.push(Level::new(facts));
    }

    // Negations of every true fact that still fits under the cap.
    let mut negatives: BTreeMap<TripleKey, Provenance> = BTreeMap::new();
    let mut conflicts = 0;
    for (depth, level) in levels.iter().enumerate() {
        if depth + 1 > cap {
            break;
        }
        for (key, prov) in negative_candidates(kb, &level.facts) {
            if known.contains(&key) {
                conflicts += 1;
                continue;
            }
            // Levels arrive in increasing depth, so the first one seen is minimal.
            negatives.entry(key).or_insert(prov);
        }
    }

    // Probe one level past the cap.
    let truncated = {
        let beyond = positive_candidates(kb, &levels, &known, cap + 1);
        let neg_beyond = levels
            .get(cap)
            .map(|l| negative_candidates(kb, &l.facts))
            .unwrap_or_default();
        !beyond.is_empty()
            || neg_beyond
                .keys()
                .any(|k| !known.contains(k) && !negatives.contains_key(k))
    };

    let mut facts: Vec<DerivedFact> = levels
        .into_iter()
        .skip(1)
        .flat_map(|l| l.facts)
        .map(|(_, prov)| DerivedFact::from_provenance(prov, true))
        .chain(
            negatives
                .into_values()
                .map(|prov| DerivedFact::from_provenance(prov, false)),
        )
        .collect();
    facts.sort_by(|a, b| {
        a.triple
            .key()
            .cmp(&b.triple.key())
            .then(a.truth.cmp(&b.truth))
    });

    let mut derived_count: BTreeMap<ReasoningType, usize> =
        ReasoningType::NATIVE.iter().map(|r| (*r, 0)).collect();
    for f in &facts {
        *derived_count.entry(f.reasoning_type).or_default() += 1;
    }
    let max_depth = facts.iter().map(DerivedFact::depth).max().unwrap_or(0);
    let report = ClosureReport {
        base_count: kb.len(),
        derived_count,
        iteration_count: if truncated { cap } else { max_depth },
        truncated,
        conflicts,
    };
    (facts, report)
}

/// Writes one JSON record per line.
pub fn write_closure(facts: &[DerivedFact], mut out: impl Write) -> Result<()> {
    for f in facts {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n").map_err(|e| Error::io("<closure>", e))?;
    }
    Ok(())
}

pub fn save_closure(facts: &[DerivedFact], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_closure(facts, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_closure(path: &Path) -> Result<Vec<DerivedFact>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_closure(&text)
}

pub fn parse_closure(text: &str) -> Result<Vec<DerivedFact>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fact: DerivedFact = serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if fact.provenance.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "fact without provenance".into(),
                });
            }
            Ok(fact)
        })
        .collect()
}
