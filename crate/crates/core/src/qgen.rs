//! Yes/no question rendering and balanced sampling over domain × reasoning type.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::{DerivedFact, ReasoningType};
use crate::kb::{normalize, Domain, KnowledgeTriple, PredicateMeta};

pub const QUESTION_PREFIX: &str = "Is it true that";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    pub id: String,
    pub text: String,
    pub truth: bool,
    pub domain: Domain,
    pub reasoning_type: ReasoningType,
    pub evidence: Vec<KnowledgeTriple>,
    #[serde(skip)]
    pub source_fact: Option<DerivedFact>,
}

/// Verb phrase for a predicate: the manifest surface form when present,
/// otherwise the raw predicate with underscores as spaces.
pub fn surface_form(predicate: &str, meta: Option<&PredicateMeta>) -> Result<String> {
    let raw = meta
        .and_then(|m| m.surface.clone())
        .unwrap_or_else(|| predicate.replace('_', " "));
    let surface = normalize(&raw);
    if !surface.chars().any(char::is_alphabetic) {
        return Err(Error::Render(format!(
            "predicate `{predicate}` has no renderable surface form"
        )));
    }
    Ok(surface)
}

fn question_id(fact: &DerivedFact) -> String {
    let mut h = Sha256::new();
    for part in [
        fact.triple.subject.as_str(),
        fact.triple.predicate.as_str(),
        fact.triple.object.as_str(),
        if fact.truth { "true" } else { "false" },
        fact.reasoning_type.as_str(),
    ] {
        h.update(part.as_bytes());
        h.update([0x1f]);
    }
    format!("q{}", &hex::encode(h.finalize())[..16])
}

/// Renders `Is it true that {subject} {surface} {object}?`.
pub fn render_question(fact: &DerivedFact, meta: Option<&PredicateMeta>) -> Result<BenchmarkQuestion> {
    let t = &fact.triple;
    let surface = surface_form(&t.predicate, meta)?;
    let object = t.object.trim_end_matches(['.', '?']).trim_end();
    let evidence = fact.evidence();
    if evidence.is_empty() {
        return Err(Error::Render(format!("fact {t} has no evidence triples")));
    }
    Ok(BenchmarkQuestion {
        id: question_id(fact),
        text: format!("{QUESTION_PREFIX} {} {surface} {object}?", t.subject),
        truth: fact.truth,
        domain: t.domain,
        reasoning_type: fact.reasoning_type,
        evidence,
        source_fact: Some(fact.clone()),
    })
}

/// Renders every fact, skipping (and returning) those without a usable surface form.
pub fn render_all(
    facts: &[DerivedFact],
    predicates: &BTreeMap<String, PredicateMeta>,
) -> (Vec<BenchmarkQuestion>, Vec<Error>) {
    let mut out = Vec::with_capacity(facts.len());
    let mut skipped = Vec::new();
    for f in facts {
        match render_question(f, predicates.get(&f.triple.predicate)) {
            Ok(q) => out.push(q),
            Err(e) => skipped.push(e),
        }
    }
    (out, skipped)
}

/// The question refinement prompt with placeholders substituted literally.
pub fn emit_refinement_prompt(subject: &str, object: &str, predicate: &str) -> String {
    format!(
        "Please formulate a question of the form \"Is it true that ...\", using the following structure: \
the subject is \"{subject}\", the object is \"{object}\", and the predicate in short-hand notation is \"{predicate}\". \
Before generating the final question, please perform the following checks and adjustments:

1. Predicate Validity Check: Examine whether the given predicate \"{predicate}\" makes grammatical sense in English. \
If it doesn't, please reformulate it to ensure it follows proper English syntax and conventions. \
For example, same_instance_of might be reformulated to \"is the same instance as\" or \"is identical to\".

2. Sentence Completeness Check: Assess whether the current predicate is sufficient to generate a complete, coherent sentence. \
If not, extend it appropriately without altering its core meaning. \
For example, same_named_after could be extended to \"is named after the same person/thing as\".

After making these adjustments, generate a grammatically correct and complete question that accurately represents \
the relationship between the subject and object using the (potentially modified) predicate. \
Your final output should be a single, well-formed question in the format \"Is it true that [subject] [predicate] [object]?\", \
where [predicate] has been checked and adjusted if necessary."
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub quota_per_cell: usize,
    pub seed: u64,
    /// Split each cell's quota evenly between true and false questions.
    pub balance_truth: bool,
    /// Requested cells; `None` means every domain × native reasoning type.
    pub cells: Option<Vec<(Domain, ReasoningType)>>,
}

impl SampleSpec {
    pub fn new(quota_per_cell: usize, seed: u64) -> Self {
        Self {
            quota_per_cell,
            seed,
            balance_truth: false,
            cells: None,
        }
    }

    fn requested_cells(&self) -> Vec<(Domain, ReasoningType)> {
        self.cells.clone().unwrap_or_else(|| {
            Domain::ALL
                .iter()
                .flat_map(|d| ReasoningType::NATIVE.iter().map(move |r| (*d, *r)))
                .collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellReport {
    pub domain: Domain,
    pub reasoning_type: ReasoningType,
    pub available: usize,
    pub taken: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub cells: Vec<CellReport>,
    pub warnings: Vec<String>,
}

fn cell_rng(seed: u64, domain: Domain, rtype: ReasoningType) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(domain.as_str().as_bytes());
    h.update([0x1f]);
    h.update(rtype.as_str().as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

fn draw<'a>(rng: &mut ChaCha8Rng, pool: &[&'a BenchmarkQuestion], n: usize) -> Vec<&'a BenchmarkQuestion> {
    let n = n.min(pool.len());
    rand::seq::index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Samples `quota_per_cell` questions without replacement from each requested
/// cell. Cells with too few candidates contribute everything they have and
/// produce a warning. Output is ordered by cell, then question id.
pub fn balance_sample(questions: &[BenchmarkQuestion], spec: &SampleSpec) -> (Vec<BenchmarkQuestion>, SampleReport) {
    let mut report = SampleReport::default();
    if questions.is_empty() {
        report.warnings.push("empty candidate pool".into());
        return (Vec::new(), report);
    }

    let mut by_cell: BTreeMap<(Domain, ReasoningType), Vec<&BenchmarkQuestion>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for q in questions {
        if seen.insert(q.id.as_str()) {
            by_cell.entry((q.domain, q.reasoning_type)).or_default().push(q);
        }
    }
    for pool in by_cell.values_mut() {
        pool.sort_by(|a, b| a.id.cmp(&b.id));
    }

    let quota = spec.quota_per_cell;
    let mut out = Vec::new();
    for (domain, rtype) in spec.requested_cells() {
        let pool = by_cell.get(&(domain, rtype)).map(Vec::as_slice).unwrap_or(&[]);
        let mut rng = cell_rng(spec.seed, domain, rtype);
        let mut picked = if spec.balance_truth {
            let trues: Vec<_> = pool.iter().copied().filter(|q| q.truth).collect();
            let falses: Vec<_> = pool.iter().copied().filter(|q| !q.truth).collect();
            let want_true = quota.div_ceil(2);
            let want_false = quota / 2;
            let mut picked = draw(&mut rng, &trues, want_true);
            picked.extend(draw(&mut rng, &falses, want_false));
            if picked.len() < quota.min(pool.len()) {
                report.warnings.push(format!(
                    "{domain}/{rtype}: cannot balance truth labels ({} true, {} false available)",
                    trues.len(),
                    falses.len()
                ));
                let chosen: BTreeSet<&str> = picked.iter().map(|q| q.id.as_str()).collect();
                let rest: Vec<_> = pool.iter().copied().filter(|q| !chosen.contains(q.id.as_str())).collect();
                let need = quota.min(pool.len()) - picked.len();
                picked.extend(draw(&mut rng, &rest, need));
            }
            picked
        } else {
            draw(&mut rng, pool, quota)
        };
        if pool.len() < quota {
            report.warnings.push(format!(
                "{domain}/{rtype}: only {} candidates for quota {quota}",
                pool.len()
            ));
        }
        picked.sort_by(|a, b| a.id.cmp(&b.id));
        report.cells.push(CellReport {
            domain,
            reasoning_type: rtype,
            available: pool.len(),
            taken: picked.len(),
        });
        out.extend(picked.into_iter().cloned());
    }
    (out, report)
}

pub fn write_questions(questions: &[BenchmarkQuestion], out: impl Write) -> Result<()> {
    crate::jsonl::write_lines(questions, out)
}

pub fn save_questions(questions: &[BenchmarkQuestion], path: &Path) -> Result<()> {
    crate::jsonl::save(questions, path)
}

pub fn load_questions(path: &Path) -> Result<Vec<BenchmarkQuestion>> {
    crate::jsonl::load(path)
}
