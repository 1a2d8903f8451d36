//! Random toy knowledge bases over a small entity and predicate vocabulary.

use std::collections::BTreeMap;

use calibench_core::kb::{parse_manifest, Domain, KnowledgeBase, KnowledgeTriple, PredicateMeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MANIFEST: &str = r#"
[[predicate]]
name = "loc_in"
transitive = true
negation = "not_loc_in"

[[predicate]]
name = "different_from"
symmetric = true

[[predicate]]
name = "near"
symmetric = true
transitive = true

[[predicate]]
name = "influence_by"
inverse = "influence"

[[predicate]]
name = "influence"
inverse = "influence_by"
negation = "ignored"

[[predicate]]
name = "part_of"
transitive = true
inverse = "has_part"

[[predicate]]
name = "was"
negation = "wasn't"
"#;

pub fn manifest() -> BTreeMap<String, PredicateMeta> {
    parse_manifest(MANIFEST).expect("toy manifest parses")
}

const PREDICATES: [&str; 7] = [
    "loc_in",
    "different_from",
    "near",
    "influence_by",
    "influence",
    "part_of",
    "was",
];

pub fn random_triples(seed: u64, max_triples: usize, entities: usize) -> Vec<KnowledgeTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_triples);
    (0..n)
        .map(|_| {
            let s = rng.random_range(0..entities);
            let o = rng.random_range(0..entities);
            let p = PREDICATES[rng.random_range(0..PREDICATES.len())];
            let d = Domain::ALL[rng.random_range(0..Domain::ALL.len())];
            KnowledgeTriple::new(&format!("E{s}"), p, &format!("E{o}"), d).unwrap()
        })
        .collect()
}

pub fn random_kb(seed: u64, max_triples: usize) -> KnowledgeBase {
    KnowledgeBase::from_triples(random_triples(seed, max_triples, 7), manifest())
}
