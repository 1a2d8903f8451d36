//! Constructed datasets with known answers.

use std::collections::BTreeMap;

use calibench_core::calibration::ScoredRecord;
use calibench_core::exposure::{Arm, ExposureRecord};
use calibench_core::gateway::Frame;
use calibench_core::inference::{close, DerivedFact, InferenceConfig, ReasoningType};
use calibench_core::kb::{parse_manifest, Domain, KnowledgeBase, KnowledgeTriple, PredicateMeta, TripleKey};
use calibench_core::parser::Answer;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::toy_kb;

pub fn scored(i: usize, correct: bool, conf: f64) -> ScoredRecord {
    ScoredRecord {
        question_id: format!("q{i}"),
        model: "fixture".into(),
        domain: Domain::ALL[i % Domain::ALL.len()],
        reasoning_type: ReasoningType::NATIVE[i % ReasoningType::NATIVE.len()],
        frame: Frame::Baseline,
        temperature: 0.0,
        round: 0,
        answer: Answer::Yes,
        correct,
        conf_answer: Some(conf),
        conf_derived: None,
    }
}

/// 100 answers, 35 correct; 60 at confidence 1.0 and 40 at 0.85 (mean 0.94).
pub fn gpt35_records() -> Vec<ScoredRecord> {
    (0..100)
        .map(|i| scored(i, i % 20 < 7, if i < 60 { 1.0 } else { 0.85 }))
        .collect()
}

/// Confidence levels whose accuracies lie exactly on 0.79 + 2.44·(c − 1):
/// 79/100 at 1.0, 273/500 at 0.9, 151/500 at 0.8.
pub fn gpt4o_records() -> Vec<ScoredRecord> {
    let mut out = Vec::new();
    for (conf, n, k) in [(1.0, 100, 79), (0.9, 500, 273), (0.8, 500, 151)] {
        for j in 0..n {
            out.push(scored(out.len(), j < k, conf));
        }
    }
    out
}

/// Confidence uniform on {0, 0.1, …, 1}; correct with probability equal to it.
pub fn calibrated_records(n: usize, seed: u64) -> Vec<ScoredRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let conf = rng.random_range(0..=10) as f64 / 10.0;
            scored(i, rng.random::<f64>() < conf, conf)
        })
        .collect()
}

pub const HUMAN_TERMS: [&str; 6] = [
    "const",
    "llm_answer",
    "llm_answer_conf",
    "high_human_conf",
    "llm_answer:high_human_conf",
    "llm_answer_conf:high_human_conf",
];

/// Planted Δaccuracy coefficients, in `HUMAN_TERMS` order.
pub const PLANTED_ACC: [f64; 6] = [0.003, 0.086, 0.119, 0.001, -0.064, -0.091];
/// Planted Δbias coefficients, in `HUMAN_TERMS` order.
pub const PLANTED_BIAS: [f64; 6] = [0.018, 0.070, 0.141, -0.018, -0.063, -0.124];

const CELL: usize = 2000;

fn cell_mean(c: &[f64; 6], arm: Arm, high: bool) -> f64 {
    let (la, lac) = (arm == Arm::LlmAnswer, arm == Arm::LlmAnswerConf);
    let h = high as u8 as f64;
    c[0] + c[1] * la as u8 as f64 + c[2] * lac as u8 as f64 + c[3] * h + c[4] * h * la as u8 as f64 + c[5] * h * lac as u8 as f64
}

/// 12,000 records in six arm × confidence cells of 2,000, built so each
/// cell's mean Δaccuracy and Δbias equal the planted model exactly. Low
/// baseline confidence lies in [0.5, 0.6], high in [0.7, 0.85], so the
/// median split recovers the cells. Participants see 20 questions each, all
/// in one arm; questions are drawn from a pool of 100.
pub fn planted_exposure(acc: &[f64; 6], bias: &[f64; 6], seed: u64) -> Vec<ExposureRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (ai, arm) in [Arm::Control, Arm::LlmAnswer, Arm::LlmAnswerConf].into_iter().enumerate() {
        let mut arm_records = Vec::new();
        for high in [false, true] {
            let m_acc = cell_mean(acc, arm, high);
            let m_conf = cell_mean(bias, arm, high) + m_acc;
            let net = m_acc * CELL as f64;
            assert!((net - net.round()).abs() < 1e-9, "cell mean must be a multiple of 1/{CELL}");
            let worsen = 40usize;
            let improve = (net.round() as i64 + worsen as i64) as usize;
            let mut flips: Vec<i8> = (0..CELL / 2)
                .map(|k| if k < improve { 1 } else { 0 })
                .chain((0..CELL / 2).map(|k| if k < worsen { -1 } else { 0 }))
                .collect();
            // First half starts wrong, second half right; shuffle within halves.
            flips[..CELL / 2].shuffle(&mut rng);
            flips[CELL / 2..].shuffle(&mut rng);
            for (k, flip) in flips.into_iter().enumerate() {
                let pre_correct = k >= CELL / 2;
                let post_correct = match flip {
                    1 => true,
                    -1 => false,
                    _ => pre_correct,
                };
                let truth = rng.random::<bool>();
                let pre_conf = if high { rng.random_range(0.7..=0.85) } else { rng.random_range(0.5..=0.6) };
                // Zero-sum noise over the cell.
                let noise = 0.04 * ((k % 5) as f64 - 2.0);
                let post_conf = pre_conf + m_conf + noise;
                arm_records.push(ExposureRecord {
                    participant_id: String::new(),
                    question_id: format!("Q{}", rng.random_range(0..100)),
                    arm,
                    pre_answer: if pre_correct { truth } else { !truth },
                    post_answer: if post_correct { truth } else { !truth },
                    pre_conf,
                    post_conf,
                    truth,
                    shown_model: (arm != Arm::Control).then(|| "fixture-llm".into()),
                    llm_conf: Some(rng.random_range(0.6..1.0)),
                    llm_accuracy: Some(rng.random_range(0..=1) as f64),
                });
            }
        }
        arm_records.shuffle(&mut rng);
        for (k, r) in arm_records.iter_mut().enumerate() {
            r.participant_id = format!("P{ai}-{}", k / 20);
        }
        out.extend(arm_records);
    }
    out
}

/// Small random experiment for covariance checks: `n` records over a few
/// participants (arm fixed per participant) and questions.
pub fn small_exposure(n: usize, participants: usize, questions: usize, seed: u64) -> Vec<ExposureRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arms = [Arm::Control, Arm::LlmAnswer, Arm::LlmAnswerConf];
    (0..n)
        .map(|i| {
            let p = i % participants;
            let arm = arms[p % 3];
            let truth = rng.random::<bool>();
            let pre_conf: f64 = rng.random_range(0.5..1.0);
            ExposureRecord {
                participant_id: format!("P{p}"),
                question_id: format!("Q{}", rng.random_range(0..questions)),
                arm,
                pre_answer: rng.random::<bool>(),
                post_answer: if rng.random::<f64>() < 0.7 { truth } else { !truth },
                pre_conf,
                post_conf: (pre_conf + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0),
                truth,
                shown_model: (arm != Arm::Control).then(|| "m".into()),
                llm_conf: Some(rng.random_range(0.6..1.0)),
                llm_accuracy: Some(rng.random_range(0..=1) as f64),
            }
        })
        .collect()
}

pub const MURAKAMI_MANIFEST: &str = r#"
[[predicate]]
name = "did not win"
negation = "won"

[[predicate]]
name = "different_from"
symmetric = true

[[predicate]]
name = "influence_by"
inverse = "influence"

[[predicate]]
name = "influence"
inverse = "influence_by"

[[predicate]]
name = "locate_in"
transitive = true
"#;

pub fn murakami_kb() -> KnowledgeBase {
    let t = |s: &str, p: &str, o: &str, d: Domain| KnowledgeTriple::new(s, p, o, d).unwrap();
    KnowledgeBase::from_triples(
        [
            t("Haruki Murakami", "did not win", "the Nobel Prize in Literature in 2016", Domain::ALL[0]),
            t("Haruki Murakami", "different_from", "Haruki Uemura", Domain::ALL[0]),
            t("Haruki Murakami", "influence_by", "Richard Brautigan", Domain::ALL[0]),
            t("Haruki Murakami", "locate_in", "Kyoto", Domain::ALL[0]),
            t("Kyoto", "locate_in", "Japan", Domain::ALL[0]),
        ],
        parse_manifest(MURAKAMI_MANIFEST).unwrap(),
    )
}

/// A closure with at least two facts of every native reasoning type in
/// every domain.
pub fn sampling_closure() -> (Vec<DerivedFact>, BTreeMap<String, PredicateMeta>) {
    let mut triples = Vec::new();
    for (i, d) in Domain::ALL.iter().enumerate() {
        let e = |x: &str| format!("{x} entity {i}");
        for (s, p, o) in [
            ("a", "loc_in", "b"),
            ("b", "loc_in", "c"),
            ("c", "loc_in", "d"),
            ("a", "different_from", "e"),
            ("b", "different_from", "f"),
            ("a", "influence_by", "g"),
            ("b", "influence_by", "h"),
            ("a", "was", "k"),
        ] {
            triples.push(KnowledgeTriple::new(&e(s), p, &e(o), *d).unwrap());
        }
    }
    let kb = KnowledgeBase::from_triples(triples, toy_kb::manifest());
    let (facts, _) = close(&kb, &InferenceConfig::default());
    (facts, toy_kb::manifest())
}

pub fn key(s: &str, p: &str, o: &str) -> TripleKey {
    TripleKey {
        subject: s.into(),
        predicate: p.into(),
        object: o.into(),
    }
}

/// A similarity case with scores worked out by hand.
pub struct Trace {
    pub name: &'static str,
    pub evidence: Vec<TripleKey>,
    pub response: Vec<TripleKey>,
    pub fact_avg: f64,
    pub fact_max: f64,
    pub reasoning: f64,
}

/// Hand-traced cases under Jaccard word similarity with threshold 0.5.
pub fn similarity_traces() -> Vec<Trace> {
    vec![
        // Group "Murakami": E1 Kyoto, E2 Richard Brautigan; responses Kyoto (1
        // with E1), Brautigan (1/2 with E2), Kyoto Prefecture (1/2 with E1,
        // left over after pairing, keeps the higher score). Group "Kyoto":
        // Japan vs Japan = 1.
        //   per evidence: E1 [1, 1/2], E2 [1/2], E3 [1]
        //   avg = (3/4 + 1/2 + 1)/3 = 3/4;  max = (1 + 1/2 + 1)/3 = 5/6
        // Reasoning pairs kept: E1·R1 locate_in/lived in 1/3 (object 1),
        // E1·R3 1/3 (object 1/2), E2·R2 influence_by/inspired by 1/3 (object
        // 1/2), E3·R4 locate_in/locate in 1. Others have predicate and object
        // below 0.5. Mean = (1/3·3 + 1)/4 = 1/2.
        Trace {
            name: "three evidence triples, two subjects, one extra response",
            evidence: vec![
                key("Murakami", "locate_in", "Kyoto"),
                key("Murakami", "influence_by", "Richard Brautigan"),
                key("Kyoto", "locate_in", "Japan"),
            ],
            response: vec![
                key("Haruki Murakami", "lived in", "Kyoto"),
                key("Murakami", "inspired by", "Brautigan"),
                key("Murakami", "lived in", "Kyoto Prefecture"),
                key("Kyoto", "locate in", "Japan"),
            ],
            fact_avg: 0.75,
            fact_max: 5.0 / 6.0,
            reasoning: 0.5,
        },
        // Four-word subject needs two shared words: "Great Wall" qualifies.
        // E1 Northern China vs China = 1/2; E2 Ming Dynasty is unaddressed = 0.
        //   avg = max = (1/2 + 0)/2 = 1/4
        // Reasoning: E1·R1 locate_in/located in = 1/3 kept via object 1/2;
        // E2·R1 build_during/located in = 0 with object 0, excluded.
        Trace {
            name: "multi-word subject with an unaddressed evidence triple",
            evidence: vec![
                key("Great Wall of China", "locate_in", "Northern China"),
                key("Great Wall of China", "build_during", "Ming Dynasty"),
            ],
            response: vec![key("Great Wall", "located in", "China")],
            fact_avg: 0.25,
            fact_max: 0.25,
            reasoning: 1.0 / 3.0,
        },
    ]
}

const WORDS: [&str; 12] = [
    "north", "river", "city", "king", "war", "gold", "blue", "stone", "tower", "queen", "port", "hill",
];

/// Random evidence and response sets over a shared small vocabulary.
pub fn random_similarity_case(rng: &mut ChaCha8Rng) -> (Vec<TripleKey>, Vec<TripleKey>) {
    let phrase = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(1..=3);
        (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
    };
    let subjects = ["Alpha Town", "Beta", "Gamma Delta Port"];
    let ev: Vec<TripleKey> = (0..rng.random_range(1..=4))
        .map(|_| key(subjects[rng.random_range(0..3)], &phrase(rng), &phrase(rng)))
        .collect();
    let rs: Vec<TripleKey> = (0..rng.random_range(1..=6))
        .map(|_| {
            let s = if rng.random::<f64>() < 0.8 { subjects[rng.random_range(0..3)] } else { "Omega" };
            key(s, &phrase(rng), &phrase(rng))
        })
        .collect();
    (ev, rs)
}

/// Evidence whose objects and predicates use disjoint vocabularies across
/// triples, so responses copied from it pair unambiguously.
pub fn disjoint_evidence(rng: &mut ChaCha8Rng, n: usize) -> Vec<TripleKey> {
    let subjects = ["Alpha Town", "Beta"];
    (0..n)
        .map(|i| {
            let words = |tag: &str, rng: &mut ChaCha8Rng| {
                (0..rng.random_range(2..=4)).map(|w| format!("{tag}{i}w{w}")).collect::<Vec<_>>().join(" ")
            };
            key(subjects[i % 2], &words("p", rng), &words("o", rng))
        })
        .collect()
}

/// Deletes one random word from a random response predicate or object.
/// Returns false when nothing was left to delete.
pub fn delete_token(rng: &mut ChaCha8Rng, rs: &mut [TripleKey], objects_only: bool) -> bool {
    let mut slots: Vec<(usize, bool)> = Vec::new();
    for (i, r) in rs.iter().enumerate() {
        if !r.object.is_empty() {
            slots.push((i, true));
        }
        if !objects_only && !r.predicate.is_empty() {
            slots.push((i, false));
        }
    }
    if slots.is_empty() {
        return false;
    }
    let (i, obj) = slots[rng.random_range(0..slots.len())];
    let field = if obj { &mut rs[i].object } else { &mut rs[i].predicate };
    let mut words: Vec<&str> = field.split(' ').collect();
    words.remove(rng.random_range(0..words.len()));
    *field = words.join(" ");
    true
}
