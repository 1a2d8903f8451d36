//! Acceptance checks shared by the core integration tests and the
//! acceptance target. Each returns a one-line detail on success.

use std::time::Instant;

use calibench_core::calibration::{fit_gradient, summarize, ConfidenceField, GroupKey};
use calibench_core::exposure::{treatment_regression, Moderator, Outcome};
use calibench_core::gateway::{
    ConfidenceDist, CompletionRequest, EffectiveTemperature, Frame, MockHint, MockProfile, MockProvider, RawResponse,
    ResponseStatus,
};
use calibench_core::inference::{close, InferenceConfig, ReasoningType};
use calibench_core::kb::{Domain, KnowledgeBase};
use calibench_core::parser::{implied_from_frame, parse_response, Answer};
use calibench_core::qgen::{balance_sample, render_all, SampleSpec};
use calibench_core::similarity::{score, SimilarityConfig};
use calibench_core::stats;
use calibench_core::welfare::{
    check_results, optimal_effort, solve_effort, taylor_delta, welfare, welfare_derivatives, CostSpec,
    WelfareScenario,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::closure_oracle::{naive_closure, Key, Labeled};
use super::fixtures::*;
use super::oracles;
use super::toy_kb::random_kb;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close_enough(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Randomized toy KBs: `close` equals the naive fixed-point oracle.
pub fn c1_inference_oracle() -> Check {
    let mut slowest = 0.0_f64;
    let kbs = 25;
    for seed in 0..kbs {
        let kb = random_kb(1000 + seed, 30);
        ensure!(kb.len() <= 30, "toy KB {seed} has {} triples", kb.len());
        let start = Instant::now();
        let cfg = InferenceConfig {
            max_iterations: 64,
            max_composite_depth: 3,
        };
        let ours: std::collections::BTreeSet<Labeled> = close(&kb, &cfg)
            .0
            .into_iter()
            .map(|f| (f.triple.subject.clone(), f.triple.predicate.clone(), f.triple.object.clone(), f.truth, f.depth()))
            .collect();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let base: Vec<Key> = kb.dump().map(|t| (t.subject, t.predicate, t.object)).collect();
        let oracle = naive_closure(&base, kb.predicates(), 3);
        ensure!(ours == oracle, "KB seed {seed}: closure differs from oracle");
    }
    ensure!(slowest < 1.0, "slowest closure took {slowest:.3} s");
    Ok(format!("{kbs} KBs match the oracle; slowest closure {:.1} ms", slowest * 1e3))
}

/// The four Murakami rule examples derive with the expected truth labels.
pub fn c2_rule_examples() -> Check {
    let kb: KnowledgeBase = murakami_kb();
    let (facts, _) = close(&kb, &InferenceConfig::default());
    let expect = [
        ("Haruki Murakami", "won", "the Nobel Prize in Literature in 2016", false, ReasoningType::Negation),
        ("Haruki Uemura", "different_from", "Haruki Murakami", true, ReasoningType::Symmetric),
        ("Richard Brautigan", "influence", "Haruki Murakami", true, ReasoningType::Inverse),
        ("Haruki Murakami", "locate_in", "Japan", true, ReasoningType::Transitive),
    ];
    for (s, p, o, truth, rtype) in expect {
        let found = facts
            .iter()
            .find(|f| f.triple.subject == s && f.triple.predicate == p && f.triple.object == o);
        let Some(f) = found else {
            return Err(format!("({s}, {p}, {o}) not derived"));
        };
        ensure!(f.truth == truth, "({s}, {p}, {o}) has truth {}", f.truth);
        ensure!(f.reasoning_type == rtype, "({s}, {p}, {o}) typed {:?}", f.reasoning_type);
        ensure!(f.depth() == 1, "({s}, {p}, {o}) has depth {}", f.depth());
    }
    Ok("negation, symmetric, inverse and transitive examples derive with the expected labels".into())
}

/// Quota 2 over 10 domains × 5 types gives 100 questions, 2 per cell.
pub fn c3_dataset_shape() -> Check {
    let (facts, preds) = sampling_closure();
    let (questions, skipped) = render_all(&facts, &preds);
    ensure!(skipped.is_empty(), "{} facts failed to render", skipped.len());
    let (sample, report) = balance_sample(&questions, &SampleSpec::new(2, 7));
    ensure!(sample.len() == 100, "sample has {} questions", sample.len());
    ensure!(report.cells.len() == 50, "{} cells", report.cells.len());
    for d in Domain::ALL {
        for r in ReasoningType::NATIVE {
            let n = sample.iter().filter(|q| q.domain == d && q.reasoning_type == r).count();
            ensure!(n == 2, "cell ({d:?}, {r:?}) has {n} questions");
        }
    }
    ensure!(report.warnings.is_empty(), "warnings: {:?}", report.warnings);
    let full = 200 * Domain::ALL.len() * ReasoningType::NATIVE.len();
    ensure!(full == 10_000, "quota 200 gives {full}");
    Ok("100 questions, 2 in each of 50 cells; quota 200 scales to 10,000".into())
}

/// GPT-3.5 accuracy/confidence/bias and GPT-4o gradient from constructed fixtures.
pub fn c4_calibration_arithmetic() -> Check {
    let rows = summarize(&gpt35_records(), &[GroupKey::Model], ConfidenceField::SelfReported);
    ensure!(rows.len() == 1, "expected one summary row");
    let r = &rows[0];
    ensure!(close_enough(r.accuracy, 0.35, 1e-12), "accuracy {}", r.accuracy);
    ensure!(close_enough(r.mean_confidence, 0.94, 1e-12), "confidence {}", r.mean_confidence);
    ensure!(close_enough(r.bias, 0.59, 1e-12), "bias {}", r.bias);
    let g = fit_gradient(&gpt4o_records(), ConfidenceField::SelfReported).map_err(|e| e.to_string())?;
    ensure!(close_enough(g.slope, 2.44, 0.01), "slope {}", g.slope);
    ensure!(close_enough(g.intercept, 0.79, 0.01), "intercept {}", g.intercept);
    Ok(format!(
        "accuracy {:.2}, confidence {:.2}, bias {:.2}; slope {:.4}, intercept {:.4}",
        r.accuracy, r.mean_confidence, r.bias, g.slope, g.intercept
    ))
}

/// Perfect calibration is recovered; grouped fit equals record-level OLS.
pub fn c5_statistical_recovery() -> Check {
    let records = calibrated_records(10_000, 20_240_501);
    let g = fit_gradient(&records, ConfidenceField::SelfReported).map_err(|e| e.to_string())?;
    ensure!(close_enough(g.slope, 1.0, 0.05), "slope {}", g.slope);
    ensure!(close_enough(g.intercept, 1.0, 0.02), "intercept {}", g.intercept);

    let n = records.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { records[i].conf_answer.unwrap() - 1.0 });
    let y = DVector::from_iterator(n, records.iter().map(|r| r.correct as u8 as f64));
    let names = vec!["intercept".to_string(), "slope".to_string()];
    let fit = stats::ols(&x, &y, &names).map_err(|e| e.to_string())?;
    let v = stats::hc0(&x, &fit);
    let pairs = [
        (g.intercept, fit.beta[0]),
        (g.slope, fit.beta[1]),
        (g.intercept_se, v[(0, 0)].sqrt()),
        (g.slope_se, v[(1, 1)].sqrt()),
    ];
    let worst = pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(worst <= 1e-10, "grouped vs record-level differ by {worst:e}");
    Ok(format!(
        "slope {:.4}, intercept {:.4}; grouped vs record-level max difference {worst:.1e}",
        g.slope, g.intercept
    ))
}

/// HC0 and two-way clustered covariances match brute-force sandwiches.
pub fn c6_robust_errors() -> Check {
    let mut worst = 0.0_f64;
    let mut compared = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for fixture in 0..10 {
        let n = 30 + 2 * fixture;
        let x: oracles::Mat = (0..n)
            .map(|_| vec![1.0, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 + r[1] - 0.3 * r[2] + rng.random_range(-1.0..1.0) * r[2]).collect();
        let a: Vec<usize> = (0..n).map(|i| i / 3).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..n / 3)).collect();
        let xm = oracles::to_dmatrix(&x);
        let names: Vec<String> = ["c", "x1", "x2"].map(String::from).to_vec();
        let fit = stats::ols(&xm, &DVector::from_vec(y.clone()), &names).map_err(|e| e.to_string())?;

        worst = worst.max(oracles::rel_diff(&stats::hc0(&xm, &fit), &oracles::hc0(&x, &y)));
        worst = worst.max(oracles::rel_diff(&stats::cluster_vcov(&xm, &fit, &a), &oracles::one_way(&x, &y, &a)));
        let (v2, clipped) = stats::two_way_vcov(&xm, &fit, &a, &b);
        if !clipped {
            worst = worst.max(oracles::rel_diff(&v2, &oracles::two_way(&x, &y, &a, &b)));
            compared += 1;
        }

        // Degenerate second dimensions: singletons, and clusters nested in `a`.
        let one_way = stats::cluster_vcov(&xm, &fit, &a);
        let singletons: Vec<usize> = (0..n).collect();
        let (vs, _) = stats::two_way_vcov(&xm, &fit, &a, &singletons);
        let nested: Vec<(usize, usize)> = (0..n).map(|i| (a[i], i % 2)).collect();
        let (vn, _) = stats::two_way_vcov(&xm, &fit, &a, &nested);
        let ow = oracles::one_way(&x, &y, &a);
        worst = worst.max(oracles::rel_diff(&vs, &ow)).max(oracles::rel_diff(&vn, &ow));
        worst = worst.max(oracles::rel_diff(&one_way, &ow));
    }

    // Grouped HC0 of the gradient against the record-level sandwich.
    let small: Vec<_> = calibrated_records(48, 3);
    let g = fit_gradient(&small, ConfidenceField::SelfReported).map_err(|e| e.to_string())?;
    let x: oracles::Mat = small.iter().map(|r| vec![1.0, r.conf_answer.unwrap() - 1.0]).collect();
    let y: Vec<f64> = small.iter().map(|r| r.correct as u8 as f64).collect();
    let v = oracles::hc0(&x, &y);
    let rel = ((g.intercept_se - v[0][0].sqrt()) / v[0][0].sqrt())
        .abs()
        .max(((g.slope_se - v[1][1].sqrt()) / v[1][1].sqrt()).abs());
    worst = worst.max(rel);

    // Exposure regression errors: two-way by participant and question, on
    // the fixtures whose combined covariance needs no clipping.
    let mut exposure_compared = 0;
    for seed in 0..10 {
        let recs = small_exposure(48, 12, 7, seed);
        let res = treatment_regression(&recs, Moderator::None, Outcome::DeltaAccuracy).map_err(|e| e.to_string())?;
        if res.vcov_clipped {
            continue;
        }
        exposure_compared += 1;
        let x: oracles::Mat = recs
            .iter()
            .map(|r| {
                vec![
                    1.0,
                    (r.arm == calibench_core::exposure::Arm::LlmAnswer) as u8 as f64,
                    (r.arm == calibench_core::exposure::Arm::LlmAnswerConf) as u8 as f64,
                ]
            })
            .collect();
        let y: Vec<f64> = recs
            .iter()
            .map(|r| (r.post_answer == r.truth) as u8 as f64 - (r.pre_answer == r.truth) as u8 as f64)
            .collect();
        let p: Vec<&str> = recs.iter().map(|r| r.participant_id.as_str()).collect();
        let q: Vec<&str> = recs.iter().map(|r| r.question_id.as_str()).collect();
        let v = oracles::two_way(&x, &y, &p, &q);
        for (j, c) in res.coefficients.iter().enumerate() {
            worst = worst.max(((c.se - v[j][j].sqrt()) / v[j][j].sqrt()).abs());
        }
    }
    ensure!(exposure_compared >= 3, "only {exposure_compared} exposure fixtures were positive semi-definite");
    ensure!(compared >= 5, "only {compared} two-way fixtures were positive semi-definite");
    ensure!(worst <= 1e-8, "largest relative difference {worst:e}");
    Ok(format!(
        "largest relative difference {worst:.1e} over {compared} two-way and {exposure_compared} exposure fixtures; degenerate second dimension reduces to one-way"
    ))
}

/// Planted human-confidence effects are recovered.
pub fn c7_exposure_battery() -> Check {
    let recs = planted_exposure(&PLANTED_ACC, &PLANTED_BIAS, 77);
    let mut worst_z = 0.0_f64;
    for (outcome, planted) in [(Outcome::DeltaAccuracy, PLANTED_ACC), (Outcome::DeltaBias, PLANTED_BIAS)] {
        let r = treatment_regression(&recs, Moderator::HumanConfBinary, outcome).map_err(|e| e.to_string())?;
        for (name, want) in HUMAN_TERMS.iter().zip(planted) {
            let c = r.coef(name).ok_or_else(|| format!("missing term {name}"))?;
            ensure!(c.se > 0.0, "{outcome} {name}: zero standard error");
            let z = (c.estimate - want).abs() / c.se;
            ensure!(z <= 2.0, "{outcome} {name}: {:.4} vs planted {want} ({z:.2} SE)", c.estimate);
            worst_z = worst_z.max(z);
        }
        let sign = |n: &str| r.coef(n).unwrap().estimate.signum();
        ensure!(sign("llm_answer") > 0.0 && sign("llm_answer_conf") > 0.0, "{outcome}: main effects not positive");
        ensure!(
            sign("llm_answer:high_human_conf") < 0.0 && sign("llm_answer_conf:high_human_conf") < 0.0,
            "{outcome}: high-confidence interactions not negative"
        );
    }
    Ok(format!("all 12 coefficients within {worst_z:.2} clustered SEs of planted values; signs match"))
}

/// Similarity identities, bounds, hand traces and corruption monotonicity.
pub fn c8_similarity() -> Check {
    let cfg = SimilarityConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..200 {
        let (ev, _) = random_similarity_case(&mut rng);
        let s = score(&ev, &ev, &cfg);
        ensure!(s.fact_avg == Some(1.0) && s.fact_max == Some(1.0), "identity scored {s:?} for {ev:?}");
    }
    for _ in 0..1000 {
        let (ev, rs) = random_similarity_case(&mut rng);
        let s = score(&ev, &rs, &cfg);
        if let (Some(a), Some(m)) = (s.fact_avg, s.fact_max) {
            ensure!(m >= a - 1e-15, "max {m} < avg {a} for {ev:?} / {rs:?}");
        }
    }
    for t in similarity_traces() {
        let s = score(&t.evidence, &t.response, &cfg);
        let got = (s.fact_avg.unwrap_or(f64::NAN), s.fact_max.unwrap_or(f64::NAN), s.reasoning.unwrap_or(f64::NAN));
        ensure!(
            close_enough(got.0, t.fact_avg, 1e-12) && close_enough(got.1, t.fact_max, 1e-12) && close_enough(got.2, t.reasoning, 1e-12),
            "trace `{}`: got {got:?}, want ({}, {}, {})",
            t.name,
            t.fact_avg,
            t.fact_max,
            t.reasoning
        );
    }

    // Corruption: responses start as copies of the evidence and lose one
    // word per level. Fact scores may never rise for any case; the corpus
    // mean of every score may never rise across levels.
    let levels = 8;
    let cases = 300;
    let mut sums = vec![[0.0_f64; 3]; levels + 1];
    let mut counts = vec![[0usize; 3]; levels + 1];
    let mut reasoning_rises = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=4);
        let ev = disjoint_evidence(&mut rng, n);
        let mut rs = ev.clone();
        let mut prev = score(&ev, &rs, &cfg);
        for level in 0..=levels {
            if level > 0 {
                delete_token(&mut rng, &mut rs, false);
            }
            let s = score(&ev, &rs, &cfg);
            if level > 0 {
                for (a, b) in [(s.fact_avg, prev.fact_avg), (s.fact_max, prev.fact_max)] {
                    ensure!(a.unwrap_or(0.0) <= b.unwrap_or(0.0) + 1e-12, "fact score rose from {b:?} to {a:?}");
                }
                if s.reasoning.unwrap_or(0.0) > prev.reasoning.unwrap_or(0.0) + 1e-12 {
                    reasoning_rises += 1;
                }
            }
            for (k, v) in [s.fact_avg, s.fact_max, s.reasoning].into_iter().enumerate() {
                if let Some(v) = v {
                    sums[level][k] += v;
                    counts[level][k] += 1;
                }
            }
            prev = s;
        }
    }
    let means: Vec<[f64; 3]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| [0, 1, 2].map(|k| if c[k] > 0 { s[k] / c[k] as f64 } else { 0.0 }))
        .collect();
    for w in means.windows(2) {
        for k in 0..3 {
            ensure!(w[1][k] <= w[0][k] + 1e-12, "corpus mean of score {k} rose from {} to {}", w[0][k], w[1][k]);
        }
    }
    Ok(format!(
        "identity, max ≥ avg on 1,000 cases, {} traces, corpus means fall over {levels} corruption levels \
         ({reasoning_rises} single-case reasoning rises from pair exclusion)",
        similarity_traces().len()
    ))
}

fn exp(p: f64, b: f64, pi: f64, gamma: f64) -> WelfareScenario {
    WelfareScenario::new(p, b, pi, CostSpec::Exponential { gamma }).unwrap()
}

fn w_at(base: &WelfareScenario, p: f64, b: f64) -> f64 {
    welfare(&base.with(p, b).unwrap()).unwrap()
}

/// Welfare closed forms, derivatives, Result 2 and 4, and Δp = Δb cancellation.
pub fn c9_welfare() -> Check {
    let mut worst_root = 0.0_f64;
    let mut worst_fd = 0.0_f64;
    let mut agree = 0;
    let mut decreasing = 0;
    let ps = [0.3, 0.45, 0.6, 0.75, 0.85];
    let bs = [0.02, 0.05, 0.08, 0.11, 0.14];
    let pis = [1.15, 1.4, 2.0, 4.0];
    let gammas = [0.5, 1.0, 2.0];
    let mut points = 0;
    for (i, &p) in ps.iter().enumerate() {
        for (j, &b) in bs.iter().enumerate() {
            for (k, &pi) in pis.iter().enumerate() {
                let gamma = gammas[(i + j + k) % 3];
                let s = exp(p, b, pi, gamma);
                points += 1;
                let e = optimal_effort(&s).map_err(|e| e.to_string())?.e;
                let numeric = solve_effort(s.cost(), pi * (p + b), true).map_err(|e| e.to_string())?;
                worst_root = worst_root.max((e - numeric).abs());

                let d = welfare_derivatives(&s).map_err(|e| e.to_string())?;
                let h = 1e-5;
                let fd_p = oracles::central_diff(|x| w_at(&s, x, b), p, h);
                let fd_b = oracles::central_diff(|x| w_at(&s, p, x), b, h);
                worst_fd = worst_fd
                    .max((d.dw_dp - fd_p).abs() / fd_p.abs().max(1e-12))
                    .max((d.dw_db - fd_b).abs() / fd_b.abs().max(1e-12));

                let r = check_results(&s, 0.01, 1.0).map_err(|e| e.to_string())?;
                let (lhs, rhs) = r.result2.exponential_form.unwrap();
                if (lhs < rhs) == (fd_p < 0.0) && r.result2.welfare_decreasing_in_p == (fd_p < 0.0) {
                    agree += 1;
                }
                decreasing += (fd_p < 0.0) as usize;
            }
        }
    }
    ensure!(points == 100, "grid has {points} points");
    ensure!(worst_root <= 1e-10, "closed form vs root-finder differ by {worst_root:e}");
    ensure!(worst_fd <= 1e-6, "derivatives differ from finite differences by {worst_fd:e} (relative)");
    ensure!(agree == points, "Result 2 predicted the sign at {agree}/{points} points");
    ensure!(decreasing > 0 && decreasing < points, "grid lacks one of the two regimes ({decreasing} decreasing)");

    // Result 4: ΔW* against the exact gain, error cubic in b.
    let (p, pi, gamma) = (0.5, 3.0, 1.0);
    let errs: Vec<f64> = [0.08, 0.04, 0.02, 0.01]
        .iter()
        .map(|&b| {
            let s = exp(p, b, pi, gamma);
            let star = check_results(&s, 0.01, 1.0).unwrap().result4.delta_w_star;
            star - (w_at(&s, p, 0.0) - welfare(&s).unwrap())
        })
        .collect();
    let orders = oracles::orders(&errs);
    ensure!(orders.iter().all(|o| (o - 3.0).abs() < 0.3), "Result 4 error orders {orders:?}");

    let s = exp(0.5, 0.2, 3.0, 1.0);
    for dp in [0.01, 0.05, 0.1] {
        let t = taylor_delta(&s, dp, dp).map_err(|e| e.to_string())?;
        ensure!(t.second_dp + t.second_db == 0.0, "second-order terms do not cancel at Δ = {dp}");
    }
    Ok(format!(
        "root-finder {worst_root:.1e}, derivatives {worst_fd:.1e} relative, Result 2 sign {agree}/{points} \
         ({decreasing} decreasing), Result 4 error orders {}",
        orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>().join("/")
    ))
}

fn raw(req: &CompletionRequest, text: String, truncated: bool) -> RawResponse {
    RawResponse {
        question_id: req.question_id.clone(),
        model: format!("mock:{}", req.model),
        frame: req.frame,
        temperature: 0.0,
        effective_temperature: EffectiveTemperature::Applied(0.0),
        text,
        latency_ms: 0,
        timestamp: 0,
        status: if truncated { ResponseStatus::Truncated } else { ResponseStatus::Ok },
        attempts: 1,
        cached: false,
        error: None,
    }
}

/// Mock emitter output parses back to the planted values.
pub fn c10_parser_round_trip() -> Check {
    let mut profile = MockProfile::new(0.6, ConfidenceDist::Uniform { low: 0.0, high: 1.0 }, 10);
    profile.facts_confidence = Some(ConfidenceDist::Uniform { low: 0.3, high: 1.0 });
    profile.reasoning_confidence = Some(ConfidenceDist::Beta {
        alpha: 2.0,
        beta: 1.0,
        low: 0.0,
        high: 1.0,
    });
    profile.missing_rate = 0.05;
    profile.truncation_rate = 0.05;
    let mock = MockProvider::new(profile).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let frames = [Frame::Baseline, Frame::YesFrame, Frame::NoFrame];
    let mut mismatches = Vec::new();
    let total = 10_000;
    for i in 0..total {
        let req = CompletionRequest {
            question_id: format!("q{i}"),
            model: "round-trip".into(),
            frame: frames[i % 3],
            temperature: Some(0.0),
            prompt: String::new(),
            hint: Some(MockHint {
                truth: rng.random::<bool>(),
                evidence_sentences: (0..rng.random_range(0..3)).map(|k| format!("Fact number {k} holds.")).collect(),
            }),
        };
        let planted = mock.planted(&req).map_err(|e| e.message.clone())?;
        let completion = MockProvider::render(&req, &planted);
        let parsed = parse_response(&raw(&req, completion.text, completion.truncated));
        let pct = |v: u32| Some(v as f64 / 100.0);
        let (want_answer, want_conf, want_facts, want_reasoning) = match req.frame.framed_answer() {
            None => {
                let answer = if planted.missing { Answer::Missing } else { Answer::from_bool(planted.answer) };
                if planted.truncated {
                    (answer, None, None, None)
                } else {
                    (answer, pct(planted.conf), pct(planted.facts), pct(planted.reasoning))
                }
            }
            Some(framed) => {
                if planted.truncated || planted.missing {
                    (Answer::Missing, None, None, None)
                } else {
                    let q = if planted.answer == framed { planted.conf } else { 100 - planted.conf };
                    if q > 50 {
                        (Answer::from_bool(framed), pct(q), None, None)
                    } else if q < 50 {
                        (Answer::from_bool(!framed), pct(100 - q), None, None)
                    } else {
                        (Answer::Missing, None, None, None)
                    }
                }
            }
        };
        let same = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() < 1e-12,
            (None, None) => true,
            _ => false,
        };
        if parsed.answer != want_answer
            || !same(parsed.conf_answer, want_conf)
            || !same(parsed.conf_facts, want_facts)
            || !same(parsed.conf_reasoning, want_reasoning)
        {
            mismatches.push(i);
        }
    }
    ensure!(mismatches.is_empty(), "{} mismatches, first at response {}", mismatches.len(), mismatches[0]);

    // Exhaustive frame grid.
    let mut grid = 0;
    for framed in [true, false] {
        let frame = if framed { Frame::YesFrame } else { Frame::NoFrame };
        let label = if framed { "Yes" } else { "No" };
        for k in 0..=100u32 {
            let q = k as f64 / 100.0;
            let want = if k > 50 {
                (Answer::from_bool(framed), Some(q))
            } else if k < 50 {
                (Answer::from_bool(!framed), Some(1.0 - q))
            } else {
                (Answer::Missing, None)
            };
            let direct = implied_from_frame(framed, q);
            ensure!(direct.0 == want.0, "implied answer at q = {q}");
            let req = CompletionRequest {
                question_id: format!("g{k}"),
                model: "grid".into(),
                frame,
                temperature: None,
                prompt: String::new(),
                hint: None,
            };
            let text = format!("The probability that the correct answer is {label} is {k}%.\n");
            let parsed = parse_response(&raw(&req, text, false));
            ensure!(parsed.answer == want.0, "{label} frame at q = {q}: answer {:?}", parsed.answer);
            let ok = match (parsed.conf_answer, want.1) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            };
            ensure!(ok, "{label} frame at q = {q}: confidence {:?}", parsed.conf_answer);
            grid += 1;
        }
    }
    Ok(format!("{total} mock responses with 0 mismatches; {grid} frame grid points obey the implied-answer rule"))
}
