//! Synthetic provider with a configurable accuracy and confidence profile.
//!
//! Each job draws from its own RNG seeded by hashing the profile seed with
//! the job identity, so output does not depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{Beta, ContinuousCDF};

use super::prompt::{Frame, ANSWER_ITEM, FACTS_ITEM, REASONING_ITEM};
use super::{Completion, CompletionRequest, Provider, ProviderFailure};
use crate::error::{Error, Result};

/// Distribution of stated confidences. Draws are rounded to whole percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfidenceDist {
    PointMass { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Beta(alpha, beta) rescaled onto [low, high].
    Beta { alpha: f64, beta: f64, low: f64, high: f64 },
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

impl ConfidenceDist {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match self {
            ConfidenceDist::PointMass { value } => unit(*value),
            ConfidenceDist::Uniform { low, high } => unit(*low) && unit(*high) && low <= high,
            ConfidenceDist::Beta { alpha, beta, low, high } => {
                *alpha > 0.0 && *beta > 0.0 && unit(*low) && unit(*high) && low <= high
            }
            ConfidenceDist::Discrete { values, weights } => {
                !values.is_empty()
                    && values.len() == weights.len()
                    && values.iter().all(|v| unit(*v))
                    && weights.iter().all(|w| *w >= 0.0)
                    && weights.iter().sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid confidence distribution {self:?}")))
        }
    }

    fn draw_raw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            ConfidenceDist::PointMass { value } => *value,
            ConfidenceDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ConfidenceDist::Beta { alpha, beta, low, high } => {
                let b = Beta::new(*alpha, *beta).expect("validated parameters");
                low + (high - low) * b.inverse_cdf(rng.random::<f64>())
            }
            ConfidenceDist::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (v, w) in values.iter().zip(weights) {
                    if u < *w {
                        return *v;
                    }
                    u -= w;
                }
                *values.last().expect("validated non-empty")
            }
        }
    }

    /// Draws a confidence and rounds it to an integer percentage.
    pub fn draw_percent(&self, rng: &mut impl Rng) -> u32 {
        (self.draw_raw(rng).clamp(0.0, 1.0) * 100.0).round() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub accuracy: f64,
    pub confidence: ConfidenceDist,
    #[serde(default)]
    pub facts_confidence: Option<ConfidenceDist>,
    #[serde(default)]
    pub reasoning_confidence: Option<ConfidenceDist>,
    pub seed: u64,
    /// Share of responses cut off before the evaluation block.
    #[serde(default)]
    pub truncation_rate: f64,
    /// Share of responses that never state an answer.
    #[serde(default)]
    pub missing_rate: f64,
}

impl MockProfile {
    pub fn new(accuracy: f64, confidence: ConfidenceDist, seed: u64) -> Self {
        Self {
            accuracy,
            confidence,
            facts_confidence: None,
            reasoning_confidence: None,
            seed,
            truncation_rate: 0.0,
            missing_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("truncation_rate", self.truncation_rate),
            ("missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        self.confidence.validate()?;
        for d in [&self.facts_confidence, &self.reasoning_confidence].into_iter().flatten() {
            d.validate()?;
        }
        Ok(())
    }
}

pub struct MockProvider {
    profile: MockProfile,
}

impl MockProvider {
    pub fn new(profile: MockProfile) -> Result<Self> {
        profile.validate()?;
        Ok(Self { profile })
    }

    fn rng_for(&self, req: &CompletionRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.profile.seed.to_le_bytes());
        for part in [req.question_id.as_str(), req.model.as_str(), req.frame.as_str()] {
            h.update(part.as_bytes());
            h.update([0x1f]);
        }
        h.update(req.temperature.unwrap_or(-1.0).to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// The draws behind one mock response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Planted {
    pub answer: bool,
    pub correct: bool,
    /// Percent confidences for answer, facts and reasoning.
    pub conf: u32,
    pub facts: u32,
    pub reasoning: u32,
    pub missing: bool,
    pub truncated: bool,
}

impl MockProvider {
    /// Draws the response content for a request; deterministic per request.
    pub fn planted(&self, req: &CompletionRequest) -> Result<Planted, ProviderFailure> {
        let hint = req
            .hint
            .as_ref()
            .ok_or_else(|| ProviderFailure::fatal("mock provider needs the question's truth label"))?;
        let p = &self.profile;
        let mut rng = self.rng_for(req);
        let correct = rng.random::<f64>() < p.accuracy;
        let answer = if correct { hint.truth } else { !hint.truth };
        let conf = p.confidence.draw_percent(&mut rng);
        let facts = p.facts_confidence.as_ref().unwrap_or(&p.confidence).draw_percent(&mut rng);
        let reasoning = p.reasoning_confidence.as_ref().unwrap_or(&p.confidence).draw_percent(&mut rng);
        let missing = rng.random::<f64>() < p.missing_rate;
        let truncated = rng.random::<f64>() < p.truncation_rate;
        Ok(Planted {
            answer,
            correct,
            conf,
            facts,
            reasoning,
            missing,
            truncated,
        })
    }

    /// Writes the response text for planted draws.
    pub fn render(req: &CompletionRequest, planted: &Planted) -> Completion {
        let Planted {
            answer,
            conf,
            facts,
            reasoning,
            missing,
            truncated,
            ..
        } = *planted;
        let mut text = String::new();
        match req.frame {
            Frame::Baseline => {
                if missing {
                    text.push_str("This question cannot be answered with certainty from the information available.\n\n");
                } else {
                    text.push_str(&format!(
                        "The answer to the question is {}. The statement {} with the facts listed below.\n\n",
                        yes_no(answer),
                        if answer { "is consistent" } else { "is not consistent" }
                    ));
                }
                text.push_str("Reasoning: I first identify the entities in the question, then recall what is known about them, and finally combine these facts.\n\n");
                let evidence = req.hint.as_ref().map(|h| h.evidence_sentences.as_slice()).unwrap_or_default();
                if !evidence.is_empty() {
                    text.push_str("Key knowledge:\n");
                    for (i, s) in evidence.iter().enumerate() {
                        text.push_str(&format!("{}. {}\n", i + 1, s));
                    }
                    text.push('\n');
                }
                if truncated {
                    text.push_str("Evaluation:\n- ");
                    return Completion { text, truncated: true };
                }
                text.push_str(&format!(
                    "Evaluation:\n- {ANSWER_ITEM} {conf}%\n- {FACTS_ITEM} {facts}%\n- {REASONING_ITEM} {reasoning}%\n"
                ));
            }
            Frame::YesFrame | Frame::NoFrame => {
                let framed = req.frame.framed_answer().expect("direct frame");
                let label = if framed { "Yes" } else { "No" };
                text.push_str("Reasoning: I recall the relevant facts about the entities and combine them.\n\n");
                if truncated {
                    return Completion { text, truncated: true };
                }
                if missing {
                    text.push_str("I cannot give a numerical estimate for this question.\n");
                } else {
                    let q = if answer == framed { conf } else { 100 - conf };
                    text.push_str(&format!("The probability that the correct answer is {label} is {q}%.\n"));
                }
            }
        }
        Completion { text, truncated: false }
    }
}

impl Provider for MockProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderFailure> {
        let planted = self.planted(req)?;
        Ok(Self::render(req, &planted))
    }
}
