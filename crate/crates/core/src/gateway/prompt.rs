//! Prompt templates for the three elicitation frames.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Baseline,
    YesFrame,
    NoFrame,
}

impl Frame {
    pub const ALL: [Frame; 3] = [Frame::Baseline, Frame::YesFrame, Frame::NoFrame];

    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Baseline => "baseline",
            Frame::YesFrame => "yes_frame",
            Frame::NoFrame => "no_frame",
        }
    }

    /// The answer whose probability a direct frame asks for.
    pub fn framed_answer(self) -> Option<bool> {
        match self {
            Frame::Baseline => None,
            Frame::YesFrame => Some(true),
            Frame::NoFrame => Some(false),
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "baseline" => Ok(Frame::Baseline),
            "yes" | "yes_frame" | "yesframe" => Ok(Frame::YesFrame),
            "no" | "no_frame" | "noframe" => Ok(Frame::NoFrame),
            _ => Err(Error::InvalidArgument(format!("unknown frame `{s}`"))),
        }
    }
}

pub const ANSWER_ITEM: &str =
    "What is your estimate of the probability (in percent) that your answer is correct?";
pub const FACTS_ITEM: &str =
    "What is your estimate of the probability (in percent) that the facts underlying your answer are correct?";
pub const REASONING_ITEM: &str =
    "What is your estimate of the probability (in percent) that the reasoning underlying your answer is correct?";

/// Builds the prompt sent for `question` under `frame`.
pub fn build_prompt(question: &str, frame: Frame) -> String {
    match frame {
        Frame::Baseline => format!(
            "Please answer the following yes/no question '{question}'. This question has only one correct answer. Follow these steps:\n\
\n\
1. Think through the question step-by-step, employing a human-like reasoning process.\n\
\n\
2. Pick the answer that you think is correct and begin with:\n\
   - \"The answer to the question is yes. ... (reason)\"\n\
   - \"The answer to the question is no. ... (reason)\"\n\
   Even if you are unsure about the answer, pick the one that you think is more likely correct, and give your reasons.\n\
\n\
3. Explain your reasoning process in detail.\n\
\n\
4. List the key pieces of knowledge used in your reasoning, presented as declarative sentences and enumerated.\n\
\n\
5. After providing your answer, evaluate your response in three aspects:\n\
   - {ANSWER_ITEM}\n\
   - {FACTS_ITEM}\n\
   - {REASONING_ITEM}\n"
        ),
        Frame::YesFrame | Frame::NoFrame => {
            let label = if frame == Frame::YesFrame { "Yes" } else { "No" };
            format!(
                "Please consider the following yes/no question '{question}'. This question has only one correct answer. \
Think through the question step-by-step, employing a human-like reasoning process. \
Then answer: what is the probability, that the correct answer is `{label}'? \
State your estimate in percent, in the form \"The probability that the correct answer is {label} is X%.\"\n"
            )
        }
    }
}
