//! Reasoning-question benchmark harness: knowledge triples, rule-based
//! question generation, LLM confidence elicitation, and the calibration,
//! similarity, exposure-experiment and welfare analytics built on top.

pub mod calibration;
pub mod error;
pub mod exposure;
pub mod gateway;
pub mod inference;
pub mod jsonl;
pub mod kb;
pub mod parser;
pub mod qgen;
pub mod similarity;
pub mod stats;
pub mod welfare;

pub use error::{Error, Result};
