//! Pipeline configuration file.
//!
//! One TOML document describes a run. Relative paths resolve against the
//! directory holding the config file. Command-line flags are applied on top
//! through [`Overrides`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calibench_core::gateway::{Frame, MockProfile};
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Artifact directory.
    pub out_dir: PathBuf,
    /// Sampling seed for question generation.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub kb: KbSection,
    #[serde(default)]
    pub derive: DeriveSection,
    #[serde(default)]
    pub qgen: QgenSection,
    pub ask: AskSection,
    /// Synthetic providers addressable as `mock:<name>`.
    #[serde(default)]
    pub mock: BTreeMap<String, MockProfile>,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    pub similarity: Option<SimilaritySection>,
    pub exposure: Option<ExposureSection>,
    pub welfare: Option<WelfareSection>,
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSection {
    pub triples: PathBuf,
    pub predicates: Option<PathBuf>,
    /// Domain for rows without a domain column.
    pub default_domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeriveSection {
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    3
}

impl Default for DeriveSection {
    fn default() -> Self {
        Self { depth: default_depth() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QgenSection {
    #[serde(default = "default_quota")]
    pub quota: usize,
    #[serde(default)]
    pub balance_truth: bool,
}

fn default_quota() -> usize {
    200
}

impl Default for QgenSection {
    fn default() -> Self {
        Self {
            quota: default_quota(),
            balance_truth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskSection {
    pub models: Vec<String>,
    #[serde(default = "default_frames")]
    pub frames: Vec<Frame>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub rate_limit: Option<f64>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Response cache directory; defaults to `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Per-request timeout for live providers, in seconds.
    pub timeout_secs: Option<u64>,
    /// Base URL overrides keyed by provider prefix.
    #[serde(default)]
    pub base_urls: BTreeMap<String, String>,
}

fn default_frames() -> Vec<Frame> {
    vec![Frame::Baseline]
}

fn default_temperatures() -> Vec<f64> {
    vec![0.0]
}

fn default_parallelism() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    #[serde(default = "default_group_by")]
    pub group_by: Vec<String>,
    #[serde(default = "default_field")]
    pub confidence: String,
    #[serde(default = "default_round")]
    pub round: u32,
}

fn default_group_by() -> Vec<String> {
    vec!["model".into()]
}

fn default_field() -> String {
    "self_reported".into()
}

fn default_round() -> u32 {
    1
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            group_by: default_group_by(),
            confidence: default_field(),
            round: default_round(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilaritySection {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_function")]
    pub function: String,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_function() -> String {
    "jaccard".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureSection {
    pub data: PathBuf,
    #[serde(default = "default_spec")]
    pub spec: String,
}

fn default_spec() -> String {
    "all".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareSection {
    pub p: f64,
    pub b: f64,
    pub pi: f64,
    #[serde(default = "default_cost")]
    pub cost: String,
    #[serde(default = "default_dp")]
    pub dp: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub grid: Option<GridSection>,
}

fn default_cost() -> String {
    "exp:1.0".into()
}

fn default_dp() -> f64 {
    0.05
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub p: Vec<f64>,
    pub b: Vec<f64>,
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quota: Option<usize>,
    pub depth: Option<usize>,
    pub models: Vec<String>,
    pub parallelism: Option<usize>,
    pub cache_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.kb.triples);
        if let Some(p) = self.kb.predicates.as_mut() {
            fix(p);
        }
        if let Some(p) = self.ask.cache_dir.as_mut() {
            fix(p);
        }
        if let Some(e) = self.exposure.as_mut() {
            fix(&mut e.data);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.quota {
            self.qgen.quota = v;
        }
        if let Some(v) = o.depth {
            self.derive.depth = v;
        }
        if !o.models.is_empty() {
            self.ask.models = o.models.clone();
        }
        if let Some(v) = o.parallelism {
            self.ask.parallelism = v;
        }
        if let Some(v) = &o.cache_dir {
            self.ask.cache_dir = Some(v.clone());
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.ask.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    /// Input files whose contents the run depends on.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.kb.triples.clone()];
        v.extend(self.kb.predicates.clone());
        if let Some(e) = &self.exposure {
            v.push(e.data.clone());
        }
        v
    }

    /// Checks that every referenced input exists.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        for p in self.inputs() {
            if !p.is_file() {
                return Err(CliError::usage(format!("referenced file {} does not exist", p.display())));
            }
        }
        if self.ask.models.is_empty() {
            return Err(CliError::usage("ask.models is empty"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
