//! Querying LLM providers: prompt frames, provider clients, a content-addressed
//! response cache and a rate-limited, retrying batch runner.

mod cache;
mod http;
mod mock;
mod prompt;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use cache::{cache_key, ResponseCache};
pub use http::{endpoint, model_supports_temperature, ChatProvider, Endpoint, ENDPOINTS};
pub use mock::{ConfidenceDist, MockProfile, MockProvider, Planted};
pub use prompt::{build_prompt, Frame, ANSWER_ITEM, FACTS_ITEM, REASONING_ITEM};

use crate::error::{Error, Result};
use crate::kb::PredicateMeta;
use crate::qgen::{surface_form, BenchmarkQuestion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryJob {
    pub question_id: String,
    pub frame: Frame,
    pub temperature: f64,
    pub model: String,
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Truncated,
    ProviderError,
}

/// Temperature actually sent: a number, or `"unsupported"` when the model
/// rejects the parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveTemperature {
    Applied(f64),
    Unsupported,
}

impl Serialize for EffectiveTemperature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EffectiveTemperature::Applied(t) => s.serialize_f64(*t),
            EffectiveTemperature::Unsupported => s.serialize_str("unsupported"),
        }
    }
}

impl<'de> Deserialize<'de> for EffectiveTemperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(EffectiveTemperature::Applied)
                .ok_or_else(|| serde::de::Error::custom("bad temperature")),
            serde_json::Value::String(s) if s == "unsupported" => Ok(EffectiveTemperature::Unsupported),
            other => Err(serde::de::Error::custom(format!("bad effective temperature {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub question_id: String,
    pub model: String,
    pub frame: Frame,
    pub temperature: f64,
    pub effective_temperature: EffectiveTemperature,
    pub text: String,
    pub latency_ms: u64,
    /// Unix time in milliseconds.
    pub timestamp: u64,
    pub status: ResponseStatus,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default)]
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RawResponse {
    fn sort_key(&self) -> (&str, &str, Frame) {
        (&self.question_id, &self.model, self.frame)
    }
}

/// Ground truth passed along to synthetic providers; real providers ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockHint {
    pub truth: bool,
    pub evidence_sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub question_id: String,
    /// Model name without the provider prefix.
    pub model: String,
    pub frame: Frame,
    /// `None` when the model does not accept a temperature.
    pub temperature: Option<f64>,
    pub prompt: String,
    pub hint: Option<MockHint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderFailure {
    pub message: String,
    pub retryable: bool,
}

impl ProviderFailure {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> std::result::Result<Completion, ProviderFailure>;

    fn supports_temperature(&self, _model: &str) -> bool {
        true
    }
}

/// Splits `provider:model` identifiers.
pub fn split_model_id(id: &str) -> Result<(&str, &str)> {
    match id.split_once(':') {
        Some((p, m)) if !p.is_empty() && !m.is_empty() => Ok((p, m)),
        _ => Err(Error::UnknownProvider(id.to_string())),
    }
}

/// Maps model identifiers to providers. `mock:<name>` resolves to a registered
/// mock profile; `openai:`, `openrouter:` and `together:` read their API key
/// from the environment.
#[derive(Default)]
pub struct ProviderRegistry {
    custom: BTreeMap<String, Arc<dyn Provider>>,
    mocks: BTreeMap<String, Arc<dyn Provider>>,
    base_urls: BTreeMap<String, String>,
    timeout: Option<Duration>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_mock(&mut self, name: &str, profile: MockProfile) -> Result<()> {
        self.mocks.insert(name.to_string(), Arc::new(MockProvider::new(profile)?));
        Ok(())
    }

    /// Registers a provider for every model with the given prefix.
    pub fn register(&mut self, prefix: &str, provider: Arc<dyn Provider>) {
        self.custom.insert(prefix.to_string(), provider);
    }

    pub fn set_base_url(&mut self, prefix: &str, url: &str) {
        self.base_urls.insert(prefix.to_string(), url.to_string());
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = Some(timeout);
    }

    pub fn resolve(&self, model_id: &str) -> Result<Arc<dyn Provider>> {
        let (prefix, name) = split_model_id(model_id)?;
        if let Some(p) = self.custom.get(prefix) {
            return Ok(p.clone());
        }
        if prefix == "mock" {
            return self
                .mocks
                .get(name)
                .cloned()
                .ok_or_else(|| Error::UnknownProvider(format!("{model_id} (no mock profile named `{name}`)")));
        }
        let ep = endpoint(prefix).ok_or_else(|| Error::UnknownProvider(model_id.to_string()))?;
        let key = std::env::var(ep.key_var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| Error::MissingCredentials {
                model: model_id.to_string(),
                var: ep.key_var.to_string(),
            })?;
        let base = self.base_urls.get(prefix).map(String::as_str).unwrap_or(ep.base_url);
        let provider = ChatProvider::new(base, key, self.timeout.unwrap_or(Duration::from_secs(120)))?;
        Ok(Arc::new(provider))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub models: Vec<String>,
    pub frames: Vec<Frame>,
    pub temperatures: Vec<f64>,
    pub parallelism: usize,
    /// Requests per second per provider prefix; `None` is unlimited.
    pub rate_limit: Option<f64>,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
}

impl JobSpec {
    pub fn new(models: Vec<String>, frames: Vec<Frame>, temperatures: Vec<f64>) -> Self {
        Self {
            models,
            frames,
            temperatures,
            parallelism: 4,
            rate_limit: None,
            max_retries: 3,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.frames.is_empty() || self.temperatures.is_empty() {
            return Err(Error::InvalidArgument("job spec needs at least one model, frame and temperature".into()));
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(0.0..=2.0).contains(*t)) {
            return Err(Error::InvalidArgument(format!("temperature {t} outside [0, 2]")));
        }
        if let Some(r) = self.rate_limit {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("rate limit must be positive, got {r}")));
            }
        }
        Ok(())
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_base_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.backoff_max_ms))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub jobs: usize,
    pub live_calls: usize,
    pub cache_hits: usize,
    pub retries: usize,
    pub provider_errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub responses: Vec<RawResponse>,
    pub stats: BatchStats,
}

struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(rate: f64) -> Self {
        let capacity = rate.max(1.0);
        Self {
            rate,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.rate).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Executes queries against providers, consulting the cache first and
/// appending every response to an optional line-delimited log.
pub struct Gateway {
    pub registry: ProviderRegistry,
    pub cache: Option<ResponseCache>,
    pub log_path: Option<PathBuf>,
    /// Surface forms used to phrase evidence for synthetic providers.
    pub predicates: BTreeMap<String, PredicateMeta>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn hint_for(q: &BenchmarkQuestion, predicates: &BTreeMap<String, PredicateMeta>) -> MockHint {
    let evidence_sentences = q
        .evidence
        .iter()
        .map(|t| {
            let verb = surface_form(&t.predicate, predicates.get(&t.predicate))
                .unwrap_or_else(|_| t.predicate.clone());
            format!("{} {} {}.", t.subject, verb, t.object)
        })
        .collect();
    MockHint {
        truth: q.truth,
        evidence_sentences,
    }
}

struct Slot<'a> {
    question: &'a BenchmarkQuestion,
    model: &'a str,
    frame: Frame,
    temperature: f64,
}

impl Gateway {
    pub fn new(registry: ProviderRegistry) -> Self {
        Self {
            registry,
            cache: None,
            log_path: None,
            predicates: BTreeMap::new(),
        }
    }

    /// One response per (question, model, frame, temperature), sorted by that key.
    pub fn run_batch(&self, questions: &[BenchmarkQuestion], spec: &JobSpec) -> Result<BatchOutcome> {
        spec.validate()?;
        // Resolve every provider up front so missing credentials fail before any call.
        let mut providers = HashMap::new();
        let mut buckets: HashMap<String, Arc<TokenBucket>> = HashMap::new();
        for m in &spec.models {
            let provider = self.registry.resolve(m)?;
            let (prefix, _) = split_model_id(m)?;
            let bucket = spec.rate_limit.map(|r| {
                buckets
                    .entry(prefix.to_string())
                    .or_insert_with(|| Arc::new(TokenBucket::new(r)))
                    .clone()
            });
            providers.insert(m.as_str(), (provider, bucket));
        }

        let log = match &self.log_path {
            Some(p) => Some(Mutex::new(open_log(p)?)),
            None => None,
        };

        let mut slots = Vec::new();
        for q in questions {
            for m in &spec.models {
                for &frame in &spec.frames {
                    for &temperature in &spec.temperatures {
                        slots.push(Slot {
                            question: q,
                            model: m,
                            frame,
                            temperature,
                        });
                    }
                }
            }
        }

        let next = AtomicUsize::new(0);
        let stats = Mutex::new(BatchStats {
            jobs: slots.len(),
            ..BatchStats::default()
        });
        let results: Mutex<Vec<RawResponse>> = Mutex::new(Vec::with_capacity(slots.len()));
        let first_error: Mutex<Option<Error>> = Mutex::new(None);
        let workers = spec.parallelism.max(1).min(slots.len().max(1));

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(slot) = slots.get(i) else { break };
                    if first_error.lock().expect("poisoned").is_some() {
                        break;
                    }
                    let (provider, bucket) = &providers[slot.model];
                    let (resp, local) = self.run_one(slot, provider.as_ref(), bucket.as_deref(), spec);
                    if let Some(log) = &log {
                        let mut w = log.lock().expect("log poisoned");
                        let written = serde_json::to_writer(&mut *w, &resp)
                            .map_err(Error::from)
                            .and_then(|_| {
                                w.write_all(b"\n")
                                    .and_then(|_| w.flush())
                                    .map_err(|e| Error::io(self.log_path.clone().unwrap_or_default(), e))
                            });
                        if let Err(e) = written {
                            first_error.lock().expect("poisoned").get_or_insert(e);
                        }
                    }
                    {
                        let mut s = stats.lock().expect("poisoned");
                        s.live_calls += local.live_calls;
                        s.cache_hits += local.cache_hits;
                        s.retries += local.retries;
                        s.provider_errors += local.provider_errors;
                    }
                    results.lock().expect("poisoned").push(resp);
                });
            }
        });

        if let Some(e) = first_error.into_inner().expect("poisoned") {
            return Err(e);
        }
        let mut responses = results.into_inner().expect("poisoned");
        responses.sort_by(|a, b| {
            a.sort_key()
                .cmp(&b.sort_key())
                .then(a.temperature.total_cmp(&b.temperature))
        });
        Ok(BatchOutcome {
            responses,
            stats: stats.into_inner().expect("poisoned"),
        })
    }

    fn run_one(
        &self,
        slot: &Slot<'_>,
        provider: &dyn Provider,
        bucket: Option<&TokenBucket>,
        spec: &JobSpec,
    ) -> (RawResponse, BatchStats) {
        let mut local = BatchStats::default();
        let prompt = build_prompt(&slot.question.text, slot.frame);
        let key = cache_key(slot.model, slot.frame, slot.temperature, &prompt);
        if let Some(cache) = &self.cache {
            match cache.get(&key) {
                Ok(Some(mut hit)) => {
                    hit.question_id = slot.question.id.clone();
                    hit.cached = true;
                    local.cache_hits += 1;
                    return (hit, local);
                }
                Ok(None) => {}
                Err(e) => log::warn!("ignoring unreadable cache entry {key}: {e}"),
            }
        }

        let (_, model_name) = split_model_id(slot.model).expect("validated model id");
        let supports = provider.supports_temperature(model_name);
        let req = CompletionRequest {
            question_id: slot.question.id.clone(),
            model: model_name.to_string(),
            frame: slot.frame,
            temperature: supports.then_some(slot.temperature),
            prompt,
            hint: Some(hint_for(slot.question, &self.predicates)),
        };
        let mut resp = RawResponse {
            question_id: slot.question.id.clone(),
            model: slot.model.to_string(),
            frame: slot.frame,
            temperature: slot.temperature,
            effective_temperature: if supports {
                EffectiveTemperature::Applied(slot.temperature)
            } else {
                EffectiveTemperature::Unsupported
            },
            text: String::new(),
            latency_ms: 0,
            timestamp: now_ms(),
            status: ResponseStatus::ProviderError,
            attempts: 0,
            cached: false,
            error: None,
        };

        let mut attempt = 0u32;
        loop {
            if let Some(b) = bucket {
                b.acquire();
            }
            let started = Instant::now();
            local.live_calls += 1;
            let outcome = provider.complete(&req);
            resp.latency_ms = started.elapsed().as_millis() as u64;
            resp.timestamp = now_ms();
            resp.attempts = attempt + 1;
            match outcome {
                Ok(c) if !c.text.trim().is_empty() => {
                    resp.status = if c.truncated {
                        ResponseStatus::Truncated
                    } else {
                        ResponseStatus::Ok
                    };
                    resp.text = c.text;
                    resp.error = None;
                    break;
                }
                Ok(_) => {
                    resp.error = Some("empty completion".into());
                }
                Err(f) => {
                    resp.error = Some(f.message.clone());
                    if !f.retryable {
                        break;
                    }
                }
            }
            if attempt >= spec.max_retries {
                break;
            }
            std::thread::sleep(spec.backoff(attempt));
            attempt += 1;
            local.retries += 1;
        }

        if resp.status == ResponseStatus::ProviderError {
            local.provider_errors += 1;
            log::warn!(
                "{} on {} ({}): {}",
                resp.question_id,
                resp.model,
                resp.frame,
                resp.error.as_deref().unwrap_or("unknown error")
            );
        } else if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&key, &resp) {
                log::warn!("failed to cache response {key}: {e}");
            }
        }
        (resp, local)
    }
}

fn open_log(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn save_responses(responses: &[RawResponse], path: &Path) -> Result<()> {
    crate::jsonl::save(responses, path)
}

pub fn load_responses(path: &Path) -> Result<Vec<RawResponse>> {
    crate::jsonl::load(path)
}
