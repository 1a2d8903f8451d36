//! OpenAI-compatible chat-completions client (OpenAI, OpenRouter, Together).

use std::time::Duration;

use serde_json::{json, Value};

use super::{Completion, CompletionRequest, Provider, ProviderFailure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub prefix: &'static str,
    pub base_url: &'static str,
    pub key_var: &'static str,
}

pub const ENDPOINTS: [Endpoint; 3] = [
    Endpoint {
        prefix: "openai",
        base_url: "https://api.openai.com/v1",
        key_var: "OPENAI_API_KEY",
    },
    Endpoint {
        prefix: "openrouter",
        base_url: "https://openrouter.ai/api/v1",
        key_var: "OPENROUTER_API_KEY",
    },
    Endpoint {
        prefix: "together",
        base_url: "https://api.together.xyz/v1",
        key_var: "TOGETHER_API_KEY",
    },
];

pub fn endpoint(prefix: &str) -> Option<Endpoint> {
    ENDPOINTS.iter().copied().find(|e| e.prefix == prefix)
}

pub struct ChatProvider {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl ChatProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            client,
        })
    }
}

/// Reasoning models reject a temperature parameter.
pub fn model_supports_temperature(model: &str) -> bool {
    let m = model.rsplit('/').next().unwrap_or(model).to_ascii_lowercase();
    !["o1", "o3", "o4"].iter().any(|p| m == *p || m.starts_with(&format!("{p}-")))
}

impl Provider for ChatProvider {
    fn supports_temperature(&self, model: &str) -> bool {
        model_supports_temperature(model)
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion, ProviderFailure> {
        let mut body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        if let Some(t) = req.temperature {
            body["temperature"] = json!(t);
        }
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderFailure::retryable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            let msg = format!("HTTP {status}: {text}");
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                ProviderFailure::retryable(msg)
            } else {
                ProviderFailure::fatal(msg)
            });
        }
        let v: Value = resp.json().map_err(|e| ProviderFailure::retryable(e.to_string()))?;
        let choice = &v["choices"][0];
        let text = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderFailure::fatal(format!("no completion text in response: {v}")))?
            .to_string();
        let truncated = choice["finish_reason"].as_str() == Some("length");
        Ok(Completion { text, truncated })
    }
}
