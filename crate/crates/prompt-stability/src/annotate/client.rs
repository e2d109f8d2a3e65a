//! OpenAI-compatible chat-completions client.
//!
//! One request per annotation: the full prompt as the system message, the
//! text to classify as the user message. Sampling temperature defaults to 0.1
//! and top_p to 1.0, held constant for a whole run; the inter-prompt sweep's
//! "temperature" is a paraphrase knob and never touches these.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AnnotateError, AnnotationRequest, Annotator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmClientConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is read per request and never stored or logged.
    pub api_key_env: String,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(with = "humantime_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub parallelism: usize,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.1,
            top_p: 1.0,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            parallelism: 8,
        }
    }
}

mod humantime_ms {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

pub struct ChatClient {
    cfg: LlmClientConfig,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(cfg: LlmClientConfig) -> Result<Self, AnnotateError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| AnnotateError::Transport(e.to_string()))?;
        Ok(Self { cfg, http })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.cfg
    }

    /// One chat completion with (system, user) message parts; returns the
    /// assistant reply verbatim.
    pub fn complete(&self, system: &str, user: &str) -> Result<String, AnnotateError> {
        let key = std::env::var(&self.cfg.api_key_env).map_err(|_| {
            AnnotateError::AuthFailed(format!(
                "environment variable {} is not set",
                self.cfg.api_key_env
            ))
        })?;
        let url = format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'));
        let body = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.cfg.temperature,
            "top_p": self.cfg.top_p,
        });
        let response = self
            .http
            .post(&url)
            .bearer_auth(&key)
            .json(&body)
            .send()
            .map_err(|e| AnnotateError::Transport(e.to_string()))?;

        let status = response.status();
        if status.as_u16() == 429 {
            let retry_after = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.parse::<f64>().ok())
                .map(Duration::from_secs_f64);
            return Err(AnnotateError::RateLimited { retry_after });
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(AnnotateError::AuthFailed(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(AnnotateError::Transport(format!("HTTP {status}")));
        }
        let text = response
            .text()
            .map_err(|e| AnnotateError::Transport(e.to_string()))?;
        parse_chat_response(&text)
    }

    /// A clone of this client with a different sampling temperature, used by
    /// the LLM paraphrase provider.
    pub fn with_sampling_temperature(&self, temperature: f64) -> Result<Self, AnnotateError> {
        let mut cfg = self.cfg.clone();
        cfg.temperature = temperature;
        Self::new(cfg)
    }
}

/// Extracts the first choice's message content from a chat-completions
/// response body.
pub fn parse_chat_response(body: &str) -> Result<String, AnnotateError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| AnnotateError::Transport(format!("malformed response body: {e}")))?;
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(|s| s.to_string())
        .ok_or_else(|| {
            AnnotateError::Transport("response has no choices[0].message.content".into())
        })
}

impl Annotator for ChatClient {
    fn annotate(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        self.complete(req.full_prompt, req.text)
    }

    fn name(&self) -> &str {
        &self.cfg.model
    }

    fn max_parallelism(&self) -> usize {
        self.cfg.parallelism
    }
}

/// Free-function form of a single chat-completion annotation call.
pub fn chat_annotate(cfg: &LlmClientConfig, text: &str, prompt: &str) -> Result<String, AnnotateError> {
    ChatClient::new(cfg.clone())?.complete(prompt, text)
}
