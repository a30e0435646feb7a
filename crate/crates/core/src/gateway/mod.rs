//! Multimodal and text model endpoints.
//!
//! All backends speak the chat-completions JSON shape: a user message with a
//! text part and, for image tasks, a base64 `data:` URL image part.

mod cache;
mod client;
pub mod image;
pub mod mock;
mod parse;
mod prompt;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheKey, CaptionCache};
pub use client::{Completion, Endpoint, EndpointStats, RetryPolicy, TokenUsage};
pub use parse::{parse_fewshot_reply, parse_label, LabelParse, ParseOutcome};
pub use prompt::{
    caption_prompt, class_id_mapping, fewshot_prompt, sentiment_question, task1_prompt, title_case,
    PromptError, Shot, CAPTION_PROMPT, FEWSHOT_DEFAULT_SHOTS, FEWSHOT_MAX_SHOTS, FEWSHOT_MIN_SHOTS,
};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited; gave up after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("empty caption for image {0}")]
    EmptyCaption(String),
    #[error("empty image payload")]
    EmptyImage,
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("image {uri}: {message}")]
    Image { uri: String, message: String },
    #[error("caption cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// Sampling settings sent with every request. Unset fields are omitted from
/// the wire so the backend applies its own default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_beams: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetition_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub do_sample: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 1.0,
            num_beams: None,
            max_tokens: None,
            repetition_penalty: None,
            do_sample: None,
            top_p: None,
        }
    }
}

impl GenerationParams {
    /// Defaults for the known model aliases; anything else gets backend
    /// defaults (temperature 1.0, nothing else set).
    pub fn for_alias(alias: &str) -> Self {
        let alias = alias.to_ascii_lowercase();
        if alias.starts_with("minigpt4") || alias.starts_with("minigpt-4") {
            GenerationParams {
                temperature: 0.1,
                num_beams: Some(1),
                ..Default::default()
            }
        } else if alias.starts_with("gpt4omini") || alias.starts_with("gpt-4o-mini") {
            GenerationParams {
                temperature: 1.0,
                max_tokens: Some(300),
                ..Default::default()
            }
        } else if alias.starts_with("deepseek") {
            GenerationParams {
                temperature: 0.1,
                max_tokens: Some(512),
                repetition_penalty: Some(1.1),
                do_sample: Some(true),
                top_p: Some(0.9),
                ..Default::default()
            }
        } else {
            GenerationParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(GatewayError::Config(format!("top_p must be in (0, 1], got {p}")));
            }
        }
        if let Some(r) = self.repetition_penalty {
            if !(r.is_finite() && r > 0.0) {
                return Err(GatewayError::Config(format!("repetition_penalty must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

fn default_timeout() -> f64 {
    120.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

/// One model endpoint as declared in the pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Alias used in cache keys and reports, e.g. `gpt4omini`.
    pub name: String,
    /// Root of the API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Model name sent on the wire; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    /// Overrides the alias defaults when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_params: Option<GenerationParams>,
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// First retry delay; doubles per attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl EndpointConfig {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>) -> Self {
        EndpointConfig {
            name: name.into(),
            base_url: base_url.into(),
            model: None,
            auth_env_var: None,
            gen_params: None,
            request_timeout: default_timeout(),
            max_retries: default_max_retries(),
            max_concurrency: default_concurrency(),
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn wire_model(&self) -> &str {
        self.model.as_deref().unwrap_or(&self.name)
    }

    pub fn params(&self) -> GenerationParams {
        self.gen_params
            .clone()
            .unwrap_or_else(|| GenerationParams::for_alias(&self.name))
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.name.trim().is_empty() {
            return Err(GatewayError::Config("endpoint name is empty".into()));
        }
        if self.max_concurrency == 0 {
            return Err(GatewayError::Config(format!("{}: max_concurrency must be >= 1", self.name)));
        }
        if !(self.request_timeout.is_finite() && self.request_timeout > 0.0) {
            return Err(GatewayError::Config(format!("{}: request_timeout must be > 0", self.name)));
        }
        self.params().validate()
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout)
    }
}

/// Hex SHA-256 over the exact prompt text and the serialized parameters.
pub fn prompt_fingerprint(prompt: &str, params: &GenerationParams) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(params).expect("params serialize"));
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub model_name: String,
    pub prompt_fingerprint: String,
    pub caption_text: String,
    pub created_at: chrono::DateTime<chrono::Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

impl CaptionRecord {
    pub fn key(&self) -> CacheKey {
        CacheKey {
            image_id: self.image_id.clone(),
            model_name: self.model_name.clone(),
            prompt_fingerprint: self.prompt_fingerprint.clone(),
        }
    }
}
