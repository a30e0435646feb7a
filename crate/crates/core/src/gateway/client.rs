use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use super::image::data_url;
use super::parse::{parse_fewshot_reply, parse_label, LabelParse};
use super::prompt::{task1_prompt, CAPTION_PROMPT};
use super::{prompt_fingerprint, CacheKey, CaptionCache, CaptionRecord, EndpointConfig, GatewayError, GenerationParams};
use crate::labeling::ProblemSetup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
    /// Retries spent before this response arrived.
    pub retries: u32,
}

/// Exponential backoff with ±25% jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl RetryPolicy {
    pub fn from_config(config: &EndpointConfig) -> Self {
        RetryPolicy {
            max_retries: config.max_retries,
            base_delay: Duration::from_millis(config.backoff_base_ms),
            max_delay: Duration::from_secs(30),
            jitter: true,
        }
    }

    /// Delay before retry number `attempt + 1`.
    pub fn delay(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt))
            .min(self.max_delay);
        let jittered = if self.jitter {
            exp.mul_f64(rand::rng().random_range(0.75..1.25))
        } else {
            exp
        };
        match retry_after {
            Some(after) => jittered.max(after).min(self.max_delay),
            None => jittered,
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    requests: AtomicU64,
    retries: AtomicU64,
    failures: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EndpointStats {
    /// HTTP requests sent, retries included.
    pub requests: u64,
    pub retries: u64,
    /// Calls that ended in an error after exhausting retries.
    pub failures: u64,
}

enum Failure {
    Retry { rate_limited: bool, message: String, retry_after: Option<Duration> },
    Fatal(GatewayError),
}

/// A connected endpoint. Cheap to clone; clones share the concurrency limit
/// and counters.
#[derive(Clone)]
pub struct Endpoint {
    config: EndpointConfig,
    params: GenerationParams,
    http: reqwest::Client,
    limiter: Arc<Semaphore>,
    counters: Arc<Counters>,
    retry: RetryPolicy,
}

impl Endpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Endpoint {
            params: config.params(),
            limiter: Arc::new(Semaphore::new(config.max_concurrency)),
            retry: RetryPolicy::from_config(&config),
            counters: Arc::default(),
            http,
            config,
        })
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn params(&self) -> &GenerationParams {
        &self.params
    }

    pub fn stats(&self) -> EndpointStats {
        EndpointStats {
            requests: self.counters.requests.load(Ordering::SeqCst),
            retries: self.counters.retries.load(Ordering::SeqCst),
            failures: self.counters.failures.load(Ordering::SeqCst),
        }
    }

    fn token(&self) -> Result<Option<String>, GatewayError> {
        let Some(var) = &self.config.auth_env_var else {
            return Ok(None);
        };
        match std::env::var(var) {
            Ok(token) if !token.trim().is_empty() => Ok(Some(token)),
            _ => Err(GatewayError::Auth(format!("environment variable {var} is not set"))),
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Sends one prompt (and optionally an image), retrying transient
    /// failures.
    pub async fn complete(&self, prompt: &str, image: Option<&[u8]>) -> Result<Completion, GatewayError> {
        if image.is_some_and(<[u8]>::is_empty) {
            return Err(GatewayError::EmptyImage);
        }
        let token = self.token()?;
        let body = request_body(self.config.wire_model(), &self.params, prompt, image);
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire().await.expect("semaphore never closed");
                self.counters.requests.fetch_add(1, Ordering::SeqCst);
                self.send(&body, token.as_deref()).await
            };
            match outcome {
                Ok((text, usage)) => {
                    return Ok(Completion {
                        text,
                        usage,
                        retries: attempt,
                    })
                }
                Err(Failure::Retry { retry_after, .. }) if attempt < self.retry.max_retries => {
                    self.counters.retries.fetch_add(1, Ordering::SeqCst);
                    tokio::time::sleep(self.retry.delay(attempt, retry_after)).await;
                    attempt += 1;
                }
                Err(Failure::Retry { rate_limited, message, .. }) => {
                    self.counters.failures.fetch_add(1, Ordering::SeqCst);
                    let attempts = attempt + 1;
                    return Err(if rate_limited {
                        GatewayError::RateLimited { attempts }
                    } else {
                        GatewayError::Transport { attempts, message }
                    });
                }
                Err(Failure::Fatal(e)) => {
                    self.counters.failures.fetch_add(1, Ordering::SeqCst);
                    return Err(e);
                }
            }
        }
    }

    async fn send(&self, body: &Value, token: Option<&str>) -> Result<(String, Option<TokenUsage>), Failure> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| Failure::Retry {
            rate_limited: false,
            message: e.to_string(),
            retry_after: None,
        })?;
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.text().await.map_err(|e| Failure::Retry {
            rate_limited: false,
            message: e.to_string(),
            retry_after: None,
        })?;
        match status.as_u16() {
            200..=299 => parse_completion(&text).map_err(Failure::Fatal),
            401 | 403 => Err(Failure::Fatal(GatewayError::Auth(format!("HTTP {status}: {}", snippet(&text))))),
            429 => Err(Failure::Retry {
                rate_limited: true,
                message: snippet(&text),
                retry_after,
            }),
            408 | 500..=599 => Err(Failure::Retry {
                rate_limited: false,
                message: format!("HTTP {status}: {}", snippet(&text)),
                retry_after,
            }),
            code => Err(Failure::Fatal(GatewayError::Http {
                status: code,
                body: snippet(&text),
            })),
        }
    }

    /// Direct image classification. Ambiguous or unparseable replies are
    /// outcomes, not errors.
    pub async fn classify_image(&self, image: &[u8], setup: &ProblemSetup) -> Result<LabelParse, GatewayError> {
        if image.is_empty() {
            return Err(GatewayError::EmptyImage);
        }
        let reply = self.complete(&task1_prompt(setup), Some(image)).await?;
        Ok(parse_label(&reply.text, setup))
    }

    /// Text-only classification of a few-shot prompt.
    pub async fn classify_text(&self, prompt: &str, setup: &ProblemSetup) -> Result<LabelParse, GatewayError> {
        let reply = self.complete(prompt, None).await?;
        Ok(parse_fewshot_reply(&reply.text, setup))
    }

    pub fn caption_fingerprint(&self) -> String {
        prompt_fingerprint(CAPTION_PROMPT, &self.params)
    }

    pub fn caption_key(&self, image_id: &str) -> CacheKey {
        CacheKey {
            image_id: image_id.to_string(),
            model_name: self.config.name.clone(),
            prompt_fingerprint: self.caption_fingerprint(),
        }
    }

    /// Captions one image, consulting `cache` first. Concurrent calls for
    /// the same key wait for each other, so at most one request is issued.
    pub async fn caption_image(
        &self,
        image_id: &str,
        image: &[u8],
        cache: &CaptionCache,
    ) -> Result<CaptionRecord, GatewayError> {
        let key = self.caption_key(image_id);
        if let Some(hit) = cache.get(&key) {
            return Ok(hit);
        }
        let lock = cache.key_lock(&key);
        let _guard = lock.lock().await;
        if let Some(hit) = cache.get(&key) {
            return Ok(hit);
        }
        if image.is_empty() {
            return Err(GatewayError::EmptyImage);
        }
        let reply = self.complete(CAPTION_PROMPT, Some(image)).await?;
        let caption_text = reply.text.trim().to_string();
        if caption_text.is_empty() {
            return Err(GatewayError::EmptyCaption(image_id.to_string()));
        }
        let record = CaptionRecord {
            image_id: key.image_id,
            model_name: key.model_name,
            prompt_fingerprint: key.prompt_fingerprint,
            caption_text,
            created_at: chrono::Utc::now(),
            token_usage: reply.usage,
        };
        cache.insert(record.clone())?;
        Ok(record)
    }
}

/// Chat-completions request body.
pub fn request_body(model: &str, params: &GenerationParams, prompt: &str, image: Option<&[u8]>) -> Value {
    let content = match image {
        Some(bytes) => json!([
            {"type": "text", "text": prompt},
            {"type": "image_url", "image_url": {"url": data_url(bytes)}},
        ]),
        None => json!(prompt),
    };
    let mut body = json!({
        "model": model,
        "messages": [{"role": "user", "content": content}],
    });
    if let (Value::Object(map), Value::Object(extra)) = (&mut body, serde_json::to_value(params).expect("params serialize")) {
        map.extend(extra);
    }
    body
}

fn parse_completion(text: &str) -> Result<(String, Option<TokenUsage>), GatewayError> {
    let v: Value = serde_json::from_str(text).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    let reply = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        Value::Null => String::new(),
        other => return Err(GatewayError::Protocol(format!("unexpected content {other}"))),
    };
    if v["choices"].as_array().is_none_or(Vec::is_empty) {
        return Err(GatewayError::Protocol(format!("no choices in response: {}", snippet(text))));
    }
    let usage = v.get("usage").and_then(|u| serde_json::from_value(u.clone()).ok());
    Ok((reply, usage))
}

fn snippet(text: &str) -> String {
    const MAX: usize = 300;
    if text.len() <= MAX {
        return text.to_string();
    }
    let mut end = MAX;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…", &text[..end])
}
