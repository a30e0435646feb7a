//! Scripted chat-completions server for tests and offline dry runs.
//!
//! A script is JSON:
//!
//! ```json
//! {
//!   "rules": [
//!     { "image_sha256": "9f86d0...", "responses": [{ "reply": "Neutral" }] },
//!     { "contains": "Describe this image",
//!       "responses": [{ "status": 500 }, { "status": 500 }, { "reply": "A quiet park." }] }
//!   ],
//!   "fallback": [{ "reply": "I cannot help with that" }]
//! }
//! ```
//!
//! The first rule whose matchers all hold answers the request. `contains`
//! matches a substring of the raw request body, `image_sha256` the hex
//! SHA-256 of any attached image. Each rule walks its `responses` in order
//! and repeats the last one once exhausted. A response is either `reply`
//! (wrapped into a completion) or a raw `body`, with optional `status`
//! (default 200), `delay_ms` and `retry_after` seconds. Requests matching
//! nothing get 404.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

use super::image::decode_data_url;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub fallback: Vec<MockResponse>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sha256: Option<String>,
    pub responses: Vec<MockResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockResponse {
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after: Option<u64>,
}

fn ok_status() -> u16 {
    200
}

impl MockResponse {
    pub fn reply(text: impl Into<String>) -> Self {
        MockResponse {
            status: 200,
            reply: Some(text.into()),
            body: None,
            delay_ms: 0,
            retry_after: None,
        }
    }

    pub fn status(status: u16) -> Self {
        MockResponse {
            status,
            reply: None,
            body: None,
            delay_ms: 0,
            retry_after: None,
        }
    }

    pub fn with_delay(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }
}

impl MockScript {
    /// Every request gets `text`.
    pub fn always(text: impl Into<String>) -> Self {
        MockScript {
            rules: Vec::new(),
            fallback: vec![MockResponse::reply(text)],
        }
    }

    /// Replies chosen by the attached image's digest.
    pub fn by_image<'a>(pairs: impl IntoIterator<Item = (&'a [u8], String)>) -> Self {
        MockScript {
            rules: pairs
                .into_iter()
                .map(|(image, reply)| MockRule {
                    image_sha256: Some(sha256_hex(image)),
                    responses: vec![MockResponse::reply(reply)],
                    ..Default::default()
                })
                .collect(),
            fallback: Vec::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Default)]
struct State {
    script: MockScript,
    cursors: Mutex<Vec<usize>>,
    fallback_cursor: AtomicUsize,
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    received: Mutex<Vec<Value>>,
}

impl State {
    fn pick(&self, raw: &str, images: &[String]) -> Option<MockResponse> {
        let matched = self.script.rules.iter().position(|rule| {
            rule.contains.as_ref().is_none_or(|s| raw.contains(s.as_str()))
                && rule
                    .image_sha256
                    .as_ref()
                    .is_none_or(|h| images.iter().any(|i| i.eq_ignore_ascii_case(h)))
        });
        let (responses, cursor) = match matched {
            Some(i) => {
                let mut cursors = self.cursors.lock().unwrap();
                let c = cursors[i];
                cursors[i] += 1;
                (&self.script.rules[i].responses, c)
            }
            None => (
                &self.script.fallback,
                self.fallback_cursor.fetch_add(1, Ordering::SeqCst),
            ),
        };
        let last = responses.len().checked_sub(1)?;
        Some(responses[cursor.min(last)].clone())
    }
}

/// A running mock server bound to a loopback port. Shuts down on drop.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<State>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl MockServer {
    pub async fn start(script: MockScript) -> std::io::Result<Self> {
        let state = Arc::new(State {
            cursors: Mutex::new(vec![0; script.rules.len()]),
            script,
            ..Default::default()
        });
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let app = Router::new().fallback({
            let state = state.clone();
            move |body: Bytes| handle(state.clone(), body)
        });
        let (tx, rx) = oneshot::channel();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockServer {
            addr,
            state,
            shutdown: Some(tx),
        })
    }

    /// Base URL in the `.../v1` form endpoints expect.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Requests received so far.
    pub fn requests(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    /// Highest number of requests that were in flight at the same time.
    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }

    /// Parsed request bodies in arrival order.
    pub fn received(&self) -> Vec<Value> {
        self.state.received.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

async fn handle(state: Arc<State>, body: Bytes) -> Response {
    state.requests.fetch_add(1, Ordering::SeqCst);
    let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_in_flight.fetch_max(now, Ordering::SeqCst);

    let raw = String::from_utf8_lossy(&body).into_owned();
    let parsed: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
    let images = attached_images(&parsed);
    state.received.lock().unwrap().push(parsed);
    let picked = state.pick(&raw, &images);

    if let Some(delay) = picked.as_ref().map(|r| r.delay_ms).filter(|&d| d > 0) {
        tokio::time::sleep(Duration::from_millis(delay)).await;
    }
    state.in_flight.fetch_sub(1, Ordering::SeqCst);

    let Some(r) = picked else {
        return (StatusCode::NOT_FOUND, "no scripted response").into_response();
    };
    let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let body = match (&r.body, &r.reply) {
        (Some(body), _) => body.clone(),
        (None, Some(reply)) => completion_json(reply),
        (None, None) => json!({"error": {"message": format!("scripted status {}", r.status)}}).to_string(),
    };
    let mut resp = (status, [("content-type", "application/json")], body).into_response();
    if let Some(secs) = r.retry_after {
        resp.headers_mut()
            .insert("retry-after", HeaderValue::from_str(&secs.to_string()).expect("digits"));
    }
    resp
}

fn completion_json(reply: &str) -> String {
    json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": reply}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
    })
    .to_string()
}

fn attached_images(body: &Value) -> Vec<String> {
    let mut out = Vec::new();
    for message in body["messages"].as_array().into_iter().flatten() {
        for part in message["content"].as_array().into_iter().flatten() {
            if let Some(bytes) = part["image_url"]["url"].as_str().and_then(decode_data_url) {
                out.push(sha256_hex(&bytes));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_json_shape() {
        let script: MockScript = serde_json::from_str(
            r#"{"rules":[{"contains":"Describe","responses":[{"status":500},{"reply":"ok","delay_ms":5}]}],
                "fallback":[{"body":"{}","status":200}]}"#,
        )
        .unwrap();
        assert_eq!(script.rules[0].responses[0].status, 500);
        assert_eq!(script.rules[0].responses[1].reply.as_deref(), Some("ok"));
        assert!(serde_json::from_str::<MockScript>(r#"{"rulez":[]}"#).is_err());
    }

    #[test]
    fn rule_cursor_repeats_last() {
        let state = State {
            cursors: Mutex::new(vec![0]),
            script: MockScript {
                rules: vec![MockRule {
                    contains: Some("x".into()),
                    image_sha256: None,
                    responses: vec![MockResponse::status(500), MockResponse::reply("done")],
                }],
                fallback: vec![],
            },
            ..Default::default()
        };
        assert_eq!(state.pick("x", &[]).unwrap().status, 500);
        assert_eq!(state.pick("x", &[]).unwrap().reply.as_deref(), Some("done"));
        assert_eq!(state.pick("x", &[]).unwrap().reply.as_deref(), Some("done"));
        assert!(state.pick("y", &[]).is_none());
    }
}
