//! In-process stand-in for the training worker.
//!
//! "Training" memorizes the samples. Prediction returns the memorized class
//! for an exact text match and otherwise votes by shared word tokens, with
//! ties going to the lower class id. Enough to exercise the protocol and
//! per-fold plumbing without any model.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use super::{ModelHandle, TrainRequest, TrainSample, TrainingMetrics};

struct Model {
    classes: usize,
    exact: HashMap<String, usize>,
    tokens: Vec<BTreeSet<String>>,
}

impl Model {
    fn fit(classes: usize, samples: &[TrainSample]) -> Self {
        let mut tokens = vec![BTreeSet::new(); classes];
        let mut exact = HashMap::new();
        for s in samples {
            exact.insert(s.text.clone(), s.class_id);
            tokens[s.class_id].extend(words(&s.text));
        }
        Model { classes, exact, tokens }
    }

    fn predict(&self, text: &str) -> (usize, Vec<f64>) {
        let raw: Vec<f64> = match self.exact.get(text) {
            Some(&c) => (0..self.classes).map(|i| if i == c { 1.0 } else { 0.0 }).collect(),
            None => {
                let ws = words(text);
                (0..self.classes)
                    .map(|c| 1.0 + ws.iter().filter(|w| self.tokens[c].contains(*w)).count() as f64)
                    .collect()
            }
        };
        let sum: f64 = raw.iter().sum();
        let scores: Vec<f64> = raw.iter().map(|x| x / sum).collect();
        let best = scores
            .iter()
            .enumerate()
            .fold(0, |b, (i, s)| if *s > scores[b] { i } else { b });
        (best, scores)
    }
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 2)
        .map(str::to_lowercase)
        .collect()
}

#[derive(Default)]
struct Inner {
    models: HashMap<String, Model>,
    next_id: u64,
    trained: Vec<TrainRequest>,
}

type Shared = Arc<Mutex<Inner>>;

fn error(status: StatusCode, code: &str, message: String) -> Response {
    (status, Json(json!({"error": {"code": code, "message": message}}))).into_response()
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn train(State(state): State<Shared>, Json(req): Json<TrainRequest>) -> Response {
    let classes = req.setup.classes;
    if let Some(s) = req.samples.iter().find(|s| s.class_id >= classes) {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_class_id",
            format!("class id {} with {classes} classes", s.class_id),
        );
    }
    let distinct: BTreeSet<usize> = req.samples.iter().map(|s| s.class_id).collect();
    if distinct.len() < 2 {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "single_class_data",
            "samples contain one class".into(),
        );
    }
    let model = Model::fit(classes, &req.samples);
    let correct = req
        .samples
        .iter()
        .filter(|s| model.predict(&s.text).0 == s.class_id)
        .count();
    let mut inner = state.lock().unwrap();
    inner.next_id += 1;
    let model_id = format!("mock-{:04}", inner.next_id);
    inner.models.insert(model_id.clone(), model);
    let handle = ModelHandle {
        model_id,
        mode: req.mode,
        setup: req.setup.clone(),
        metrics: TrainingMetrics {
            best_val_f1: correct as f64 / req.samples.len() as f64,
            epochs_run: 1,
            stopped_early: false,
        },
    };
    inner.trained.push(req);
    Json(handle).into_response()
}

async fn predict(State(state): State<Shared>, Path(id): Path<String>, Json(body): Json<Value>) -> Response {
    let inner = state.lock().unwrap();
    let Some(model) = inner.models.get(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown_model", format!("no model {id}"));
    };
    let Some(texts) = body["texts"].as_array().filter(|t| !t.is_empty()) else {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "empty_batch", "no texts".into());
    };
    let predictions: Vec<Value> = texts
        .iter()
        .map(|t| {
            let (class_id, scores) = model.predict(t.as_str().unwrap_or(""));
            json!({"class_id": class_id, "scores": scores})
        })
        .collect();
    Json(json!({ "predictions": predictions })).into_response()
}

async fn remove(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match state.lock().unwrap().models.remove(&id) {
        Some(_) => Json(json!({ "deleted": id })).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown_model", format!("no model {id}")),
    }
}

/// Loopback mock worker. Shuts down on drop.
pub struct MockTuner {
    addr: SocketAddr,
    state: Shared,
    shutdown: Option<oneshot::Sender<()>>,
}

impl MockTuner {
    pub async fn start() -> std::io::Result<Self> {
        let state: Shared = Arc::default();
        let app = Router::new()
            .route("/healthz", get(healthz))
            .route("/train", post(train))
            .route("/models/{id}/predict", post(predict))
            .route("/models/{id}", delete(remove))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockTuner {
            addr,
            state,
            shutdown: Some(tx),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Every training request received, in order.
    pub fn train_requests(&self) -> Vec<TrainRequest> {
        self.state.lock().unwrap().trained.clone()
    }

    pub fn live_models(&self) -> usize {
        self.state.lock().unwrap().models.len()
    }
}

impl Drop for MockTuner {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
