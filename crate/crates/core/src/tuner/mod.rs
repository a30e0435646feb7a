//! Client for the text-classifier training worker.
//!
//! The worker trains a linear probe over a frozen encoder or fine-tunes a
//! whole model on caption text, then serves predictions. It speaks JSON
//! over HTTP:
//!
//! | method | path                   | body              | reply               |
//! |--------|------------------------|-------------------|---------------------|
//! | GET    | `/healthz`             |                   | `{"status":"ok"}`   |
//! | POST   | `/train`               | [`TrainRequest`]  | [`ModelHandle`]     |
//! | POST   | `/models/{id}/predict` | `{"texts":[..]}`  | `{"predictions":[..]}` |
//! | DELETE | `/models/{id}`         |                   | `{"deleted":"<id>"}` |
//!
//! Failures carry `{"error":{"code":"...","message":"..."}}`. Codes used
//! by the client: `unknown_model` (404), `single_class_data` (422),
//! `base_model_unavailable`, `busy` (503), `resource_exhausted` (507).

pub mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::labeling::ProblemSetup;

#[derive(Debug, Error, PartialEq)]
pub enum TunerError {
    #[error("no tuner URL configured")]
    NotConfigured,
    #[error("tuner unavailable: {0}")]
    Unavailable(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("training samples contain a single class")]
    SingleClassData,
    #[error("sample {index} has class id {class_id}, setup has {classes} classes")]
    InvalidClassId { index: usize, class_id: usize, classes: usize },
    #[error("empty prediction batch")]
    EmptyBatch,
    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),
    #[error("tuner error {status} ({code}): {message}")]
    Remote { status: u16, code: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed tuner response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Only a classification head on top of a frozen encoder is trained.
    Probe,
    /// The whole model (or its low-rank adapters) is trained.
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: u32,
    pub patience: u32,
    pub batch_size: u32,
    pub seed: u64,
    /// Inverse-frequency class weights in the cross-entropy loss.
    pub class_weighting: bool,
}

impl HyperParams {
    pub fn for_mode(mode: TrainMode, seed: u64) -> Self {
        HyperParams {
            learning_rate: match mode {
                TrainMode::Probe => 2e-3,
                TrainMode::Finetune => 2e-5,
            },
            weight_decay: 0.01,
            max_epochs: 100,
            patience: 25,
            batch_size: 16,
            seed,
            class_weighting: true,
        }
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        let bad = |m: &str| Err(TunerError::HyperParams(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return bad("weight_decay must be non-negative");
        }
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("max_epochs, patience and batch_size must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience exceeds max_epochs");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSample {
    pub text: String,
    /// Wire class id, see [`crate::labeling::class_id`].
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub mode: TrainMode,
    pub base_model: String,
    pub setup: ProblemSetup,
    pub samples: Vec<TrainSample>,
    pub hyper: HyperParams,
}

impl TrainRequest {
    pub fn new(mode: TrainMode, base_model: impl Into<String>, setup: ProblemSetup, samples: Vec<TrainSample>, seed: u64) -> Self {
        TrainRequest {
            mode,
            base_model: base_model.into(),
            setup,
            samples,
            hyper: HyperParams::for_mode(mode, seed),
        }
    }

    /// Class ids below C and at least two distinct classes.
    pub fn validate(&self) -> Result<(), TunerError> {
        let classes = self.setup.classes;
        for (index, s) in self.samples.iter().enumerate() {
            if s.class_id >= classes {
                return Err(TunerError::InvalidClassId {
                    index,
                    class_id: s.class_id,
                    classes,
                });
            }
        }
        let first = self.samples.first().map(|s| s.class_id);
        if self.samples.iter().all(|s| Some(s.class_id) == first) {
            return Err(TunerError::SingleClassData);
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub best_val_f1: f64,
    pub epochs_run: u32,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHandle {
    pub model_id: String,
    pub mode: TrainMode,
    pub setup: ProblemSetup,
    pub metrics: TrainingMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_id: usize,
    pub scores: Vec<f64>,
}

#[derive(Deserialize)]
struct Predictions {
    predictions: Vec<Prediction>,
}

#[derive(Debug, Clone)]
pub struct TunerClient {
    base_url: String,
    http: reqwest::Client,
}

impl TunerClient {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, TunerError> {
        let base_url = base_url.trim_end_matches('/').to_string();
        if base_url.is_empty() {
            return Err(TunerError::NotConfigured);
        }
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TunerError::Transport(e.to_string()))?;
        Ok(TunerClient { base_url, http })
    }

    /// Fails with [`TunerError::NotConfigured`] when no URL is set, without
    /// touching the network.
    pub fn from_optional(base_url: Option<&str>, timeout: Duration) -> Result<Self, TunerError> {
        Self::new(base_url.ok_or(TunerError::NotConfigured)?, timeout)
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub async fn health(&self) -> Result<(), TunerError> {
        let resp = self
            .http
            .get(format!("{}/healthz", self.base_url))
            .send()
            .await
            .map_err(transport)?;
        let status = resp.status();
        if status.is_success() {
            Ok(())
        } else {
            Err(TunerError::Unavailable(format!("health check returned {status}")))
        }
    }

    pub async fn train(&self, req: &TrainRequest) -> Result<ModelHandle, TunerError> {
        req.validate()?;
        let resp = self
            .http
            .post(format!("{}/train", self.base_url))
            .json(req)
            .send()
            .await
            .map_err(transport)?;
        let handle: ModelHandle = decode(resp, None).await?;
        if handle.setup.classes != req.setup.classes {
            return Err(TunerError::Protocol("handle setup differs from request".into()));
        }
        Ok(handle)
    }

    /// One prediction per text, in input order.
    pub async fn predict(&self, model: &ModelHandle, texts: &[String]) -> Result<Vec<Prediction>, TunerError> {
        if texts.is_empty() {
            return Err(TunerError::EmptyBatch);
        }
        let resp = self
            .http
            .post(format!("{}/models/{}/predict", self.base_url, model.model_id))
            .json(&json!({ "texts": texts }))
            .send()
            .await
            .map_err(transport)?;
        let out: Predictions = decode(resp, Some(&model.model_id)).await?;
        if out.predictions.len() != texts.len() {
            return Err(TunerError::Protocol(format!(
                "{} predictions for {} texts",
                out.predictions.len(),
                texts.len()
            )));
        }
        let classes = model.setup.classes;
        for p in &out.predictions {
            if p.class_id >= classes || p.scores.len() != classes {
                return Err(TunerError::Protocol(format!(
                    "prediction {p:?} does not fit {classes} classes"
                )));
            }
        }
        Ok(out.predictions)
    }

    pub async fn delete(&self, model_id: &str) -> Result<(), TunerError> {
        let resp = self
            .http
            .delete(format!("{}/models/{model_id}", self.base_url))
            .send()
            .await
            .map_err(transport)?;
        decode::<Value>(resp, Some(model_id)).await.map(|_| ())
    }
}

fn transport(e: reqwest::Error) -> TunerError {
    if e.is_connect() {
        TunerError::Unavailable(e.to_string())
    } else {
        TunerError::Transport(e.to_string())
    }
}

async fn decode<T: serde::de::DeserializeOwned>(resp: reqwest::Response, model_id: Option<&str>) -> Result<T, TunerError> {
    let status = resp.status();
    let text = resp.text().await.map_err(transport)?;
    if status.is_success() {
        return serde_json::from_str(&text).map_err(|e| TunerError::Protocol(e.to_string()));
    }
    let body: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
    let code = body["error"]["code"].as_str().unwrap_or("").to_string();
    let message = body["error"]["message"].as_str().unwrap_or(&text).to_string();
    Err(match (status.as_u16(), code.as_str()) {
        (_, "unknown_model") | (404, _) if model_id.is_some() => {
            TunerError::UnknownModel(model_id.unwrap_or_default().to_string())
        }
        (_, "single_class_data") => TunerError::SingleClassData,
        (503, _) => TunerError::Unavailable(message),
        (status, _) => TunerError::Remote { status, code, message },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetId;

    fn setup() -> ProblemSetup {
        ProblemSetup::from_key(DatasetId::Percept5, "s3p2").unwrap()
    }

    fn sample(text: &str, class_id: usize) -> TrainSample {
        TrainSample {
            text: text.into(),
            class_id,
        }
    }

    #[test]
    fn default_hyperparameters() {
        let probe = HyperParams::for_mode(TrainMode::Probe, 1);
        assert_eq!(probe.learning_rate, 2e-3);
        assert_eq!(HyperParams::for_mode(TrainMode::Finetune, 1).learning_rate, 2e-5);
        assert_eq!((probe.weight_decay, probe.max_epochs, probe.patience), (0.01, 100, 25));
        assert!(probe.class_weighting);
        probe.validate().unwrap();
        let mut bad = probe.clone();
        bad.patience = 101;
        assert!(matches!(bad.validate(), Err(TunerError::HyperParams(_))));
    }

    #[test]
    fn request_validation() {
        let ok = TrainRequest::new(TrainMode::Probe, "enc", setup(), vec![sample("a", 0), sample("b", 1)], 0);
        ok.validate().unwrap();
        let single = TrainRequest::new(TrainMode::Probe, "enc", setup(), vec![sample("a", 1), sample("b", 1)], 0);
        assert_eq!(single.validate(), Err(TunerError::SingleClassData));
        let empty = TrainRequest::new(TrainMode::Probe, "enc", setup(), vec![], 0);
        assert_eq!(empty.validate(), Err(TunerError::SingleClassData));
        let out_of_range = TrainRequest::new(TrainMode::Probe, "enc", setup(), vec![sample("a", 0), sample("b", 2)], 0);
        assert_eq!(
            out_of_range.validate(),
            Err(TunerError::InvalidClassId { index: 1, class_id: 2, classes: 2 })
        );
    }

    #[test]
    fn wire_shape() {
        let req = TrainRequest::new(TrainMode::Finetune, "enc", setup(), vec![sample("a", 0)], 3);
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["mode"], "finetune");
        assert_eq!(v["samples"][0], json!({"text": "a", "class_id": 0}));
        assert_eq!(v["hyper"]["seed"], 3);
        assert_eq!(v["setup"]["classes"], 2);
    }

    #[test]
    fn missing_url() {
        assert!(matches!(
            TunerClient::from_optional(None, Duration::from_secs(1)),
            Err(TunerError::NotConfigured)
        ));
    }
}
