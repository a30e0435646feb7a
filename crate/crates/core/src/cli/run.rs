use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::artifacts::{check_leakage, FoldManifest, InstanceRef, PredictionRow};
use super::config::PipelineConfig;
use super::CliError;
use crate::corpus::{ingest, Dataset, DatasetId};
use crate::evalkit::{make_folds, ConfusionMatrix, EvalReport, FoldPlan, Metric};
use crate::gateway::image::load_image;
use crate::gateway::{
    fewshot_prompt, prompt_fingerprint, CaptionCache, Endpoint, GatewayError, LabelParse, ParseOutcome, Shot,
    CAPTION_PROMPT, FEWSHOT_MAX_SHOTS, FEWSHOT_MIN_SHOTS,
};
use crate::labeling::{build_subset, class_id, label_index_from_class_id, LabeledInstance, ProblemSetup};
use crate::lexicon::LexiconError;
use crate::tuner::{ModelHandle, TrainMode, TrainRequest, TrainSample, TunerClient, TunerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    /// Direct image classification by a vision-language model.
    #[value(name = "task1")]
    Task1,
    /// Lexicon scoring of captions.
    #[value(name = "task2a_lexicon", alias = "task2a-lexicon")]
    Task2aLexicon,
    /// Few-shot caption classification by a text model.
    #[value(name = "task2a_fewshot", alias = "task2a-fewshot")]
    Task2aFewshot,
    /// Linear probe over a frozen encoder, via the tuner.
    #[value(name = "task2a_probe", alias = "task2a-probe")]
    Task2aProbe,
    /// Fine-tuned caption classifier, via the tuner.
    #[value(name = "task2b")]
    Task2b,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Task1 => "task1",
            Task::Task2aLexicon => "task2a_lexicon",
            Task::Task2aFewshot => "task2a_fewshot",
            Task::Task2aProbe => "task2a_probe",
            Task::Task2b => "task2b",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub task: Task,
    pub setup: ProblemSetup,
    /// Classifying model: the vision model for task1, the text model for
    /// few-shot.
    pub model: Option<String>,
    /// Model whose cached captions feed the task2 variants.
    pub captioner: Option<String>,
    pub base_model: Option<String>,
    pub shots: Option<usize>,
}

pub struct RunOutcome {
    pub report: EvalReport,
    pub plan: FoldPlan,
    pub predictions: Vec<PredictionRow>,
    pub manifests: Vec<FoldManifest>,
    /// Instances whose request failed outright.
    pub failures: usize,
}

/// One instance's prediction before fold bookkeeping.
#[derive(Debug, Clone, Default)]
struct Pred {
    predicted: Option<usize>,
    outcome: &'static str,
    raw_text: Option<String>,
    error: Option<String>,
}

impl Pred {
    fn label(index: usize) -> Self {
        Pred {
            predicted: Some(index),
            outcome: "label",
            ..Default::default()
        }
    }

    fn parsed(p: LabelParse) -> Self {
        let outcome = match p.outcome {
            ParseOutcome::Label(_) => "label",
            ParseOutcome::Ambiguous => "ambiguous",
            ParseOutcome::Unparseable => "unparseable",
        };
        Pred {
            predicted: p.label(),
            outcome,
            raw_text: Some(p.raw_text),
            error: None,
        }
    }

    fn failed(e: &GatewayError) -> Self {
        Pred {
            predicted: None,
            outcome: "failed",
            raw_text: None,
            error: Some(e.to_string()),
        }
    }
}

pub(crate) fn load_dataset(config: &PipelineConfig, id: DatasetId) -> Result<Dataset, CliError> {
    let d = config.dataset(id)?;
    d.check_exists()?;
    Ok(ingest(&d.path, &d.profile_for(id))?)
}

fn required<'a>(value: &'a Option<String>, flag: &str, task: &str) -> Result<&'a str, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("{task} needs --{flag}")))
}

fn tuner_client(config: &PipelineConfig) -> Result<TunerClient, CliError> {
    TunerClient::from_optional(config.tuner_url.as_deref(), Duration::from_secs_f64(config.tuner.timeout))
        .map_err(|e| match e {
            TunerError::NotConfigured => CliError::TunerUnavailable("no tuner_url configured".into()),
            other => CliError::Tuner(other),
        })
}

fn tuner_err(e: TunerError) -> CliError {
    match e {
        TunerError::Unavailable(m) | TunerError::Transport(m) => CliError::TunerUnavailable(m),
        other => CliError::Tuner(other),
    }
}

/// Cached captions of `captioner` for every instance, or `MissingCaptions`.
pub(crate) fn require_captions<'a>(
    config: &PipelineConfig,
    captioner: &str,
    ids: impl IntoIterator<Item = &'a str>,
) -> Result<HashMap<String, String>, CliError> {
    let endpoint = config.endpoint(captioner)?;
    let fingerprint = prompt_fingerprint(CAPTION_PROMPT, &endpoint.params());
    let cache = CaptionCache::open(&config.cache)?;
    let available = cache.captions_for(&endpoint.name, &fingerprint);
    let mut out = HashMap::new();
    let mut missing = Vec::new();
    for id in ids {
        match available.get(id) {
            Some(rec) => {
                out.insert(id.to_string(), rec.caption_text.clone());
            }
            None => missing.push(id.to_string()),
        }
    }
    if let Some(first) = missing.first() {
        return Err(CliError::MissingCaptions {
            model: captioner.to_string(),
            missing: missing.len(),
            example: first.clone(),
        });
    }
    Ok(out)
}

fn fold_members(subset: &[LabeledInstance], plan: &FoldPlan, fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, inst) in subset.iter().enumerate() {
        if plan.fold_of(&inst.image_id) == Some(fold) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

fn refs(dataset: DatasetId, subset: &[LabeledInstance], idx: &[usize]) -> Vec<InstanceRef> {
    idx.iter()
        .map(|&i| InstanceRef::new(dataset, subset[i].image_id.clone()))
        .collect()
}

/// Runs one task over the stratified folds of `setup`'s subset.
pub async fn run_task(config: &PipelineConfig, spec: &RunSpec) -> Result<RunOutcome, CliError> {
    let setup = &spec.setup;
    let dataset_id = setup.dataset_id;
    let task = spec.task.as_str();

    // Preconditions that need neither data nor network.
    match spec.task {
        Task::Task2aLexicon if !matches!(setup.classes, 2 | 3) => {
            return Err(LexiconError::UnsupportedSetup(setup.classes).into());
        }
        Task::Task2aFewshot => {
            let shots = spec.shots.unwrap_or(config.fewshot.shots);
            if !(FEWSHOT_MIN_SHOTS..=FEWSHOT_MAX_SHOTS).contains(&shots) {
                return Err(crate::gateway::PromptError::ShotCountOutOfRange(shots).into());
            }
        }
        _ => {}
    }
    let tuner = match spec.task {
        Task::Task2aProbe | Task::Task2b => Some(tuner_client(config)?),
        _ => None,
    };

    let dataset = load_dataset(config, dataset_id)?;
    let subset = build_subset(&dataset, setup)?;
    let pairs: Vec<(&str, usize)> = subset.iter().map(|i| (i.image_id.as_str(), i.label_index)).collect();
    let plan = make_folds(&pairs, config.folds, config.seed)?;

    let mut manifests: Vec<FoldManifest> = (0..plan.k)
        .map(|f| {
            let (_, test) = fold_members(&subset, &plan, f);
            FoldManifest {
                fold: f,
                train: Vec::new(),
                eval: refs(dataset_id, &subset, &test),
            }
        })
        .collect();

    let (system_id, preds) = match spec.task {
        Task::Task1 => {
            let model = required(&spec.model, "model", task)?;
            let endpoint = Endpoint::new(config.endpoint(model)?.clone())?;
            let base = config.dataset(dataset_id)?.image_base();
            let preds = classify_images(&endpoint, &dataset, &subset, setup, &base).await?;
            (format!("task1/{model}"), preds)
        }
        Task::Task2aLexicon => {
            let captioner = required(&spec.captioner, "captioner", task)?;
            let captions = require_captions(config, captioner, subset.iter().map(|i| i.image_id.as_str()))?;
            let table = config.lexicon_table()?;
            let scoring = config.lexicon.scoring;
            let preds = subset
                .iter()
                .map(|inst| {
                    let text = &captions[&inst.image_id];
                    let score = table.score_with(text, &scoring)?;
                    let label = crate::lexicon::label_for_setup(&score, setup)?;
                    Ok(Pred {
                        raw_text: Some(format!("{:.4}", score.value)),
                        ..Pred::label(label)
                    })
                })
                .collect::<Result<Vec<_>, LexiconError>>()?;
            (format!("lexicon/{captioner}"), preds)
        }
        Task::Task2aFewshot => {
            let captioner = required(&spec.captioner, "captioner", task)?;
            let model = required(&spec.model, "model", task)?;
            let shots = spec.shots.unwrap_or(config.fewshot.shots);
            let captions = require_captions(config, captioner, subset.iter().map(|i| i.image_id.as_str()))?;
            let endpoint = Endpoint::new(config.endpoint(model)?.clone())?;
            let mut preds = vec![Pred::default(); subset.len()];
            for (fold, manifest) in manifests.iter_mut().enumerate() {
                let (train, test) = fold_members(&subset, &plan, fold);
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(fold as u64));
                let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, train.len(), shots.min(train.len()))
                    .into_iter()
                    .map(|i| train[i])
                    .collect();
                chosen.sort_unstable();
                let shot_list: Vec<Shot> = chosen
                    .iter()
                    .map(|&i| Shot {
                        caption: captions[&subset[i].image_id].clone(),
                        label_index: subset[i].label_index,
                    })
                    .collect();
                manifest.train = refs(dataset_id, &subset, &chosen);
                let prompts = test
                    .iter()
                    .map(|&i| fewshot_prompt(setup, &shot_list, &captions[&subset[i].image_id]))
                    .collect::<Result<Vec<_>, _>>()?;
                let replies = classify_prompts(&endpoint, setup, prompts).await?;
                for (&i, p) in test.iter().zip(replies) {
                    preds[i] = p;
                }
            }
            (format!("fewshot/{captioner}+{model}"), preds)
        }
        Task::Task2aProbe | Task::Task2b => {
            let tuner = tuner.expect("tuner client built above");
            let captioner = required(&spec.captioner, "captioner", task)?;
            let base_model = spec
                .base_model
                .clone()
                .or_else(|| config.tuner.base_model.clone())
                .ok_or_else(|| CliError::Config(format!("{task} needs --base-model or tuner.base_model")))?;
            let mode = if spec.task == Task::Task2aProbe {
                TrainMode::Probe
            } else {
                TrainMode::Finetune
            };
            let captions = require_captions(config, captioner, subset.iter().map(|i| i.image_id.as_str()))?;
            tuner.health().await.map_err(tuner_err)?;
            let mut preds = vec![Pred::default(); subset.len()];
            for (fold, manifest) in manifests.iter_mut().enumerate() {
                let (train, test) = fold_members(&subset, &plan, fold);
                manifest.train = refs(dataset_id, &subset, &train);
                let samples = train
                    .iter()
                    .map(|&i| TrainSample {
                        text: captions[&subset[i].image_id].clone(),
                        class_id: class_id(subset[i].label_index, setup.classes),
                    })
                    .collect();
                let req = TrainRequest::new(
                    mode,
                    base_model.clone(),
                    setup.clone(),
                    samples,
                    config.seed.wrapping_add(fold as u64),
                );
                let handle = tuner.train(&req).await.map_err(tuner_err)?;
                let texts: Vec<String> = test.iter().map(|&i| captions[&subset[i].image_id].clone()).collect();
                let out = predict_and_release(&tuner, &handle, &texts).await?;
                for (&i, p) in test.iter().zip(out) {
                    preds[i] = p;
                }
            }
            let tag = if mode == TrainMode::Probe { "probe" } else { "finetune" };
            (format!("{tag}/{captioner}+{base_model}"), preds)
        }
    };

    check_leakage(&manifests)?;

    let mut folds = vec![ConfusionMatrix::new(setup.classes); plan.k];
    let mut predictions = Vec::with_capacity(subset.len());
    let mut failures = 0;
    for (inst, p) in subset.iter().zip(preds) {
        let fold = plan.fold_of(&inst.image_id).expect("every subset instance has a fold");
        folds[fold].record(inst.label_index, p.predicted);
        if p.outcome == "failed" {
            failures += 1;
        }
        predictions.push(PredictionRow {
            dataset_id,
            image_id: inst.image_id.clone(),
            fold,
            truth: inst.label_index,
            predicted: p.predicted,
            outcome: p.outcome.to_string(),
            raw_text: p.raw_text,
            error: p.error,
        });
    }
    let report = EvalReport::from_folds(setup.clone(), system_id, Metric::FScore, config.averaging, config.seed, &folds)?;
    Ok(RunOutcome {
        report,
        plan,
        predictions,
        manifests,
        failures,
    })
}

/// Errors that end the whole run rather than one instance.
fn is_fatal(e: &GatewayError) -> bool {
    matches!(e, GatewayError::Auth(_) | GatewayError::Config(_) | GatewayError::Cache { .. })
}

fn first_fatal(results: &[Result<LabelParse, GatewayError>]) -> Option<GatewayError> {
    results.iter().find_map(|r| match r {
        Err(e) if is_fatal(e) => Some(match e {
            GatewayError::Auth(m) => GatewayError::Auth(m.clone()),
            GatewayError::Config(m) => GatewayError::Config(m.clone()),
            other => GatewayError::Config(other.to_string()),
        }),
        _ => None,
    })
}

fn window(endpoint: &Endpoint) -> usize {
    endpoint.config().max_concurrency.max(1) * 2
}

async fn classify_images(
    endpoint: &Endpoint,
    dataset: &Dataset,
    subset: &[LabeledInstance],
    setup: &ProblemSetup,
    base: &Path,
) -> Result<Vec<Pred>, CliError> {
    let http = reqwest::Client::new();
    let index = dataset.index();
    let results: Vec<Result<LabelParse, GatewayError>> = stream::iter(subset.iter())
        .map(|inst| {
            let uri = index[inst.image_id.as_str()].image_uri.clone();
            let http = &http;
            async move {
                let image = load_image(&uri, base, http).await?;
                endpoint.classify_image(&image, setup).await
            }
        })
        .buffered(window(endpoint))
        .collect()
        .await;
    if let Some(e) = first_fatal(&results) {
        return Err(e.into());
    }
    Ok(results
        .into_iter()
        .map(|r| match r {
            Ok(p) => Pred::parsed(p),
            Err(e) => Pred::failed(&e),
        })
        .collect())
}

async fn classify_prompts(endpoint: &Endpoint, setup: &ProblemSetup, prompts: Vec<String>) -> Result<Vec<Pred>, CliError> {
    let results: Vec<Result<LabelParse, GatewayError>> = stream::iter(prompts)
        .map(|prompt| async move { endpoint.classify_text(&prompt, setup).await })
        .buffered(window(endpoint))
        .collect()
        .await;
    if let Some(e) = first_fatal(&results) {
        return Err(e.into());
    }
    Ok(results
        .into_iter()
        .map(|r| match r {
            Ok(p) => Pred::parsed(p),
            Err(e) => Pred::failed(&e),
        })
        .collect())
}

/// Predicts, then deletes the model whether or not prediction worked.
async fn predict_and_release(tuner: &TunerClient, handle: &ModelHandle, texts: &[String]) -> Result<Vec<Pred>, CliError> {
    let result = if texts.is_empty() {
        Ok(Vec::new())
    } else {
        tuner.predict(handle, texts).await
    };
    let deleted = tuner.delete(&handle.model_id).await;
    let predictions = result.map_err(tuner_err)?;
    deleted.map_err(tuner_err)?;
    Ok(predictions
        .into_iter()
        .map(|p| {
            let label = label_index_from_class_id(p.class_id, handle.setup.classes);
            Pred {
                predicted: label,
                outcome: if label.is_some() { "label" } else { "unparseable" },
                raw_text: Some(p.class_id.to_string()),
                error: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct CrossSpec {
    pub captioner: String,
    pub mode: TrainMode,
    pub base_model: Option<String>,
    /// PerceptSent setup trained on; must have two classes.
    pub train_key: String,
    pub eval_keys: Vec<String>,
}

pub struct CrossOutcome {
    pub reports: Vec<EvalReport>,
    pub manifests: Vec<FoldManifest>,
    pub predictions: Vec<(String, Vec<PredictionRow>)>,
}

/// Trains one model per PerceptSent training split and scores every DeepSent
/// instance with each, reporting accuracy over the fold models.
pub async fn run_cross_dataset(config: &PipelineConfig, spec: &CrossSpec) -> Result<CrossOutcome, CliError> {
    let train_setup = ProblemSetup::from_key(DatasetId::Percept5, &spec.train_key)?;
    if train_setup.classes != 2 {
        return Err(CliError::Config(format!(
            "cross-dataset training needs a two-class setup, got {}",
            spec.train_key
        )));
    }
    let eval_setups = spec
        .eval_keys
        .iter()
        .map(|k| ProblemSetup::from_key(DatasetId::Deep2, k))
        .collect::<Result<Vec<_>, _>>()?;
    let tuner = tuner_client(config)?;
    let base_model = spec
        .base_model
        .clone()
        .or_else(|| config.tuner.base_model.clone())
        .ok_or_else(|| CliError::Config("cross-dataset needs --base-model or tuner.base_model".into()))?;

    let percept = load_dataset(config, DatasetId::Percept5)?;
    let deep = load_dataset(config, DatasetId::Deep2)?;
    let train_subset = build_subset(&percept, &train_setup)?;
    let eval_subsets = eval_setups
        .iter()
        .map(|s| build_subset(&deep, s))
        .collect::<Result<Vec<_>, _>>()?;

    // Union of DeepSent ids across eval setups, in file order.
    let mut eval_ids: Vec<&str> = Vec::new();
    {
        let wanted: std::collections::HashSet<&str> = eval_subsets
            .iter()
            .flatten()
            .map(|i| i.image_id.as_str())
            .collect();
        for r in &deep.records {
            if wanted.contains(r.image_id.as_str()) {
                eval_ids.push(r.image_id.as_str());
            }
        }
    }
    let train_captions = require_captions(config, &spec.captioner, train_subset.iter().map(|i| i.image_id.as_str()))?;
    let eval_captions = require_captions(config, &spec.captioner, eval_ids.iter().copied())?;

    let pairs: Vec<(&str, usize)> = train_subset
        .iter()
        .map(|i| (i.image_id.as_str(), i.label_index))
        .collect();
    let plan = make_folds(&pairs, config.folds, config.seed)?;

    let eval_refs: Vec<InstanceRef> = eval_ids.iter().map(|id| InstanceRef::new(DatasetId::Deep2, *id)).collect();
    let mut manifests = Vec::new();
    let mut per_fold_preds: Vec<HashMap<String, Pred>> = Vec::new();
    tuner.health().await.map_err(tuner_err)?;
    let texts: Vec<String> = eval_ids.iter().map(|id| eval_captions[*id].clone()).collect();
    for fold in 0..plan.k {
        let (train, _) = fold_members(&train_subset, &plan, fold);
        let manifest = FoldManifest {
            fold,
            train: refs(DatasetId::Percept5, &train_subset, &train),
            eval: eval_refs.clone(),
        };
        if manifest.train.iter().any(|r| r.dataset_id != DatasetId::Percept5) {
            return Err(CliError::LeakageDetected {
                fold,
                count: 1,
                example: "non-PerceptSent training instance".into(),
            });
        }
        check_leakage(std::slice::from_ref(&manifest))?;
        let samples = train
            .iter()
            .map(|&i| TrainSample {
                text: train_captions[&train_subset[i].image_id].clone(),
                class_id: class_id(train_subset[i].label_index, 2),
            })
            .collect();
        let req = TrainRequest::new(
            spec.mode,
            base_model.clone(),
            train_setup.clone(),
            samples,
            config.seed.wrapping_add(fold as u64),
        );
        let handle = tuner.train(&req).await.map_err(tuner_err)?;
        let preds = predict_and_release(&tuner, &handle, &texts).await?;
        per_fold_preds.push(eval_ids.iter().map(|id| id.to_string()).zip(preds).collect());
        manifests.push(manifest);
    }

    let tag = match spec.mode {
        TrainMode::Probe => "probe",
        TrainMode::Finetune => "finetune",
    };
    let system_id = format!("{tag}/{}+{base_model}", spec.captioner);
    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    for (setup, subset) in eval_setups.iter().zip(&eval_subsets) {
        let mut folds = vec![ConfusionMatrix::new(2); plan.k];
        let mut rows = Vec::new();
        for (fold, preds) in per_fold_preds.iter().enumerate() {
            for inst in subset {
                let p = &preds[&inst.image_id];
                folds[fold].record(inst.label_index, p.predicted);
                rows.push(PredictionRow {
                    dataset_id: DatasetId::Deep2,
                    image_id: inst.image_id.clone(),
                    fold,
                    truth: inst.label_index,
                    predicted: p.predicted,
                    outcome: p.outcome.to_string(),
                    raw_text: p.raw_text.clone(),
                    error: None,
                });
            }
        }
        reports.push(EvalReport::from_folds(
            setup.clone(),
            system_id.clone(),
            Metric::Accuracy,
            config.averaging,
            config.seed,
            &folds,
        )?);
        predictions.push((setup.key().to_string(), rows));
    }
    Ok(CrossOutcome {
        reports,
        manifests,
        predictions,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CaptionFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaptionSummary {
    pub model: String,
    pub prompt_fingerprint: String,
    pub requested: usize,
    pub already_cached: usize,
    pub captioned: usize,
    pub failed: Vec<CaptionFailure>,
    pub http_requests: u64,
}

/// Captions every image of `dataset` (or of `setup`'s subset), skipping
/// cached ones. Per-image failures are collected, not raised.
pub async fn caption_images(
    config: &PipelineConfig,
    dataset_id: DatasetId,
    setup: Option<&ProblemSetup>,
    model: &str,
) -> Result<CaptionSummary, CliError> {
    let dataset = load_dataset(config, dataset_id)?;
    let endpoint = Endpoint::new(config.endpoint(model)?.clone())?;
    let base = config.dataset(dataset_id)?.image_base();
    let ids: Vec<&str> = match setup {
        Some(s) => {
            let subset = build_subset(&dataset, s)?;
            let keep: std::collections::HashSet<String> = subset.into_iter().map(|i| i.image_id).collect();
            dataset
                .records
                .iter()
                .filter(|r| keep.contains(&r.image_id))
                .map(|r| r.image_id.as_str())
                .collect()
        }
        None => dataset.records.iter().map(|r| r.image_id.as_str()).collect(),
    };
    let cache = CaptionCache::open(&config.cache)?;
    let already_cached = ids.iter().filter(|id| cache.get(&endpoint.caption_key(id)).is_some()).count();
    let index = dataset.index();
    let http = reqwest::Client::new();
    let results: Vec<(String, Result<(), GatewayError>)> = stream::iter(ids.iter())
        .map(|&id| {
            let (endpoint, cache, http, base) = (&endpoint, &cache, &http, &base);
            let uri = index[id].image_uri.clone();
            async move {
                let r = async {
                    if cache.get(&endpoint.caption_key(id)).is_some() {
                        return Ok(());
                    }
                    let image = load_image(&uri, base, http).await?;
                    endpoint.caption_image(id, &image, cache).await.map(|_| ())
                }
                .await;
                (id.to_string(), r)
            }
        })
        .buffered(window(&endpoint))
        .collect()
        .await;
    let mut failed = Vec::new();
    for (image_id, r) in results {
        if let Err(e) = r {
            if is_fatal(&e) {
                return Err(e.into());
            }
            failed.push(CaptionFailure {
                image_id,
                error: e.to_string(),
            });
        }
    }
    Ok(CaptionSummary {
        model: model.to_string(),
        prompt_fingerprint: endpoint.caption_fingerprint(),
        requested: ids.len(),
        already_cached,
        captioned: ids.len() - already_cached - failed.len(),
        failed,
        http_requests: endpoint.stats().requests,
    })
}
