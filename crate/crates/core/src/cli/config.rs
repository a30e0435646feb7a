use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::corpus::{DatasetId, IngestProfile};
use crate::evalkit::Averaging;
use crate::gateway::EndpointConfig;
use crate::lexicon::{LexiconTable, ScoringParams};
use crate::gateway::FEWSHOT_DEFAULT_SHOTS;

/// One pipeline run's configuration, read from TOML.
///
/// Relative paths are resolved against the directory holding the config
/// file. Command-line flags override `seed` and `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuner_url: Option<String>,
    #[serde(default)]
    pub datasets: BTreeMap<DatasetId, DatasetConfig>,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
    #[serde(default)]
    pub lexicon: LexiconConfig,
    #[serde(default)]
    pub fewshot: FewshotConfig,
    #[serde(default)]
    pub tuner: TunerConfig,
}

fn default_folds() -> usize {
    5
}
fn default_out() -> PathBuf {
    "runs".into()
}
fn default_cache() -> PathBuf {
    "captions.jsonl".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Base directory for relative image URIs; defaults to the annotation
    /// file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_root: Option<PathBuf>,
    /// Defaults to the normalized `image_id,image_uri,v1..vC` schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<IngestProfile>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconConfig {
    /// `token<TAB>valence` table; the bundled lexicon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boosters: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negators: Option<PathBuf>,
    #[serde(default)]
    pub scoring: ScoringParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewshotConfig {
    #[serde(default = "default_shots")]
    pub shots: usize,
}

fn default_shots() -> usize {
    FEWSHOT_DEFAULT_SHOTS
}

impl Default for FewshotConfig {
    fn default() -> Self {
        FewshotConfig { shots: default_shots() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_model: Option<String>,
    /// Seconds; training requests are synchronous.
    #[serde(default = "default_tuner_timeout")]
    pub timeout: f64,
}

fn default_tuner_timeout() -> f64 {
    3600.0
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            base_model: None,
            timeout: default_tuner_timeout(),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            folds: default_folds(),
            out: default_out(),
            cache: default_cache(),
            averaging: Averaging::default(),
            tuner_url: None,
            datasets: BTreeMap::new(),
            endpoints: Vec::new(),
            lexicon: LexiconConfig::default(),
            fewshot: FewshotConfig::default(),
            tuner: TunerConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        resolve(base, &mut self.cache);
        for d in self.datasets.values_mut() {
            resolve(base, &mut d.path);
            if let Some(root) = d.image_root.as_mut() {
                resolve(base, root);
            }
        }
        for p in [&mut self.lexicon.path, &mut self.lexicon.boosters, &mut self.lexicon.negators]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.folds < 2 {
            return Err(CliError::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        let mut seen = HashSet::new();
        for e in &self.endpoints {
            if !seen.insert(e.name.as_str()) {
                return Err(CliError::Config(format!("duplicate endpoint alias {}", e.name)));
            }
            e.validate()?;
        }
        for (id, d) in &self.datasets {
            if let Some(p) = &d.profile {
                if p.dataset_id != *id {
                    return Err(CliError::Config(format!(
                        "dataset {id}: profile declares dataset_id {}",
                        p.dataset_id
                    )));
                }
            }
        }
        if !(self.tuner.timeout > 0.0 && self.tuner.timeout.is_finite()) {
            return Err(CliError::Config("tuner.timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn dataset(&self, id: DatasetId) -> Result<&DatasetConfig, CliError> {
        self.datasets
            .get(&id)
            .ok_or_else(|| CliError::Config(format!("dataset {id} is not configured")))
    }

    pub fn endpoint(&self, alias: &str) -> Result<&EndpointConfig, CliError> {
        self.endpoints
            .iter()
            .find(|e| e.name == alias)
            .ok_or_else(|| CliError::UnknownEndpoint(alias.to_string()))
    }

    pub fn lexicon_table(&self) -> Result<LexiconTable, CliError> {
        match &self.lexicon.path {
            Some(p) => Ok(LexiconTable::load(p, self.lexicon.boosters.as_deref(), self.lexicon.negators.as_deref())?),
            None => Ok(LexiconTable::builtin()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl DatasetConfig {
    pub fn profile_for(&self, id: DatasetId) -> IngestProfile {
        self.profile.clone().unwrap_or_else(|| IngestProfile::normalized(id))
    }

    pub fn image_base(&self) -> PathBuf {
        self.image_root.clone().unwrap_or_else(|| {
            self.path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."))
        })
    }

    /// Existence check made at the start of a run.
    pub fn check_exists(&self) -> Result<(), CliError> {
        if self.path.exists() {
            Ok(())
        } else {
            Err(CliError::Corpus(crate::corpus::CorpusError::MissingFile(self.path.clone())))
        }
    }
}
