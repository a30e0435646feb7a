use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::PipelineConfig;
use super::CliError;
use crate::corpus::DatasetId;
use crate::evalkit::REPORT_SCHEMA_VERSION;

/// One scored instance as written to `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub dataset_id: DatasetId,
    pub image_id: String,
    pub fold: usize,
    pub truth: usize,
    /// Label index; absent for invalid outputs.
    pub predicted: Option<usize>,
    /// `label`, `ambiguous`, `unparseable` or `failed`.
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Which instances fed training (or few-shot examples) and which were
/// scored, per fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub train: Vec<InstanceRef>,
    pub eval: Vec<InstanceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceRef {
    pub dataset_id: DatasetId,
    pub image_id: String,
}

impl InstanceRef {
    pub fn new(dataset_id: DatasetId, image_id: impl Into<String>) -> Self {
        InstanceRef {
            dataset_id,
            image_id: image_id.into(),
        }
    }
}

/// Fails when any instance is both trained on and evaluated within the same
/// fold.
pub fn check_leakage(manifests: &[FoldManifest]) -> Result<(), CliError> {
    for m in manifests {
        let train: HashSet<&InstanceRef> = m.train.iter().collect();
        let leaked: Vec<&InstanceRef> = m.eval.iter().filter(|r| train.contains(r)).collect();
        if let Some(first) = leaked.first() {
            return Err(CliError::LeakageDetected {
                fold: m.fold,
                count: leaked.len(),
                example: format!("{}/{}", first.dataset_id, first.image_id),
            });
        }
    }
    Ok(())
}

/// Output directory of one command invocation.
pub struct RunDir {
    path: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl RunDir {
    pub fn create(path: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        Ok(RunDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, body: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.path.join(name);
        std::fs::write(&p, body).map_err(|e| io_err(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut body = serde_json::to_string_pretty(value).expect("serializable");
        body.push('\n');
        self.write(name, body)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let p = self.path.join(name);
        let mut f = std::io::BufWriter::new(std::fs::File::create(&p).map_err(|e| io_err(&p, e))?);
        for row in rows {
            serde_json::to_writer(&mut f, row).expect("serializable");
            f.write_all(b"\n").map_err(|e| io_err(&p, e))?;
        }
        f.flush().map_err(|e| io_err(&p, e))?;
        Ok(p)
    }

    /// `config.snapshot.toml` and `versions.json`, enough to re-execute.
    pub fn write_provenance(&self, config: &PipelineConfig, command: &[String]) -> Result<(), CliError> {
        self.write("config.snapshot.toml", config.to_toml())?;
        self.write_json(
            "versions.json",
            &json!({
                "visent": env!("CARGO_PKG_VERSION"),
                "report_schema_version": REPORT_SCHEMA_VERSION,
                "command": command,
            }),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(id: &str) -> InstanceRef {
        InstanceRef::new(DatasetId::Percept5, id)
    }

    #[test]
    fn leakage_is_per_fold() {
        let clean = FoldManifest {
            fold: 0,
            train: vec![r("a"), r("b")],
            eval: vec![r("c"), InstanceRef::new(DatasetId::Deep2, "a")],
        };
        check_leakage(std::slice::from_ref(&clean)).unwrap();
        let leaky = FoldManifest {
            fold: 1,
            train: vec![r("a")],
            eval: vec![r("a")],
        };
        assert!(matches!(
            check_leakage(&[clean, leaky]),
            Err(CliError::LeakageDetected { fold: 1, count: 1, .. })
        ));
    }

    #[test]
    fn run_dir_files() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::create(tmp.path().join("x/y")).unwrap();
        dir.write_jsonl("rows.jsonl", &[json!({"a": 1}), json!({"a": 2})]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rows.jsonl")).unwrap();
        assert_eq!(text, "{\"a\":1}\n{\"a\":2}\n");
        dir.write_provenance(&PipelineConfig::default(), &["run".into()]).unwrap();
        assert!(dir.path().join("config.snapshot.toml").exists());
        assert!(dir.path().join("versions.json").exists());
    }
}
