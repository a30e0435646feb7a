//! Append-only JSON Lines caption cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{CaptionRecord, GatewayError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub image_id: String,
    pub model_name: String,
    pub prompt_fingerprint: String,
}

/// Caption store keyed by (image, model, prompt fingerprint).
///
/// Reads are served from memory. Appends go through one writer lock, so
/// concurrent tasks never interleave partial lines.
pub struct CaptionCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<CacheKey, CaptionRecord>>,
    writer: Mutex<Option<File>>,
    key_locks: Mutex<HashMap<CacheKey, Arc<tokio::sync::Mutex<()>>>>,
}

impl CaptionCache {
    /// Opens (or creates) the cache file and loads every record. A torn
    /// final line left by an interrupted run is discarded.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let err = |message: String| GatewayError::Cache {
            path: path.display().to_string(),
            message,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| err(e.to_string()))?);
            let lines: Vec<String> = reader
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| err(e.to_string()))?;
            let last = lines.len();
            for (n, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CaptionRecord>(&line) {
                    Ok(rec) => {
                        entries.insert(rec.key(), rec);
                    }
                    Err(_) if n + 1 == last => {}
                    Err(e) => return Err(err(format!("line {}: {e}", n + 1))),
                }
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| err(e.to_string()))?;
        }
        truncate_torn_tail(path).map_err(|e| err(e.to_string()))?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| err(e.to_string()))?;
        Ok(CaptionCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
            writer: Mutex::new(Some(file)),
            key_locks: Mutex::new(HashMap::new()),
        })
    }

    /// A cache that is never persisted.
    pub fn in_memory() -> Self {
        CaptionCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
            writer: Mutex::new(None),
            key_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<CaptionRecord> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    /// All records for one model and fingerprint, by image id.
    pub fn captions_for(&self, model_name: &str, fingerprint: &str) -> HashMap<String, CaptionRecord> {
        self.entries
            .lock()
            .unwrap()
            .values()
            .filter(|r| r.model_name == model_name && r.prompt_fingerprint == fingerprint)
            .map(|r| (r.image_id.clone(), r.clone()))
            .collect()
    }

    pub fn insert(&self, record: CaptionRecord) -> Result<(), GatewayError> {
        let mut line = serde_json::to_vec(&record).map_err(|e| GatewayError::Cache {
            path: self.display_path(),
            message: e.to_string(),
        })?;
        line.push(b'\n');
        {
            let mut writer = self.writer.lock().unwrap();
            if let Some(file) = writer.as_mut() {
                file.write_all(&line)
                    .and_then(|_| file.flush())
                    .map_err(|e| GatewayError::Cache {
                        path: self.display_path(),
                        message: e.to_string(),
                    })?;
            }
        }
        self.entries.lock().unwrap().insert(record.key(), record);
        Ok(())
    }

    /// Per-key async lock so concurrent lookups of one key issue at most one
    /// request.
    pub(crate) fn key_lock(&self, key: &CacheKey) -> Arc<tokio::sync::Mutex<()>> {
        self.key_locks
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_default()
            .clone()
    }

    fn display_path(&self) -> String {
        self.path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "<memory>".into())
    }
}

/// Drops bytes after the last newline, left behind by an interrupted append.
fn truncate_torn_tail(path: &Path) -> std::io::Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let bytes = std::fs::read(path)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(())
}
