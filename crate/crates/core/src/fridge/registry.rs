use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor_io::write_atomic;
use crate::numerics::TensorFile;

const INDEX_FILE: &str = "index.jsonl";
const LOCK_FILE: &str = "registry.lock";
const MODEL_DIR: &str = "models";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: String,
    /// Artifact path relative to the registry root.
    pub artifact: String,
    pub validation_rmse: f64,
    pub data_fingerprint: String,
    /// RFC 3339 publication time.
    pub timestamp: String,
    /// Position in publication order, starting at 1.
    pub sequence: u64,
}

/// A directory holding `index.jsonl` and one checkpoint per model under
/// `models/`. Writers serialise on an exclusive lock; the index is always
/// replaced atomically, so readers never need the lock.
#[derive(Debug, Clone)]
pub struct Registry {
    root: PathBuf,
}

impl Registry {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join(MODEL_DIR))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join(INDEX_FILE)
    }

    pub fn entries(&self) -> Result<Vec<RegistryEntry>> {
        let path = self.index_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        parse_index(&text, &path)
    }

    /// Stores `model` under `id` and records it in the index.
    pub fn publish(
        &self,
        id: &str,
        model: &TensorFile,
        validation_rmse: f64,
        data_fingerprint: &str,
    ) -> Result<RegistryEntry> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || id.starts_with('.') {
            return Err(Error::invalid(format!(
                "model id `{id}` must be alphanumeric with - _ ."
            )));
        }
        if !validation_rmse.is_finite() || validation_rmse < 0.0 {
            return Err(Error::invalid("validation RMSE must be finite and non-negative"));
        }
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.root.join(LOCK_FILE))?;
        lock.lock()?;
        let result = self.publish_locked(id, model, validation_rmse, data_fingerprint);
        lock.unlock()?;
        result
    }

    fn publish_locked(
        &self,
        id: &str,
        model: &TensorFile,
        validation_rmse: f64,
        data_fingerprint: &str,
    ) -> Result<RegistryEntry> {
        let mut entries = self.entries()?;
        if entries.iter().any(|e| e.id == id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        let artifact = format!("{MODEL_DIR}/{id}.fsct");
        model.save(&self.root.join(&artifact))?;
        let entry = RegistryEntry {
            id: id.to_string(),
            artifact,
            validation_rmse,
            data_fingerprint: data_fingerprint.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            sequence: entries.iter().map(|e| e.sequence).max().unwrap_or(0) + 1,
        };
        entries.push(entry.clone());
        let mut text = String::new();
        for e in &entries {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
        write_atomic(&self.index_path(), text.as_bytes())?;
        Ok(entry)
    }

    /// Lowest validation RMSE; ties go to the most recently published.
    pub fn best(&self) -> Result<Option<RegistryEntry>> {
        Ok(best_entry(&self.entries()?).cloned())
    }

    pub fn get(&self, id: &str) -> Result<Option<RegistryEntry>> {
        Ok(self.entries()?.into_iter().find(|e| e.id == id))
    }

    pub fn load(&self, entry: &RegistryEntry) -> Result<TensorFile> {
        TensorFile::load(&self.root.join(&entry.artifact))
    }
}

pub fn best_entry(entries: &[RegistryEntry]) -> Option<&RegistryEntry> {
    entries.iter().min_by(|a, b| {
        a.validation_rmse
            .total_cmp(&b.validation_rmse)
            .then_with(|| b.sequence.cmp(&a.sequence))
    })
}

pub fn parse_index(text: &str, path: &Path) -> Result<Vec<RegistryEntry>> {
    let corrupt = |line: usize, message: String| Error::CorruptIndex {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut entries: Vec<RegistryEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let entry: RegistryEntry = serde_json::from_str(raw).map_err(|e| corrupt(i + 1, e.to_string()))?;
        if entries.iter().any(|e| e.id == entry.id) {
            return Err(corrupt(i + 1, format!("duplicate model id `{}`", entry.id)));
        }
        if !entry.validation_rmse.is_finite() {
            return Err(corrupt(i + 1, format!("entry `{}` has a non-finite RMSE", entry.id)));
        }
        entries.push(entry);
    }
    Ok(entries)
}
