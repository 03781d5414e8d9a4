use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::campaign::SelectionMetric;
use super::evaluate::EvaluationReport;
use crate::error::{Error, Result};

pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub run_id: String,
    /// Relative to the registry's directory unless absolute.
    pub checkpoint: PathBuf,
    pub metrics: Option<PathBuf>,
    pub snapshot_dir: PathBuf,
    /// Entry this one was warm-started from.
    pub parent: Option<String>,
    pub report: EvaluationReport,
}

/// Record of every trained model and which one is current. Entries are only
/// ever appended; checkpoint files are never removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistry {
    pub selection_metric: SelectionMetric,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub entries: Vec<RegistryEntry>,
    pub best: Option<String>,
}

impl ModelRegistry {
    pub fn new(selection_metric: SelectionMetric, train_fraction: f64, split_seed: u64) -> Self {
        Self {
            selection_metric,
            train_fraction,
            split_seed,
            entries: Vec::new(),
            best: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let reg: ModelRegistry = serde_json::from_str(&text).map_err(Error::from_json)?;
        if let Some(best) = &reg.best {
            if reg.entry(best).is_none() {
                return Err(Error::Semantic(format!("best model {best} has no registry entry")));
            }
        }
        Ok(reg)
    }

    /// Writes via a temporary file so a crash never leaves a torn registry.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(self).expect("registry serializes");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn entry(&self, run_id: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.run_id == run_id)
    }

    pub fn best_entry(&self) -> Option<&RegistryEntry> {
        self.best.as_deref().and_then(|id| self.entry(id))
    }

    pub fn add(&mut self, entry: RegistryEntry) -> Result<()> {
        if self.entry(&entry.run_id).is_some() {
            return Err(Error::Config(format!("run id {} already registered", entry.run_id)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn set_best(&mut self, run_id: &str) -> Result<()> {
        if self.entry(run_id).is_none() {
            return Err(Error::Config(format!("unknown run id {run_id}")));
        }
        self.best = Some(run_id.to_string());
        Ok(())
    }

    /// Path of an entry's checkpoint, resolved against the registry directory.
    pub fn checkpoint_path(&self, registry_dir: &Path, entry: &RegistryEntry) -> PathBuf {
        registry_dir.join(&entry.checkpoint)
    }
}

/// `path` relative to `base` when it lies below it.
pub(crate) fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}
