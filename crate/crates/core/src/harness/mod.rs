//! Experiment orchestration: synthetic snapshots, training runs, evaluation,
//! multi-run campaigns with model selection, and warm-started retraining.

mod campaign;
mod dataset;
mod evaluate;
mod generate;
mod metrics;
mod registry;
mod run;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use campaign::{periodic_retrain, run_campaign, select_best, CampaignConfig, CampaignOutcome, RetrainOptions, RetrainOutcome, SelectionMetric};
pub use dataset::{replicate_and_shuffle, split_snapshots, DataSplit};
pub use evaluate::{evaluate, evaluate_agent, EvaluationReport, SnapshotOutcome};
pub use generate::{generate_snapshot_cases, generate_snapshots, GenerationReport, ScalingMode, SnapshotGenSpec};
pub use metrics::{MetricsWriter, METRICS_HEADER};
pub use registry::{ModelRegistry, RegistryEntry, REGISTRY_FILE};
pub use run::{execute_run, fit_state_normalizer, train_on_split, RunConfig, RunOutcome};

/// Reads a TOML config file into `T`.
pub fn load_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}
