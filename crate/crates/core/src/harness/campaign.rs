use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::split_snapshots;
use super::evaluate::{evaluate, EvaluationReport};
use super::registry::{relative_to, ModelRegistry, RegistryEntry, REGISTRY_FILE};
use super::run::{execute_with_split, RunConfig, RunOutcome};
use crate::environment::{load_snapshot_dir, state_layout, EnvConfig};
use crate::error::{Error, Result};
use crate::sac::{Checkpoint, SacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionMetric {
    MeanTestReward,
    /// Solved fraction, then mean loss reduction.
    #[default]
    SolvedFraction,
}

impl SelectionMetric {
    fn key(self, r: &EvaluationReport) -> (f64, f64) {
        match self {
            SelectionMetric::SolvedFraction => (r.solved_fraction, r.mean_loss_reduction_pct),
            SelectionMetric::MeanTestReward => (r.mean_episode_reward, r.solved_fraction),
        }
    }

    pub fn compare(self, a: &EvaluationReport, b: &EvaluationReport) -> Ordering {
        let (ka, kb) = (self.key(a), self.key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    }
}

/// Index of the best report; ties go to the lexicographically lower run id.
pub fn select_best(metric: SelectionMetric, candidates: &[(&str, &EvaluationReport)]) -> Option<usize> {
    (0..candidates.len()).reduce(|best, i| {
        let (id_b, rep_b) = candidates[best];
        let (id_i, rep_i) = candidates[i];
        match metric.compare(rep_i, rep_b) {
            Ordering::Greater => i,
            Ordering::Equal if id_i < id_b => i,
            _ => best,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub runs: Vec<RunConfig>,
    pub selection_metric: SelectionMetric,
    /// New snapshots that should accumulate before retraining.
    pub retrain_interval: usize,
    /// Holds the registry and one directory per run.
    pub output_dir: PathBuf,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            runs: Vec::new(),
            selection_metric: SelectionMetric::SolvedFraction,
            retrain_interval: 1000,
            output_dir: PathBuf::from("campaign"),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .runs
            .first()
            .ok_or_else(|| Error::Config("campaign needs at least one run".into()))?;
        let mut ids: Vec<&str> = self.runs.iter().map(|r| r.run_id.as_str()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("run ids must be unique within a campaign".into()));
        }
        for r in &self.runs {
            if r.snapshot_dir != first.snapshot_dir || r.train_fraction != first.train_fraction || r.seed != first.seed {
                return Err(Error::Config(format!(
                    "run {} does not share the campaign's snapshot directory, train fraction and split seed",
                    r.run_id
                )));
            }
        }
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.output_dir = base.join(&self.output_dir);
        for r in &mut self.runs {
            r.resolve_paths(base);
        }
    }

    pub fn registry_path(&self) -> PathBuf {
        self.output_dir.join(REGISTRY_FILE)
    }

    pub fn retrain_due(&self, new_snapshots: usize) -> bool {
        new_snapshots >= self.retrain_interval
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub best: RegistryEntry,
    pub runs: Vec<RunOutcome>,
    pub failures: Vec<(String, String)>,
    pub registry_path: PathBuf,
}

fn entry_for(outcome: &RunOutcome, registry_dir: &Path, snapshot_dir: &Path, parent: Option<String>) -> RegistryEntry {
    RegistryEntry {
        run_id: outcome.run_id.clone(),
        checkpoint: relative_to(&outcome.checkpoint, registry_dir),
        metrics: Some(relative_to(&outcome.metrics_path, registry_dir)),
        snapshot_dir: snapshot_dir.to_path_buf(),
        parent,
        report: outcome.test_report.clone(),
    }
}

/// Trains every run concurrently on one shared split and registers the winner.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutcome> {
    config.validate()?;
    let first = &config.runs[0];
    let snapshots = load_snapshot_dir(&first.snapshot_dir)?;
    let split = split_snapshots(snapshots, first.train_fraction, first.seed)?;
    let runs: Vec<RunConfig> = config
        .runs
        .iter()
        .map(|r| RunConfig {
            output_dir: config.output_dir.join("runs"),
            ..r.clone()
        })
        .collect();

    let results: Vec<(String, Result<RunOutcome>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|r| (r.run_id.clone(), scope.spawn(|| execute_with_split(r, &split))))
            .collect();
        handles
            .into_iter()
            .map(|(id, h)| {
                let result = h
                    .join()
                    .unwrap_or_else(|_| Err(Error::Numerical(format!("run {id} panicked"))));
                (id, result)
            })
            .collect()
    });

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in results {
        match result {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::error!("run {id} excluded: {e}");
                failures.push((id, e.to_string()));
            }
        }
    }
    if outcomes.is_empty() {
        return Err(Error::Numerical(format!("all {} campaign runs failed", failures.len())));
    }
    let candidates: Vec<(&str, &EvaluationReport)> =
        outcomes.iter().map(|o| (o.run_id.as_str(), &o.test_report)).collect();
    let best_idx = select_best(config.selection_metric, &candidates).expect("non-empty");

    let registry_path = config.registry_path();
    let mut registry = if registry_path.exists() {
        ModelRegistry::load(&registry_path)?
    } else {
        ModelRegistry::new(config.selection_metric, first.train_fraction, first.seed)
    };
    for o in &outcomes {
        registry.add(entry_for(o, &config.output_dir, &first.snapshot_dir, None))?;
    }
    registry.set_best(&outcomes[best_idx].run_id)?;
    registry.save(&registry_path)?;
    log::info!("campaign best: {}", outcomes[best_idx].run_id);
    Ok(CampaignOutcome {
        best: registry.best_entry().expect("just set").clone(),
        runs: outcomes,
        failures,
        registry_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrainOptions {
    /// Defaults to `retrain-NNN`.
    pub run_id: Option<String>,
    /// Defaults to the configuration stored in the best checkpoint.
    pub sac: Option<SacConfig>,
    pub max_episodes: Option<usize>,
    pub env: EnvConfig,
    pub replication: usize,
    pub seed: u64,
}

impl Default for RetrainOptions {
    fn default() -> Self {
        Self {
            run_id: None,
            sac: None,
            max_episodes: None,
            env: EnvConfig::default(),
            replication: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub registry: ModelRegistry,
    pub candidate: Option<RegistryEntry>,
    /// The incumbent re-evaluated on the new test split.
    pub incumbent_report: Option<EvaluationReport>,
    pub promoted: bool,
}

/// Warm-starts from the registry's best model on new snapshots and promotes
/// the result only if it beats the incumbent on the new test split.
pub fn periodic_retrain(registry_path: &Path, new_snapshot_dir: &Path, options: &RetrainOptions) -> Result<RetrainOutcome> {
    let mut registry = ModelRegistry::load(registry_path)?;
    let registry_dir = registry_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let best = registry
        .best_entry()
        .ok_or_else(|| Error::Config("registry holds no best model".into()))?
        .clone();
    let checkpoint_path = registry.checkpoint_path(&registry_dir, &best);
    let checkpoint = Checkpoint::load(&checkpoint_path)?;

    let snapshots = load_snapshot_dir(new_snapshot_dir)?;
    let first = &snapshots
        .first()
        .ok_or_else(|| Error::Config(format!("{} holds no snapshots", new_snapshot_dir.display())))?
        .1;
    let state_dim = state_layout(first).len();
    if state_dim != checkpoint.state_dim || first.plants.len() != checkpoint.action_dim {
        return Err(Error::Dimension {
            expected: checkpoint.state_dim,
            got: state_dim,
        });
    }

    let mut sac = options.sac.clone().unwrap_or_else(|| checkpoint.config.clone());
    if options.max_episodes.is_some() {
        sac.max_episodes = options.max_episodes;
    }
    if sac.max_episodes == Some(0) {
        return Ok(RetrainOutcome {
            registry,
            candidate: None,
            incumbent_report: None,
            promoted: false,
        });
    }

    let split = split_snapshots(snapshots, registry.train_fraction, options.seed)?;
    let run = RunConfig {
        run_id: options
            .run_id
            .clone()
            .unwrap_or_else(|| format!("retrain-{:03}", registry.entries.len())),
        sac,
        env: options.env,
        snapshot_dir: new_snapshot_dir.to_path_buf(),
        case_path: None,
        train_fraction: registry.train_fraction,
        replication: options.replication,
        seed: options.seed,
        output_dir: registry_dir.join("runs"),
        init_checkpoint: Some(checkpoint_path),
        evaluate_train: false,
    };
    if registry.entry(&run.run_id).is_some() {
        return Err(Error::Config(format!("run id {} already registered", run.run_id)));
    }
    let outcome = execute_with_split(&run, &split)?;
    let incumbent = evaluate(&checkpoint, &split.test_cases(), &run.env_config())?;
    let promoted = registry.selection_metric.compare(&outcome.test_report, &incumbent) == Ordering::Greater;
    let entry = entry_for(&outcome, &registry_dir, new_snapshot_dir, Some(best.run_id.clone()));
    registry.add(entry.clone())?;
    if promoted {
        registry.set_best(&entry.run_id)?;
    }
    registry.save(registry_path)?;
    Ok(RetrainOutcome {
        registry,
        candidate: Some(entry),
        incumbent_report: Some(incumbent),
        promoted,
    })
}
