use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{replicate_and_shuffle, split_snapshots, DataSplit};
use super::evaluate::{evaluate_agent, EvaluationReport};
use super::metrics::MetricsWriter;
use crate::environment::{extract_raw_state, fit_normalizer, load_snapshot_dir, state_layout, EnvConfig, GridEnv, Normalizer};
use crate::error::{Error, Result};
use crate::grid_model::{read_case, GridCase};
use crate::power_flow::{solve_newton_raphson, SolverOptions};
use crate::sac::{train, Checkpoint, ReplayBuffer, SacAgent, SacConfig, TrainObserver, TrainSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub run_id: String,
    pub sac: SacConfig,
    /// `max_steps` is overridden by `sac.max_episode_steps`.
    pub env: EnvConfig,
    pub snapshot_dir: PathBuf,
    /// Optional reference case; snapshots must share its topology.
    pub case_path: Option<PathBuf>,
    pub train_fraction: f64,
    /// Passes over the training snapshots, shuffled together.
    pub replication: usize,
    /// Seed of the train/test shuffle and the replication shuffle.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub init_checkpoint: Option<PathBuf>,
    /// Also evaluate on the (unreplicated) training snapshots.
    pub evaluate_train: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            sac: SacConfig::default(),
            env: EnvConfig::default(),
            snapshot_dir: PathBuf::from("snapshots"),
            case_path: None,
            train_fraction: 0.8,
            replication: 3,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            init_checkpoint: None,
            evaluate_train: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid run id {:?}", self.run_id)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.replication == 0 {
            return Err(Error::Config("replication must be at least 1".into()));
        }
        self.sac.validate()
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.snapshot_dir = base.join(&self.snapshot_dir);
        self.output_dir = base.join(&self.output_dir);
        if let Some(p) = &mut self.case_path {
            *p = base.join(&*p);
        }
        if let Some(p) = &mut self.init_checkpoint {
            *p = base.join(&*p);
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            max_steps: self.sac.max_episode_steps,
            ..self.env
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub summary: TrainSummary,
    pub test_report: EvaluationReport,
    pub train_report: Option<EvaluationReport>,
}

/// Standardisation statistics of the base-case states of solvable snapshots.
pub fn fit_state_normalizer(cases: &[GridCase], solver: &SolverOptions) -> Result<Normalizer> {
    let mut samples = Vec::with_capacity(cases.len());
    for case in cases {
        match solve_newton_raphson(case, None, solver) {
            Ok(sol) if sol.converged => samples.push(extract_raw_state(case, &sol).values),
            _ => continue,
        }
    }
    fit_normalizer(&samples)
}

fn check_topology(config: &RunConfig, split: &DataSplit) -> Result<()> {
    if let Some(path) = &config.case_path {
        let reference = state_layout(&read_case(path)?);
        if split.train.iter().chain(&split.test).any(|(_, c)| state_layout(c) != reference) {
            return Err(Error::Semantic(format!(
                "snapshots in {} do not match the topology of {}",
                config.snapshot_dir.display(),
                path.display()
            )));
        }
    }
    Ok(())
}

/// Builds (or warm-starts) an agent and trains it on the split's training side.
pub fn train_on_split(
    config: &RunConfig,
    split: &DataSplit,
    init: Option<&Checkpoint>,
    observer: Option<&Path>,
) -> Result<(SacAgent, Normalizer, TrainSummary)> {
    config.validate()?;
    for w in config.sac.range_warnings() {
        log::warn!("run {}: {w}", config.run_id);
    }
    let env_config = config.env_config();
    let train_cases = split.train_cases();
    let (mut agent, normalizer) = match init {
        Some(ck) => {
            let mut agent = ck.to_agent()?;
            agent.reconfigure(config.sac.clone())?;
            (agent, ck.normalizer.clone())
        }
        None => {
            let normalizer = fit_state_normalizer(&train_cases, &env_config.solver)?;
            let dim = normalizer.len();
            let action_dim = train_cases[0].plants.len();
            (SacAgent::new(dim, action_dim, config.sac.clone())?, normalizer)
        }
    };
    let stream = replicate_and_shuffle(&train_cases, config.replication, config.seed);
    let mut env = GridEnv::new(stream, normalizer.clone(), env_config)?;
    let mut buffer = ReplayBuffer::new(config.sac.replay_capacity);
    let summary = match observer {
        Some(dir) => {
            let mut writer = MetricsWriter::create(dir.join("metrics.csv"), dir.join("checkpoints"), normalizer.clone())?;
            let s = train(&mut agent, &mut env, &mut buffer, &mut writer as &mut dyn TrainObserver)?;
            writer.finish()?;
            s
        }
        None => train(&mut agent, &mut env, &mut buffer, &mut crate::sac::NullObserver)?,
    };
    Ok((agent, normalizer, summary))
}

pub(crate) fn execute_with_split(config: &RunConfig, split: &DataSplit) -> Result<RunOutcome> {
    config.validate()?;
    check_topology(config, split)?;
    let run_dir = config.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let init = config.init_checkpoint.as_ref().map(Checkpoint::load).transpose()?;
    let (agent, normalizer, summary) = train_on_split(config, split, init.as_ref(), Some(&run_dir))?;

    let checkpoint = run_dir.join("final.json");
    Checkpoint::from_agent(&agent, &normalizer).save(&checkpoint)?;
    let env_config = config.env_config();
    let test_report = evaluate_agent(&agent, &normalizer, &split.test_cases(), &env_config)?;
    let train_report = if config.evaluate_train {
        Some(evaluate_agent(&agent, &normalizer, &split.train_cases(), &env_config)?)
    } else {
        None
    };
    let report_path = run_dir.join("report.json");
    std::fs::write(&report_path, test_report.to_json()).map_err(|e| Error::io(&report_path, e))?;
    log::info!(
        "run {}: {} episodes, test solved fraction {:.3}, mean loss reduction {:.3}%",
        config.run_id,
        summary.metrics.len(),
        test_report.solved_fraction,
        test_report.mean_loss_reduction_pct
    );
    Ok(RunOutcome {
        run_id: config.run_id.clone(),
        metrics_path: run_dir.join("metrics.csv"),
        run_dir,
        checkpoint,
        summary,
        test_report,
        train_report,
    })
}

/// Loads the snapshot directory, splits it, trains, and evaluates on the test side.
pub fn execute_run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let snapshots = load_snapshot_dir(&config.snapshot_dir)?;
    let split = split_snapshots(snapshots, config.train_fraction, config.seed)?;
    execute_with_split(config, &split)
}
