use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::environment::{DoneReason, EnvConfig, GridEnv, Normalizer};
use crate::error::{Error, Result};
use crate::grid_model::GridCase;
use crate::sac::{Checkpoint, SacAgent};

/// Result of one deterministic-policy episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotOutcome {
    pub index: usize,
    pub done_reason: DoneReason,
    pub steps: usize,
    pub reward: f64,
    pub p_loss_pre: f64,
    pub p_loss_final: f64,
    /// `100 * (pre - final) / pre`.
    pub loss_reduction_pct: f64,
    pub severity_pre: f64,
    /// `None` when the final power flow diverged.
    pub severity_final: Option<f64>,
}

impl SnapshotOutcome {
    pub fn solved(&self) -> bool {
        self.done_reason == DoneReason::Solved
    }

    /// Converged, with losses and violation severity no worse than before.
    pub fn non_degrading(&self) -> bool {
        self.severity_final.is_some_and(|s| s <= self.severity_pre) && self.p_loss_final <= self.p_loss_pre
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_snapshots: usize,
    /// Snapshots whose base case solved and could be controlled.
    pub n_evaluated: usize,
    pub solved_fraction: f64,
    pub non_degrading_fraction: f64,
    pub mean_loss_reduction_pct: f64,
    pub mean_episode_reward: f64,
    pub mean_steps: f64,
    /// Snapshots that started with at least one limit violation.
    pub violation_snapshots: usize,
    /// ... and ended with none.
    pub violations_resolved: usize,
    /// ... and ended with some, at lower severity.
    pub violations_mitigated: usize,
    pub diverged_episodes: usize,
    /// Wall-clock time of policy forward pass plus action mapping.
    pub latency_mean_ms: f64,
    pub latency_p95_ms: f64,
    pub latency_max_ms: f64,
    pub outcomes: Vec<SnapshotOutcome>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs one deterministic episode per snapshot.
pub fn evaluate_agent(
    agent: &SacAgent,
    normalizer: &Normalizer,
    snapshots: &[GridCase],
    env_config: &EnvConfig,
) -> Result<EvaluationReport> {
    if snapshots.is_empty() {
        return Err(Error::Config("evaluation needs at least one snapshot".into()));
    }
    let mut env = GridEnv::new(snapshots.to_vec(), normalizer.clone(), *env_config)?;
    if env.state_dim() != agent.state_dim() || env.action_dim() != agent.action_dim() {
        return Err(Error::Dimension {
            expected: agent.state_dim(),
            got: env.state_dim(),
        });
    }
    let mut outcomes = Vec::new();
    let mut latencies = Vec::new();
    for (index, case) in snapshots.iter().enumerate() {
        let reset = match env.reset_to(case.clone()) {
            Ok(r) => r,
            Err(e) => {
                log::info!("snapshot {index} not evaluated: {e}");
                continue;
            }
        };
        let severity_pre = env.episode().expect("active episode").base_report.severity();
        let mut state = reset.state.values;
        let mut reward = 0.0;
        let mut last = None;
        let mut steps = 0;
        for t in 1..=env_config.max_steps {
            let started = Instant::now();
            let selected = agent.act_deterministic(&state)?;
            latencies.push(started.elapsed().as_secs_f64() * 1e3);
            let step = env.step(&selected.action)?;
            steps = t;
            reward += step.reward;
            state = step.next_state.values.clone();
            let done = step.done;
            last = Some(step);
            if done {
                break;
            }
        }
        let last = last.expect("at least one step");
        let p_loss_final = last.info.p_loss;
        let done_reason = match last.done_reason {
            DoneReason::Running => DoneReason::MaxSteps,
            r => r,
        };
        let severity_final = (done_reason != DoneReason::Diverged).then(|| last.info.report.severity());
        outcomes.push(SnapshotOutcome {
            index,
            done_reason,
            steps,
            reward,
            p_loss_pre: reset.p_loss_ini,
            p_loss_final,
            loss_reduction_pct: 100.0 * (reset.p_loss_ini - p_loss_final) / reset.p_loss_ini,
            severity_pre,
            severity_final,
        });
    }
    if outcomes.is_empty() {
        return Err(Error::Numerical("no snapshot in the set could be solved".into()));
    }
    let n = outcomes.len() as f64;
    let frac = |f: &dyn Fn(&SnapshotOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    let violated: Vec<&SnapshotOutcome> = outcomes.iter().filter(|o| o.severity_pre > 0.0).collect();
    latencies.sort_by(f64::total_cmp);
    let p95 = latencies
        .get(((latencies.len() as f64 * 0.95).ceil() as usize).saturating_sub(1))
        .copied()
        .unwrap_or(0.0);
    Ok(EvaluationReport {
        n_snapshots: snapshots.len(),
        n_evaluated: outcomes.len(),
        solved_fraction: frac(&|o| o.solved()),
        non_degrading_fraction: frac(&|o| o.non_degrading()),
        mean_loss_reduction_pct: mean(outcomes.iter().map(|o| o.loss_reduction_pct)),
        mean_episode_reward: mean(outcomes.iter().map(|o| o.reward)),
        mean_steps: mean(outcomes.iter().map(|o| o.steps as f64)),
        violation_snapshots: violated.len(),
        violations_resolved: violated.iter().filter(|o| o.severity_final == Some(0.0)).count(),
        violations_mitigated: violated
            .iter()
            .filter(|o| o.severity_final.is_some_and(|s| s > 0.0 && s < o.severity_pre))
            .count(),
        diverged_episodes: outcomes.iter().filter(|o| o.done_reason == DoneReason::Diverged).count(),
        latency_mean_ms: mean(latencies.iter().copied()),
        latency_p95_ms: p95,
        latency_max_ms: latencies.last().copied().unwrap_or(0.0),
        outcomes,
    })
}

/// Evaluates a stored checkpoint with its own frozen normalizer.
pub fn evaluate(checkpoint: &Checkpoint, snapshots: &[GridCase], env_config: &EnvConfig) -> Result<EvaluationReport> {
    let agent = checkpoint.to_agent()?;
    evaluate_agent(&agent, &checkpoint.normalizer, snapshots, env_config)
}

impl EvaluationReport {
    /// Copy with timing fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            latency_mean_ms: 0.0,
            latency_p95_ms: 0.0,
            latency_max_ms: 0.0,
            ..self.clone()
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
