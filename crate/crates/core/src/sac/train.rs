use rand::Rng;

use super::{ActionMode, ReplayBuffer, SacAgent, Transition, UpdateStats};
use crate::environment::{Action, DoneReason, GridEnv};
use crate::error::{Error, Result};

/// Per-episode training record; one row of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub steps: usize,
    /// Undiscounted sum of step rewards.
    pub reward: f64,
    pub p_loss_pre: f64,
    pub p_loss_final: f64,
    pub delta_loss_frac: f64,
    pub done_reason: DoneReason,
    /// Means over the updates performed during the episode, if any.
    pub q1_loss: Option<f64>,
    pub q2_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub alpha: f64,
}

pub trait TrainObserver {
    fn on_episode(&mut self, _metrics: &EpisodeMetrics) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _agent: &SacAgent, _episode: usize) -> Result<()> {
        Ok(())
    }
}

pub struct NullObserver;

impl TrainObserver for NullObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub metrics: Vec<EpisodeMetrics>,
    pub total_steps: usize,
    pub updates: usize,
}

#[derive(Default)]
struct UpdateMeans {
    n: usize,
    sum: UpdateStats,
}

impl UpdateMeans {
    fn add(&mut self, s: &UpdateStats) {
        self.n += 1;
        self.sum.q1_loss += s.q1_loss;
        self.sum.q2_loss += s.q2_loss;
        self.sum.policy_loss += s.policy_loss;
    }

    fn mean(&self, f: impl Fn(&UpdateStats) -> f64) -> Option<f64> {
        (self.n > 0).then(|| f(&self.sum) / self.n as f64)
    }
}

/// Runs the SAC training loop over the environment's snapshot stream,
/// `n_epochs` times. Stops early at `max_episodes`.
pub fn train(
    agent: &mut SacAgent,
    env: &mut GridEnv,
    buffer: &mut ReplayBuffer,
    observer: &mut dyn TrainObserver,
) -> Result<TrainSummary> {
    if env.state_dim() != agent.state_dim() || env.action_dim() != agent.action_dim() {
        return Err(Error::Dimension {
            expected: agent.state_dim(),
            got: env.state_dim(),
        });
    }
    let cfg = agent.config.clone();
    let mut summary = TrainSummary {
        metrics: Vec::new(),
        total_steps: 0,
        updates: 0,
    };
    let mut episode = 0usize;
    'epochs: for epoch in 0..cfg.n_epochs {
        env.rewind();
        loop {
            if cfg.max_episodes.is_some_and(|m| episode >= m) {
                break 'epochs;
            }
            let reset = match env.reset() {
                Ok(r) => r,
                Err(Error::Exhausted) => break,
                Err(e) => return Err(e),
            };
            let mut state = reset.state.values;
            let mut reward_sum = 0.0;
            let mut last_p_loss = reset.p_loss_ini;
            let mut last_delta = 0.0;
            let mut reason = DoneReason::Running;
            let mut steps = 0;
            let mut means = UpdateMeans::default();

            for t in 1..=cfg.max_episode_steps {
                let unit: Vec<f64> = if summary.total_steps < cfg.start_steps {
                    let d = agent.action_dim();
                    (0..d).map(|_| agent.rng_mut().random_range(-1.0..=1.0)).collect()
                } else {
                    agent.select_action(&state, ActionMode::Stochastic)?.unit
                };
                let step = env.step(&Action::from_unit(&unit))?;
                summary.total_steps += 1;
                steps = t;
                reward_sum += step.reward;
                last_p_loss = step.info.p_loss;
                last_delta = step.info.delta_p_loss_frac;
                reason = step.done_reason;
                // running out of steps is a time limit, not a terminal state
                let terminal = matches!(step.done_reason, DoneReason::Solved | DoneReason::Diverged);
                let next_state = step.next_state.values;
                buffer.push(Transition {
                    state: std::mem::replace(&mut state, next_state.clone()),
                    action: unit,
                    reward: step.reward,
                    next_state,
                    done: terminal,
                });
                if buffer.len() >= cfg.batch_size && episode >= cfg.batch_size {
                    for _ in 0..cfg.updates_per_step {
                        let stats = agent.update(buffer)?;
                        means.add(&stats);
                        summary.updates += 1;
                    }
                }
                if step.done {
                    break;
                }
            }
            if reason == DoneReason::Running {
                reason = DoneReason::MaxSteps;
            }
            let metrics = EpisodeMetrics {
                episode,
                steps,
                reward: reward_sum,
                p_loss_pre: reset.p_loss_ini,
                p_loss_final: last_p_loss,
                delta_loss_frac: last_delta,
                done_reason: reason,
                q1_loss: means.mean(|s| s.q1_loss),
                q2_loss: means.mean(|s| s.q2_loss),
                policy_loss: means.mean(|s| s.policy_loss),
                alpha: agent.alpha(),
            };
            observer.on_episode(&metrics)?;
            summary.metrics.push(metrics);
            episode += 1;
            if cfg.checkpoint_interval > 0 && episode.is_multiple_of(cfg.checkpoint_interval) {
                observer.on_checkpoint(agent, episode)?;
            }
        }
        if let Some(decay) = cfg.lr_decay {
            log::debug!("epoch {epoch} done, decaying learning rates by {decay}");
            agent.scale_learning_rates(1.0 - decay);
        }
    }
    Ok(summary)
}
