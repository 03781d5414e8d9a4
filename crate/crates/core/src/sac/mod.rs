//! Soft actor-critic with a tanh-squashed Gaussian policy, twin critics,
//! Polyak-averaged targets and automatic entropy temperature tuning.

mod checkpoint;
mod replay;
mod train;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::environment::Action;
use crate::error::{Error, Result};
use crate::neural::{adam_step, polyak_update, AdamState, DenseNetwork, ScalarAdam};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use replay::{ReplayBuffer, Transition};
pub use train::{train, EpisodeMetrics, NullObserver, TrainObserver, TrainSummary};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Stabiliser inside the tanh change-of-variables term.
pub const SQUASH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub batch_size: usize,
    pub max_episode_steps: usize,
    pub replay_capacity: usize,
    pub gamma: f64,
    /// Retention coefficient of the target networks.
    pub polyak: f64,
    pub lr_q: f64,
    pub lr_policy: f64,
    pub lr_alpha: f64,
    pub alpha_init: f64,
    /// Passes over the snapshot stream.
    pub n_epochs: usize,
    /// Optional cap on the number of training episodes.
    pub max_episodes: Option<usize>,
    pub random_seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Environment steps taken with uniform random actions before the policy acts.
    pub start_steps: usize,
    pub updates_per_step: usize,
    /// Carried for configuration compatibility; not used by the update.
    pub entropy_max: f64,
    /// Per-epoch multiplicative learning-rate decay, `lr *= 1 - lr_decay`.
    pub lr_decay: Option<f64>,
    /// Episodes between checkpoints handed to the observer; 0 disables.
    pub checkpoint_interval: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_episode_steps: 20,
            replay_capacity: 100_000,
            gamma: 0.99,
            polyak: 0.995,
            lr_q: 1e-3,
            lr_policy: 1e-3,
            lr_alpha: 1e-4,
            alpha_init: 0.01,
            n_epochs: 1,
            max_episodes: None,
            random_seed: 10,
            hidden_layers: 2,
            hidden_width: 64,
            start_steps: 1000,
            updates_per_step: 1,
            entropy_max: 0.001,
            lr_decay: None,
            checkpoint_interval: 0,
        }
    }
}

impl SacConfig {
    /// Rejects configurations the algorithm cannot run with.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.max_episode_steps == 0 {
            return fail("max_episode_steps must be positive".into());
        }
        if self.replay_capacity < self.batch_size {
            return fail("replay_capacity must be at least batch_size".into());
        }
        if self.start_steps < self.batch_size {
            return fail(format!(
                "start_steps ({}) must be at least batch_size ({})",
                self.start_steps, self.batch_size
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return fail(format!("polyak {} outside [0, 1]", self.polyak));
        }
        for (name, lr) in [("lr_q", self.lr_q), ("lr_policy", self.lr_policy), ("lr_alpha", self.lr_alpha)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return fail(format!("{name} must be a non-negative number"));
            }
        }
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return fail("alpha_init must be positive".into());
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return fail("networks need at least one hidden layer of positive width".into());
        }
        if let Some(d) = self.lr_decay {
            if !(0.0..1.0).contains(&d) {
                return fail(format!("lr_decay {d} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Fields outside the typical tuning ranges. Not an error: ablations such
    /// as a zero learning rate are legitimate.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, v: f64, lo: f64, hi: f64| {
            if v < lo || v > hi {
                out.push(format!("{name} = {v} outside typical range [{lo}, {hi}]"));
            }
        };
        check("batch_size", self.batch_size as f64, 32.0, 200.0);
        check("max_episode_steps", self.max_episode_steps as f64, 10.0, 40.0);
        check("replay_capacity", self.replay_capacity as f64, 1e5, 1e6);
        check("lr_q", self.lr_q, 1e-4, 1e-3);
        check("lr_policy", self.lr_policy, 1e-4, 1e-3);
        check("lr_alpha", self.lr_alpha, 1e-4, 1e-3);
        check("alpha_init", self.alpha_init, 1e-3, 0.2);
        check("n_epochs", self.n_epochs as f64, 1.0, 5.0);
        check("random_seed", self.random_seed as f64, 10.0, 30.0);
        check("hidden_layers", self.hidden_layers as f64, 2.0, 5.0);
        out
    }

    fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

/// A chosen action in both the squashed unit domain and setpoint form.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedAction {
    pub action: Action,
    pub unit: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub policy_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

/// Log-density of `tanh(u)` when `u ~ N(mean, exp(log_std))`, summed over dimensions.
pub fn squashed_gaussian_log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(u)
        .map(|((&m, &ls), &u)| {
            let z = (u - m) / ls.exp();
            let a = u.tanh();
            -0.5 * z * z - ls - half_log_2pi - (1.0 - a * a + SQUASH_EPS).ln()
        })
        .sum()
}

#[derive(Debug, Clone)]
struct Optimizers {
    policy: AdamState,
    q1: AdamState,
    q2: AdamState,
    alpha: ScalarAdam,
}

impl Optimizers {
    fn new(config: &SacConfig) -> Self {
        Self {
            policy: AdamState::new(config.lr_policy),
            q1: AdamState::new(config.lr_q),
            q2: AdamState::new(config.lr_q),
            alpha: ScalarAdam::new(config.lr_alpha),
        }
    }
}

/// Reparameterised policy sample for a batch (columns are samples).
struct PolicySample {
    log_std: DMatrix<f64>,
    /// 1 where log_std is inside its clamp range, else 0.
    log_std_live: DMatrix<f64>,
    noise: DMatrix<f64>,
    squashed: DMatrix<f64>,
    log_prob: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub policy: DenseNetwork,
    pub q1: DenseNetwork,
    pub q2: DenseNetwork,
    pub q1_target: DenseNetwork,
    pub q2_target: DenseNetwork,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub config: SacConfig,
    state_dim: usize,
    action_dim: usize,
    optimizers: Optimizers,
    rng: ChaCha8Rng,
}

impl SacAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: SacConfig) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::Config("state and action dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.random_seed);
        let hidden = config.hidden();
        let policy_dims: Vec<usize> = std::iter::once(state_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(2 * action_dim))
            .collect();
        let critic_dims: Vec<usize> = std::iter::once(state_dim + action_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let policy = DenseNetwork::random(&policy_dims, &mut rng).with_output_scale(1e-3, &mut rng);
        let q1 = DenseNetwork::random(&critic_dims, &mut rng);
        let q2 = DenseNetwork::random(&critic_dims, &mut rng);
        Ok(Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            policy,
            q1,
            q2,
            log_alpha: config.alpha_init.ln(),
            target_entropy: -(action_dim as f64),
            optimizers: Optimizers::new(&config),
            config,
            state_dim,
            action_dim,
            rng,
        })
    }

    /// Replaces the training configuration, keeping the networks and temperature.
    /// Optimizer state restarts and the RNG is reseeded.
    pub fn reconfigure(&mut self, config: SacConfig) -> Result<()> {
        config.validate()?;
        if config.hidden_layers != self.config.hidden_layers || config.hidden_width != self.config.hidden_width {
            return Err(Error::Config("cannot change the network architecture of a trained agent".into()));
        }
        self.optimizers = Optimizers::new(&config);
        self.rng = ChaCha8Rng::seed_from_u64(config.random_seed);
        self.config = config;
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Multiplies every optimizer learning rate by `factor`.
    pub fn scale_learning_rates(&mut self, factor: f64) {
        self.optimizers.policy.learning_rate *= factor;
        self.optimizers.q1.learning_rate *= factor;
        self.optimizers.q2.learning_rate *= factor;
        self.optimizers.alpha.learning_rate *= factor;
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        Ok(())
    }

    /// Mean and clamped log-std of the policy at one state.
    pub fn policy_head(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(state)?;
        let out = self.policy.predict(&DMatrix::from_column_slice(state.len(), 1, state))?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("policy produced a non-finite output".into()));
        }
        let d = self.action_dim;
        let mean = out.rows(0, d).iter().copied().collect();
        let log_std = out.rows(d, d).iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok((mean, log_std))
    }

    /// Deterministic action, `tanh(mean)`. Does not touch the RNG.
    pub fn act_deterministic(&self, state: &[f64]) -> Result<SelectedAction> {
        let (mean, _) = self.policy_head(state)?;
        let unit: Vec<f64> = mean.iter().map(|m| m.tanh()).collect();
        Ok(SelectedAction {
            action: Action::from_unit(&unit),
            unit,
        })
    }

    pub fn select_action(&mut self, state: &[f64], mode: ActionMode) -> Result<SelectedAction> {
        match mode {
            ActionMode::Deterministic => self.act_deterministic(state),
            ActionMode::Stochastic => {
                let (mean, log_std) = self.policy_head(state)?;
                let unit: Vec<f64> = mean
                    .iter()
                    .zip(&log_std)
                    .map(|(m, ls)| {
                        let eps: f64 = self.rng.sample(StandardNormal);
                        (m + ls.exp() * eps).tanh()
                    })
                    .collect();
                Ok(SelectedAction {
                    action: Action::from_unit(&unit),
                    unit,
                })
            }
        }
    }

    /// Log-probability of the pre-squash sample `u` under the policy at `state`.
    pub fn log_prob(&self, state: &[f64], u: &[f64]) -> Result<f64> {
        let (mean, log_std) = self.policy_head(state)?;
        if u.len() != self.action_dim {
            return Err(Error::Dimension {
                expected: self.action_dim,
                got: u.len(),
            });
        }
        Ok(squashed_gaussian_log_prob(&mean, &log_std, u))
    }

    fn sample_from_output(&mut self, out: &DMatrix<f64>) -> PolicySample {
        let d = self.action_dim;
        let b = out.ncols();
        let raw_log_std = out.rows(d, d);
        let log_std = raw_log_std.map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let log_std_live = raw_log_std.map(|v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) { 1.0 } else { 0.0 });
        let noise = DMatrix::from_fn(d, b, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let mut squashed = DMatrix::zeros(d, b);
        let mut log_prob = vec![0.0; b];
        for c in 0..b {
            let mean: Vec<f64> = out.view((0, c), (d, 1)).iter().copied().collect();
            let ls: Vec<f64> = log_std.column(c).iter().copied().collect();
            let u: Vec<f64> = (0..d).map(|r| mean[r] + ls[r].exp() * noise[(r, c)]).collect();
            for r in 0..d {
                squashed[(r, c)] = u[r].tanh();
            }
            log_prob[c] = squashed_gaussian_log_prob(&mean, &ls, &u);
        }
        PolicySample {
            log_std,
            log_std_live,
            noise,
            squashed,
            log_prob,
        }
    }

    fn stack(states: &DMatrix<f64>, actions: &DMatrix<f64>) -> DMatrix<f64> {
        let (s, a, b) = (states.nrows(), actions.nrows(), states.ncols());
        let mut out = DMatrix::zeros(s + a, b);
        out.view_mut((0, 0), (s, b)).copy_from(states);
        out.view_mut((s, 0), (a, b)).copy_from(actions);
        out
    }

    fn batch_matrices(&self, batch: &[&Transition]) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        for t in batch {
            if t.state.len() != self.state_dim || t.next_state.len() != self.state_dim {
                return Err(Error::Dimension {
                    expected: self.state_dim,
                    got: t.state.len(),
                });
            }
            if t.action.len() != self.action_dim {
                return Err(Error::Dimension {
                    expected: self.action_dim,
                    got: t.action.len(),
                });
            }
        }
        let b = batch.len();
        let states = DMatrix::from_fn(self.state_dim, b, |r, c| batch[c].state[r]);
        let next = DMatrix::from_fn(self.state_dim, b, |r, c| batch[c].next_state[r]);
        let actions = DMatrix::from_fn(self.action_dim, b, |r, c| batch[c].action[r]);
        Ok((states, actions, next))
    }

    /// Soft Bellman targets with next actions freshly sampled from the policy.
    pub fn compute_q_target(&mut self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let (_, _, next) = self.batch_matrices(batch)?;
        let out = self.policy.predict(&next)?;
        let sample = self.sample_from_output(&out);
        let sa = Self::stack(&next, &sample.squashed);
        let t1 = self.q1_target.predict(&sa)?;
        let t2 = self.q2_target.predict(&sa)?;
        let alpha = self.alpha();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(c, t)| {
                if t.done || self.config.gamma == 0.0 {
                    return t.reward;
                }
                let soft = t1[(0, c)].min(t2[(0, c)]) - alpha * sample.log_prob[c];
                t.reward + self.config.gamma * soft
            })
            .collect())
    }

    /// One gradient step on both critics, the policy and the temperature,
    /// followed by the target update.
    pub fn update(&mut self, buffer: &ReplayBuffer) -> Result<UpdateStats> {
        let bs = self.config.batch_size;
        if buffer.len() < bs {
            return Err(Error::Config(format!(
                "replay buffer holds {} transitions, batch needs {bs}",
                buffer.len()
            )));
        }
        let indices = buffer.sample_indices(bs, &mut self.rng);
        let batch: Vec<&Transition> = indices.iter().map(|&i| buffer.get(i)).collect();
        self.update_on(&batch)
    }

    /// [`SacAgent::update`] on an explicit batch.
    pub fn update_on(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        let b = batch.len() as f64;
        let y = self.compute_q_target(batch)?;
        let (states, actions, _) = self.batch_matrices(batch)?;
        let sa = Self::stack(&states, &actions);

        let mut critic_loss = [0.0; 2];
        for (k, (net, opt)) in [
            (&mut self.q1, &mut self.optimizers.q1),
            (&mut self.q2, &mut self.optimizers.q2),
        ]
        .into_iter()
        .enumerate()
        {
            let (q, tape) = net.forward_batch(&sa)?;
            let diff = DMatrix::from_fn(1, batch.len(), |_, c| q[(0, c)] - y[c]);
            critic_loss[k] = diff.iter().map(|d| d * d).sum::<f64>() / b;
            let (grads, _) = net.backward(&tape, &(diff * (2.0 / b)))?;
            adam_step(net, &grads, opt);
        }

        let d = self.action_dim;
        let alpha = self.alpha();
        let (out, policy_tape) = self.policy.forward_batch(&states)?;
        let sample = self.sample_from_output(&out);
        let sa_pi = Self::stack(&states, &sample.squashed);
        let (v1, tape1) = self.q1.forward_batch(&sa_pi)?;
        let (v2, tape2) = self.q2.forward_batch(&sa_pi)?;
        let pick1 = DMatrix::from_fn(1, batch.len(), |_, c| if v1[(0, c)] <= v2[(0, c)] { 1.0 } else { 0.0 });
        let pick2 = pick1.map(|p| 1.0 - p);
        let (_, in1) = self.q1.backward(&tape1, &pick1)?;
        let (_, in2) = self.q2.backward(&tape2, &pick2)?;
        let dq_da = in1.rows(self.state_dim, d) + in2.rows(self.state_dim, d);

        let mut policy_loss = 0.0;
        let mut out_grad = DMatrix::zeros(2 * d, batch.len());
        for c in 0..batch.len() {
            let q_min = v1[(0, c)].min(v2[(0, c)]);
            policy_loss += (alpha * sample.log_prob[c] - q_min) / b;
            for r in 0..d {
                let a = sample.squashed[(r, c)];
                let one_minus = 1.0 - a * a;
                let sigma_eps = sample.log_std[(r, c)].exp() * sample.noise[(r, c)];
                // d log_prob / du through the squashing correction
                let dlogp_du = 2.0 * a * one_minus / (one_minus + SQUASH_EPS);
                let dq_du = dq_da[(r, c)] * one_minus;
                let g_u = alpha * dlogp_du - dq_du;
                out_grad[(r, c)] = g_u / b;
                out_grad[(d + r, c)] = (g_u * sigma_eps - alpha) * sample.log_std_live[(r, c)] / b;
            }
        }
        let (policy_grads, _) = self.policy.backward(&policy_tape, &out_grad)?;
        adam_step(&mut self.policy, &policy_grads, &mut self.optimizers.policy);

        let mean_excess = sample.log_prob.iter().map(|lp| lp + self.target_entropy).sum::<f64>() / b;
        let alpha_loss = -alpha * mean_excess;
        self.optimizers.alpha.step(&mut self.log_alpha, -alpha * mean_excess);

        polyak_update(&mut self.q1_target, &self.q1, self.config.polyak);
        polyak_update(&mut self.q2_target, &self.q2, self.config.polyak);

        Ok(UpdateStats {
            q1_loss: critic_loss[0],
            q2_loss: critic_loss[1],
            policy_loss,
            alpha_loss,
            alpha: self.alpha(),
        })
    }
}
