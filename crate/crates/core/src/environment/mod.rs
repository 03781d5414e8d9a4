//! Episodic voltage/loss control problem over operating snapshots.
//!
//! Each episode is one snapshot. The agent proposes a voltage setpoint per
//! plant; the environment applies it to every unit of that plant, re-solves
//! the power flow and scores the result against the snapshot's pre-control
//! losses and limit violations.

mod normalizer;
mod reward;
mod snapshots;
mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_model::{GridCase, SETPOINT_MAX, SETPOINT_MIN};
use crate::power_flow::{audit_violations, solve_newton_raphson, PowerFlowSolution, SolverOptions, ViolationReport};

pub use normalizer::{fit_normalizer, Normalizer, MIN_SCALE};
pub use reward::{compute_reward, reward_branch, RewardBranch};
pub use snapshots::{load_snapshot_dir, snapshot_paths};
pub use state::{extract_raw_state, extract_state, state_layout, StateLayout, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub max_steps: usize,
    /// Fractional loss reduction required for a successful episode.
    pub success_threshold: f64,
    /// Reward assigned to a step whose power flow diverges.
    pub divergence_penalty: f64,
    pub solver: SolverOptions,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_steps: 20,
            success_threshold: 0.005,
            divergence_penalty: -100.0,
            solver: SolverOptions::default(),
        }
    }
}

/// One voltage setpoint per plant, always within the setpoint bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    v_set_per_plant: Vec<f64>,
}

impl Action {
    /// Builds an action, clipping each setpoint into bounds.
    pub fn new(setpoints: Vec<f64>) -> Self {
        let v_set_per_plant = setpoints
            .into_iter()
            .map(|v| {
                if v.is_nan() {
                    0.5 * (SETPOINT_MIN + SETPOINT_MAX)
                } else {
                    v.clamp(SETPOINT_MIN, SETPOINT_MAX)
                }
            })
            .collect();
        Self { v_set_per_plant }
    }

    /// Maps a squashed action in `[-1, 1]^d` affinely onto the setpoint range.
    pub fn from_unit(unit: &[f64]) -> Self {
        let mid = 0.5 * (SETPOINT_MIN + SETPOINT_MAX);
        let half = 0.5 * (SETPOINT_MAX - SETPOINT_MIN);
        Self::new(unit.iter().map(|u| mid + half * u.clamp(-1.0, 1.0)).collect())
    }

    /// Inverse of [`Action::from_unit`].
    pub fn to_unit(&self) -> Vec<f64> {
        let mid = 0.5 * (SETPOINT_MIN + SETPOINT_MAX);
        let half = 0.5 * (SETPOINT_MAX - SETPOINT_MIN);
        self.v_set_per_plant.iter().map(|v| (v - mid) / half).collect()
    }

    pub fn setpoints(&self) -> &[f64] {
        &self.v_set_per_plant
    }

    pub fn len(&self) -> usize {
        self.v_set_per_plant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_set_per_plant.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DoneReason {
    Solved,
    Diverged,
    MaxSteps,
    Running,
}

impl DoneReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DoneReason::Solved => "Solved",
            DoneReason::Diverged => "Diverged",
            DoneReason::MaxSteps => "MaxSteps",
            DoneReason::Running => "Running",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub p_loss: f64,
    pub delta_p_loss_frac: f64,
    pub report: ViolationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: StateVector,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
    pub info: StepInfo,
}

/// A snapshot prepared for control: solved base case plus episode counters.
#[derive(Debug, Clone)]
pub struct SnapshotEpisode {
    pub case: GridCase,
    pub base_solution: PowerFlowSolution,
    pub base_report: ViolationReport,
    pub p_loss_pre: f64,
    pub v_set_initial: Vec<f64>,
    pub step_count: usize,
    pub max_steps: usize,
    current_state: StateVector,
}

impl SnapshotEpisode {
    /// Solves the snapshot's base case. Fails for unsolvable or lossless snapshots.
    pub fn prepare(case: GridCase, config: &EnvConfig) -> Result<Self> {
        let base_solution = solve_newton_raphson(&case, None, &config.solver)?;
        if !base_solution.converged {
            return Err(Error::Numerical("base case power flow diverged".into()));
        }
        if base_solution.p_loss_total <= 0.0 {
            return Err(Error::Numerical(format!(
                "base case losses must be positive, got {}",
                base_solution.p_loss_total
            )));
        }
        let base_report = audit_violations(&case, &base_solution);
        let v_set_initial = case.plant_setpoints();
        let current_state = extract_raw_state(&case, &base_solution);
        Ok(Self {
            p_loss_pre: base_solution.p_loss_total,
            case,
            base_solution,
            base_report,
            v_set_initial,
            step_count: 0,
            max_steps: config.max_steps,
            current_state,
        })
    }
}

/// Outcome of [`GridEnv::reset`].
#[derive(Debug, Clone)]
pub struct ResetOutcome {
    pub state: StateVector,
    pub reward: f64,
    pub p_loss_ini: f64,
    pub v_set_ini: Vec<f64>,
    pub done: bool,
}

/// Termination test applied after every step.
pub fn check_termination(
    episode: &SnapshotEpisode,
    converged: bool,
    report: &ViolationReport,
    delta_frac: f64,
    success_threshold: f64,
) -> (bool, DoneReason) {
    if !converged {
        (true, DoneReason::Diverged)
    } else if !report.has_violations() && -delta_frac >= success_threshold {
        (true, DoneReason::Solved)
    } else if episode.step_count >= episode.max_steps {
        (true, DoneReason::MaxSteps)
    } else {
        (false, DoneReason::Running)
    }
}

/// Control environment over a stream of snapshots sharing one topology.
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: EnvConfig,
    snapshots: Vec<GridCase>,
    cursor: usize,
    normalizer: Normalizer,
    layout: StateLayout,
    episode: Option<SnapshotEpisode>,
    done: bool,
}

impl GridEnv {
    pub fn new(snapshots: Vec<GridCase>, normalizer: Normalizer, config: EnvConfig) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Config("environment needs at least one snapshot".into()))?;
        let layout = state_layout(first);
        if normalizer.len() != layout.len() {
            return Err(Error::Dimension {
                expected: layout.len(),
                got: normalizer.len(),
            });
        }
        let n_plants = first.plants.len();
        for case in &snapshots {
            if state_layout(case) != layout || case.plants.len() != n_plants {
                return Err(Error::Semantic("snapshots do not share one topology".into()));
            }
        }
        Ok(Self {
            config,
            snapshots,
            cursor: 0,
            normalizer,
            layout,
            episode: None,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn state_dim(&self) -> usize {
        self.layout.len()
    }

    pub fn action_dim(&self) -> usize {
        self.snapshots[0].plants.len()
    }

    pub fn remaining(&self) -> usize {
        self.snapshots.len() - self.cursor
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.len()
    }

    /// Restarts the snapshot stream from the beginning.
    pub fn rewind(&mut self) {
        self.cursor = 0;
        self.episode = None;
        self.done = true;
    }

    pub fn episode(&self) -> Option<&SnapshotEpisode> {
        self.episode.as_ref()
    }

    fn normalized(&self, raw: &StateVector) -> StateVector {
        StateVector::new(self.normalizer.apply(&raw.values), raw.layout.clone())
    }

    /// Loads the next solvable snapshot. Unsolvable snapshots are skipped.
    pub fn reset(&mut self) -> Result<ResetOutcome> {
        while self.cursor < self.snapshots.len() {
            let case = self.snapshots[self.cursor].clone();
            let index = self.cursor;
            self.cursor += 1;
            match SnapshotEpisode::prepare(case, &self.config) {
                Ok(episode) => return Ok(self.begin(episode)),
                Err(e) => log::info!("skipping snapshot {index}: {e}"),
            }
        }
        Err(Error::Exhausted)
    }

    /// Starts an episode on a given snapshot without touching the stream.
    pub fn reset_to(&mut self, case: GridCase) -> Result<ResetOutcome> {
        if state_layout(&case) != self.layout {
            return Err(Error::Dimension {
                expected: self.layout.len(),
                got: state_layout(&case).len(),
            });
        }
        let episode = SnapshotEpisode::prepare(case, &self.config)?;
        Ok(self.begin(episode))
    }

    fn begin(&mut self, episode: SnapshotEpisode) -> ResetOutcome {
        let state = self.normalized(&episode.current_state);
        let reward = compute_reward(episode.p_loss_pre, episode.p_loss_pre, &episode.base_report)
            .expect("positive base losses");
        let out = ResetOutcome {
            state,
            reward,
            p_loss_ini: episode.p_loss_pre,
            v_set_ini: episode.v_set_initial.clone(),
            done: false,
        };
        self.episode = Some(episode);
        self.done = false;
        out
    }

    /// Applies plant setpoints to the current snapshot and scores the result.
    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Config("step called on a finished episode".into()));
        }
        let episode = self.episode.as_mut().expect("active episode");
        let controlled = episode.case.with_plant_setpoints(action.setpoints())?;
        let solution = solve_newton_raphson(&controlled, Some(&episode.base_solution), &self.config.solver)?;
        episode.step_count += 1;

        let (reward, info, raw_state) = if solution.converged {
            let report = audit_violations(&controlled, &solution);
            let delta = (solution.p_loss_total - episode.p_loss_pre) / episode.p_loss_pre;
            let reward = compute_reward(solution.p_loss_total, episode.p_loss_pre, &report)?;
            let raw = extract_raw_state(&controlled, &solution);
            let info = StepInfo {
                p_loss: solution.p_loss_total,
                delta_p_loss_frac: delta,
                report,
            };
            (reward, info, raw)
        } else {
            let info = StepInfo {
                p_loss: episode.p_loss_pre,
                delta_p_loss_frac: 0.0,
                report: ViolationReport::default(),
            };
            (self.config.divergence_penalty, info, episode.current_state.clone())
        };
        let (done, done_reason) = check_termination(
            episode,
            solution.converged,
            &info.report,
            info.delta_p_loss_frac,
            self.config.success_threshold,
        );
        episode.current_state = raw_state;
        let next_state = StateVector::new(
            self.normalizer.apply(&episode.current_state.values),
            episode.current_state.layout.clone(),
        );
        self.done = done;
        Ok(StepResult {
            next_state,
            reward,
            done,
            done_reason,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::bundled;

    fn env_for(cases: Vec<GridCase>) -> GridEnv {
        let dim = state_layout(&cases[0]).len();
        GridEnv::new(cases, Normalizer::identity(dim), EnvConfig::default()).unwrap()
    }

    /// micro3 with setpoints raised so the base case has no violations.
    fn clean_micro3() -> GridCase {
        bundled::micro3().with_plant_setpoints(&[1.03, 1.03]).unwrap()
    }

    #[test]
    fn action_mapping_and_clipping() {
        assert_eq!(Action::from_unit(&[0.0, 1.0, -1.0]).setpoints(), &[1.0, 1.1, 0.9]);
        assert_eq!(Action::new(vec![1.5, 0.2]).setpoints(), &[1.1, 0.9]);
        let a = Action::new(vec![0.95, 1.05]);
        let back = Action::from_unit(&a.to_unit());
        assert!((back.setpoints()[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn reset_on_clean_snapshot() {
        let mut env = env_for(vec![clean_micro3()]);
        let out = env.reset().unwrap();
        assert!(!out.done);
        assert_eq!(out.reward, -1.0);
        assert_eq!(out.v_set_ini, vec![1.03, 1.03]);
        assert!(out.p_loss_ini > 0.0);
        assert_eq!(out.state.values.len(), 3 + 3 + 3 + 3);
    }

    #[test]
    fn reset_skips_diverging_snapshot() {
        let mut heavy = clean_micro3();
        for b in &mut heavy.buses {
            b.p_load *= 30.0;
        }
        let good = clean_micro3();
        let mut env = env_for(vec![heavy, good.clone()]);
        let out = env.reset().unwrap();
        assert_eq!(out.v_set_ini, good.plant_setpoints());
        assert!(matches!(env.reset(), Err(Error::Exhausted)));
    }

    #[test]
    fn no_op_action_costs_one() {
        let mut env = env_for(vec![clean_micro3()]);
        env.reset().unwrap();
        let r = env.step(&Action::new(vec![1.03, 1.03])).unwrap();
        assert!(r.info.delta_p_loss_frac.abs() < 1e-9);
        assert!((r.reward + 1.0).abs() < 1e-6);
        assert!(!r.done);
        assert_eq!(r.done_reason, DoneReason::Running);
    }

    #[test]
    fn loss_reducing_action_solves() {
        let mut env = env_for(vec![clean_micro3()]);
        env.reset().unwrap();
        let r = env.step(&Action::new(vec![1.06, 1.06])).unwrap();
        assert!(r.info.delta_p_loss_frac < -0.005);
        assert!(!r.info.report.has_violations());
        assert!(r.done);
        assert_eq!(r.done_reason, DoneReason::Solved);
        assert!((r.reward - (50.0 - 1000.0 * r.info.delta_p_loss_frac)).abs() < 1e-12);
        assert!(env.step(&Action::new(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn voltage_violation_uses_penalty_branch() {
        let mut env = env_for(vec![clean_micro3()]);
        env.reset().unwrap();
        let r = env.step(&Action::new(vec![1.1, 1.1])).unwrap();
        assert!(r.info.report.has_violations());
        let expected = -r.info.report.delta_p_overflow / 10.0 - r.info.report.delta_v_violation / 100.0;
        assert_eq!(r.reward, expected);
        // buses 1 and 2 sit at 1.1 and contribute (0.03)(0.13) each
        assert!(r.info.report.delta_v_violation >= 2.0 * 0.0039 - 1e-12);
    }

    #[test]
    fn max_steps_terminates() {
        let mut env = GridEnv::new(
            vec![clean_micro3()],
            Normalizer::identity(12),
            EnvConfig {
                max_steps: 3,
                ..EnvConfig::default()
            },
        )
        .unwrap();
        env.reset().unwrap();
        let action = Action::new(vec![1.03, 1.03]);
        assert!(!env.step(&action).unwrap().done);
        assert!(!env.step(&action).unwrap().done);
        let last = env.step(&action).unwrap();
        assert!(last.done);
        assert_eq!(last.done_reason, DoneReason::MaxSteps);
    }

    #[test]
    fn diverged_step_is_penalised() {
        let mut case = clean_micro3();
        for b in &mut case.buses {
            b.p_load *= 4.0;
            b.q_load *= 4.0;
        }
        case.generators[1].p_gen = 1.5;
        let mut env = env_for(vec![case]);
        if env.reset().is_err() {
            return;
        }
        let r = env.step(&Action::new(vec![0.9, 0.9])).unwrap();
        if r.done_reason == DoneReason::Diverged {
            assert_eq!(r.reward, -100.0);
            assert!(r.done);
        }
    }

    #[test]
    fn termination_rules() {
        let episode = SnapshotEpisode::prepare(clean_micro3(), &EnvConfig::default()).unwrap();
        let clean = ViolationReport::default();
        assert_eq!(check_termination(&episode, true, &clean, -0.006, 0.005), (true, DoneReason::Solved));
        assert_eq!(check_termination(&episode, false, &clean, -0.006, 0.005), (true, DoneReason::Diverged));
        let mut at_limit = episode.clone();
        at_limit.step_count = 10;
        at_limit.max_steps = 10;
        assert_eq!(check_termination(&at_limit, true, &clean, 0.0, 0.005), (true, DoneReason::MaxSteps));
        assert_eq!(check_termination(&episode, true, &clean, -0.004, 0.005), (false, DoneReason::Running));
        let mut dirty = ViolationReport::default();
        dirty.add_voltage(1, 1.1, 0.97, 1.07);
        assert_eq!(check_termination(&episode, true, &dirty, -0.05, 0.005), (false, DoneReason::Running));
    }

    #[test]
    fn step_is_deterministic_and_leaves_base_untouched() {
        let mut a = env_for(vec![clean_micro3()]);
        let mut b = a.clone();
        a.reset().unwrap();
        b.reset().unwrap();
        let base = a.episode().unwrap().base_solution.clone();
        let pre = a.episode().unwrap().p_loss_pre;
        let action = Action::new(vec![1.01, 1.045]);
        let ra = a.step(&action).unwrap();
        let rb = b.step(&action).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.episode().unwrap().base_solution, base);
        assert_eq!(a.episode().unwrap().p_loss_pre, pre);
    }
}
