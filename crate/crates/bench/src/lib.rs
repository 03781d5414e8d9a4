//! Shared fixtures for the criterion benchmarks.

use gridrl_core::environment::{EnvConfig, GridEnv};
use gridrl_core::grid_model::bundled;
use gridrl_core::harness::{fit_state_normalizer, generate_snapshot_cases, SnapshotGenSpec};
use gridrl_core::sac::{ReplayBuffer, Transition};
use gridrl_core::{GridCase, SacAgent, SacConfig};
use rand::Rng;

pub fn case14() -> GridCase {
    bundled::case14()
}

/// A fresh agent sized for the 14-bus case, plus one normalised state.
pub fn case14_agent(config: SacConfig) -> (SacAgent, Vec<f64>) {
    let case = case14();
    let env_config = EnvConfig::default();
    let spec = SnapshotGenSpec {
        n_snapshots: 16,
        ..SnapshotGenSpec::default()
    };
    let (snapshots, _) = generate_snapshot_cases(&case, &spec).unwrap();
    let normalizer = fit_state_normalizer(&snapshots, &env_config.solver).unwrap();
    let mut env = GridEnv::new(vec![case.clone()], normalizer.clone(), env_config).unwrap();
    let state = env.reset().unwrap().state.values;
    let agent = SacAgent::new(normalizer.len(), case.plants.len(), config).unwrap();
    (agent, state)
}

/// Replay buffer filled with random transitions of the given shape.
pub fn random_buffer(agent: &mut SacAgent, n: usize) -> ReplayBuffer {
    let (sd, ad) = (agent.state_dim(), agent.action_dim());
    let mut buffer = ReplayBuffer::new(n);
    let rng = agent.rng_mut();
    for _ in 0..n {
        buffer.push(Transition {
            state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-100.0..60.0),
            next_state: (0..sd).map(|_| rng.random_range(-1.0..1.0)).collect(),
            done: rng.random_bool(0.1),
        });
    }
    buffer
}
