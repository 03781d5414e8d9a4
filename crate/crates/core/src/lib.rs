//! Real-time grid voltage and loss control with soft actor-critic agents.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid_model`]: bus/branch network data and the JSON case format.
//! * [`power_flow`]: Newton-Raphson AC power flow, branch flows, limit audit.
//! * [`environment`]: episodic control problem over operating snapshots.
//! * [`neural`]: dense networks with exact backpropagation and Adam.
//! * [`sac`]: the soft actor-critic agent, replay buffer and training loop.
//! * [`harness`]: snapshot generation, multi-run campaigns, evaluation and
//!   retraining.

pub mod environment;
pub mod error;
pub mod grid_model;
pub mod harness;
pub mod neural;
pub mod power_flow;
pub mod sac;

pub use environment::{Action, EnvConfig, GridEnv, Normalizer};
pub use error::{Error, Result};
pub use grid_model::{parse_case, serialize_case, Branch, Bus, BusKind, Generator, GridCase, Plant};
pub use harness::{EvaluationReport, ModelRegistry, RunConfig};
pub use neural::DenseNetwork;
pub use power_flow::{
    audit_violations, solve_newton_raphson, PowerFlowSolution, SolverOptions, ViolationReport,
};
pub use sac::{Checkpoint, SacAgent, SacConfig};
