//! AC power flow: admittance assembly, polar Newton-Raphson with reactive
//! limit enforcement, branch flows and limit auditing.

mod admittance;
mod audit;
mod flows;
mod newton;

use serde::{Deserialize, Serialize};

use crate::grid_model::BusKind;

pub use admittance::{build_admittance, AdmittanceMatrix};
pub use audit::{audit_violations, ThermalViolation, ViolationReport, VoltageViolation};
pub use flows::{compute_branch_flows, BranchFlow};
pub use newton::{enforce_q_limits, solve_newton_raphson};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Infinity-norm bound on the nodal mismatch, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Ignore any supplied starting point and start from a flat profile.
    pub flat_start: bool,
    /// Maximum number of PV to PQ switching rounds.
    pub q_limit_budget: usize,
    pub enforce_q_limits: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20,
            flat_start: false,
            q_limit_budget: 10,
            enforce_q_limits: true,
        }
    }
}

/// Result of a power-flow solve. Vectors are indexed by case order of buses,
/// branches and generators respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub converged: bool,
    /// Newton passes, counting the pass that confirmed convergence.
    pub iterations: usize,
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub flows: Vec<BranchFlow>,
    pub p_loss_total: f64,
    pub mismatch_inf_norm: f64,
    /// Generators whose bus was converted from PV to PQ.
    pub q_limit_switches: Vec<u32>,
    /// Bus typing in effect at the final solve.
    pub bus_kinds: Vec<BusKind>,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
}

impl PowerFlowSolution {
    pub fn total_generation(&self) -> f64 {
        self.p_gen.iter().sum()
    }
}
