use serde::{Deserialize, Serialize};

use crate::grid_model::{derive_admittance_params, GridCase};

/// Flows at both terminals of one branch, per-unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub s_from: f64,
    pub s_to: f64,
    pub p_loss: f64,
}

impl BranchFlow {
    /// Larger apparent power of the two terminals.
    pub fn s_max_end(&self) -> f64 {
        self.s_from.max(self.s_to)
    }
}

/// Terminal power of a pi-model line seen from end `i` towards end `j`.
fn terminal_flow(g: f64, b: f64, b0: f64, vi: f64, vj: f64, theta_ij: f64) -> (f64, f64) {
    let (sin, cos) = theta_ij.sin_cos();
    let p = g * vi * vi - vi * vj * (g * cos + b * sin);
    let q = -vi * vi * (b0 + b) - vi * vj * (g * sin - b * cos);
    (p, q)
}

/// Flows on every branch, in case order. Out-of-service branches carry zero.
pub fn compute_branch_flows(case: &GridCase, v_mag: &[f64], v_ang: &[f64]) -> Vec<BranchFlow> {
    case.branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return BranchFlow::default();
            }
            let (g, b) = derive_admittance_params(br).expect("validated case");
            let i = case.bus_position(br.from_bus).expect("validated case");
            let j = case.bus_position(br.to_bus).expect("validated case");
            let theta = v_ang[i] - v_ang[j];
            let (p_from, q_from) = terminal_flow(g, b, br.b_charge, v_mag[i], v_mag[j], theta);
            let (p_to, q_to) = terminal_flow(g, b, br.b_charge, v_mag[j], v_mag[i], -theta);
            BranchFlow {
                p_from,
                q_from,
                p_to,
                q_to,
                s_from: p_from.hypot(q_from),
                s_to: p_to.hypot(q_to),
                p_loss: p_from + p_to,
            }
        })
        .collect()
}
