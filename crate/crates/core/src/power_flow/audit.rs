use serde::{Deserialize, Serialize};

use super::PowerFlowSolution;
use crate::grid_model::GridCase;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub bus: u32,
    pub v: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalViolation {
    pub branch: u32,
    pub s: f64,
    pub s_max: f64,
}

/// Voltage and thermal limit violations over the monitored area.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub voltage_violations: Vec<VoltageViolation>,
    pub thermal_violations: Vec<ThermalViolation>,
    /// Sum of `(V - V_max)(V - V_min)` over violating buses.
    pub delta_v_violation: f64,
    /// Sum of `(S - S_max)^2` over overloaded branches.
    pub delta_p_overflow: f64,
}

impl ViolationReport {
    pub fn has_violations(&self) -> bool {
        !self.voltage_violations.is_empty() || !self.thermal_violations.is_empty()
    }

    /// Combined magnitude, used to judge whether a control mitigated violations.
    pub fn severity(&self) -> f64 {
        self.delta_v_violation + self.delta_p_overflow
    }

    pub fn add_voltage(&mut self, bus: u32, v: f64, v_min: f64, v_max: f64) {
        if v > v_max || v < v_min {
            self.delta_v_violation += (v - v_max) * (v - v_min);
            self.voltage_violations.push(VoltageViolation { bus, v, v_min, v_max });
        }
    }

    pub fn add_thermal(&mut self, branch: u32, s: f64, s_max: f64) {
        if s > s_max {
            self.delta_p_overflow += (s - s_max).powi(2);
            self.thermal_violations.push(ThermalViolation { branch, s, s_max });
        }
    }
}

/// Audits monitored buses against their voltage band and monitored in-service
/// branches against their rating. Branch loading is the larger terminal MVA.
pub fn audit_violations(case: &GridCase, solution: &PowerFlowSolution) -> ViolationReport {
    let mut report = ViolationReport::default();
    for &id in &case.monitored_buses {
        let Some(k) = case.bus_position(id) else { continue };
        let bus = &case.buses[k];
        report.add_voltage(id, solution.v_mag[k], bus.v_min, bus.v_max);
    }
    for &id in &case.monitored_branches {
        let Some(k) = case.branch_position(id) else { continue };
        let br = &case.branches[k];
        if br.in_service {
            report.add_thermal(id, solution.flows[k].s_max_end(), br.s_max);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overflow_term() {
        let mut r = ViolationReport::default();
        r.add_thermal(1, 1.2, 1.0);
        assert!((r.delta_p_overflow - 0.04).abs() < 1e-12);
        assert_eq!(r.thermal_violations.len(), 1);
    }

    #[test]
    fn voltage_term() {
        let mut r = ViolationReport::default();
        r.add_voltage(3, 1.1, 0.97, 1.07);
        assert!((r.delta_v_violation - 0.0039).abs() < 1e-12);
        let mut low = ViolationReport::default();
        low.add_voltage(3, 0.95, 0.97, 1.07);
        assert!(low.delta_v_violation > 0.0);
    }

    #[test]
    fn in_bounds_is_clean() {
        let mut r = ViolationReport::default();
        r.add_voltage(1, 1.0, 0.97, 1.07);
        r.add_voltage(2, 1.07, 0.97, 1.07);
        r.add_thermal(1, 0.99, 1.0);
        assert!(!r.has_violations());
        assert_eq!(r.delta_v_violation, 0.0);
        assert_eq!(r.delta_p_overflow, 0.0);
    }
}
