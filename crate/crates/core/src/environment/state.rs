use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Normalizer;
use crate::grid_model::GridCase;
use crate::power_flow::PowerFlowSolution;

/// Order of features in a state vector: monitored bus magnitudes and angles
/// (by bus id), then monitored branch active and reactive flows (by branch id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub bus_ids: Vec<u32>,
    pub branch_ids: Vec<u32>,
    pub fields: Vec<(String, Range<usize>)>,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.fields.last().map_or(0, |(_, r)| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn field(&self, name: &str) -> Option<Range<usize>> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub layout: Arc<StateLayout>,
}

impl StateVector {
    pub fn new(values: Vec<f64>, layout: Arc<StateLayout>) -> Self {
        Self { values, layout }
    }
}

pub fn state_layout(case: &GridCase) -> StateLayout {
    let mut bus_ids = case.monitored_buses.clone();
    bus_ids.sort_unstable();
    let mut branch_ids = case.monitored_branches.clone();
    branch_ids.sort_unstable();
    let (nb, nl) = (bus_ids.len(), branch_ids.len());
    let fields = vec![
        ("v_mag".to_string(), 0..nb),
        ("v_ang".to_string(), nb..2 * nb),
        ("p_flow".to_string(), 2 * nb..2 * nb + nl),
        ("q_flow".to_string(), 2 * nb + nl..2 * nb + 2 * nl),
    ];
    StateLayout {
        bus_ids,
        branch_ids,
        fields,
    }
}

/// Unnormalized state features of a solved case.
pub fn extract_raw_state(case: &GridCase, solution: &PowerFlowSolution) -> StateVector {
    let layout = state_layout(case);
    let buses: Vec<usize> = layout
        .bus_ids
        .iter()
        .map(|&id| case.bus_position(id).expect("validated case"))
        .collect();
    let branches: Vec<usize> = layout
        .branch_ids
        .iter()
        .map(|&id| case.branch_position(id).expect("validated case"))
        .collect();
    let mut values = Vec::with_capacity(layout.len());
    values.extend(buses.iter().map(|&k| solution.v_mag[k]));
    values.extend(buses.iter().map(|&k| solution.v_ang[k]));
    values.extend(branches.iter().map(|&k| solution.flows[k].p_from));
    values.extend(branches.iter().map(|&k| solution.flows[k].q_from));
    StateVector::new(values, Arc::new(layout))
}

pub fn extract_state(case: &GridCase, solution: &PowerFlowSolution, normalizer: &Normalizer) -> StateVector {
    let raw = extract_raw_state(case, solution);
    StateVector::new(normalizer.apply(&raw.values), raw.layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::test_support::two_bus;
    use crate::power_flow::{solve_newton_raphson, SolverOptions};

    #[test]
    fn two_bus_layout_and_values() {
        let case = two_bus(0.01, 0.1, 0.5, 0.2);
        let sol = solve_newton_raphson(&case, None, &SolverOptions::default()).unwrap();
        let s = extract_state(&case, &sol, &Normalizer::identity(6));
        assert_eq!(s.values.len(), 6);
        assert_eq!(s.layout.field("p_flow"), Some(4..5));
        assert_eq!(&s.values[0..2], &sol.v_mag[..]);
        assert_eq!(&s.values[2..4], &sol.v_ang[..]);
        assert_eq!(s.values[4], sol.flows[0].p_from);
        assert_eq!(s.values[5], sol.flows[0].q_from);

        let offset = Normalizer {
            mean: s.values.clone(),
            scale: vec![1.0; 6],
            frozen: true,
        };
        assert_eq!(extract_state(&case, &sol, &offset).values, vec![0.0; 6]);
    }

    #[test]
    fn monitored_ids_are_sorted() {
        let mut case = crate::grid_model::bundled::micro3();
        case.monitored_buses = vec![3, 1];
        case.monitored_branches = vec![2];
        let layout = state_layout(&case);
        assert_eq!(layout.bus_ids, vec![1, 3]);
        assert_eq!(layout.len(), 2 + 2 + 1 + 1);
    }
}
