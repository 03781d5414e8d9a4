//! Static bus/branch network description.
//!
//! All quantities stored in a validated [`GridCase`] are per-unit on
//! `base_mva`. Branches carry series `r`, `x` and the per-end charging
//! susceptance; the series conductance and susceptance used by the flow
//! equations are derived on demand by [`derive_admittance_params`].

mod case_file;

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use case_file::{parse_case, read_case, serialize_case, write_case};

/// Lower bound applied to every generator voltage setpoint, p.u.
pub const SETPOINT_MIN: f64 = 0.9;
/// Upper bound applied to every generator voltage setpoint, p.u.
pub const SETPOINT_MAX: f64 = 1.1;
/// Default lower bus voltage bound, p.u.
pub const DEFAULT_V_MIN: f64 = 0.97;
/// Default upper bus voltage bound, p.u.
pub const DEFAULT_V_MAX: f64 = 1.07;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub v_mag: f64,
    pub v_ang: f64,
    pub p_load: f64,
    pub q_load: f64,
    #[serde(default)]
    pub g_shunt: f64,
    #[serde(default)]
    pub b_shunt: f64,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Charging susceptance at each end of the pi-model.
    #[serde(default)]
    pub b_charge: f64,
    pub s_max: f64,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    pub p_gen: f64,
    #[serde(default)]
    pub q_gen: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_set: f64,
    pub plant: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub id: u32,
    pub name: String,
    pub generators: Vec<u32>,
}

/// Unit system of the power quantities in a case file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Already per-unit on `base_mva`.
    #[default]
    Pu,
    /// MW / MVAr / MVA; converted to per-unit on load.
    Mw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    #[serde(default)]
    pub units: Units,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub plants: Vec<Plant>,
    pub monitored_buses: Vec<u32>,
    pub monitored_branches: Vec<u32>,
}

fn default_v_min() -> f64 {
    DEFAULT_V_MIN
}

fn default_v_max() -> f64 {
    DEFAULT_V_MAX
}

fn default_true() -> bool {
    true
}

/// Series conductance and susceptance `(g, b)` of a branch from `r + jx`.
pub fn derive_admittance_params(branch: &Branch) -> Result<(f64, f64)> {
    let denom = branch.r * branch.r + branch.x * branch.x;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ZeroImpedance { branch: branch.id });
    }
    Ok((branch.r / denom, -branch.x / denom))
}

impl GridCase {
    /// Converts power quantities to per-unit. A case already in per-unit is
    /// returned unchanged.
    pub fn to_per_unit(&self) -> GridCase {
        let mut out = self.clone();
        if self.units == Units::Pu {
            return out;
        }
        let base = self.base_mva;
        for bus in &mut out.buses {
            bus.p_load /= base;
            bus.q_load /= base;
            bus.g_shunt /= base;
            bus.b_shunt /= base;
        }
        for br in &mut out.branches {
            br.s_max /= base;
        }
        for g in &mut out.generators {
            g.p_gen /= base;
            g.q_gen /= base;
            g.p_min /= base;
            g.p_max /= base;
            g.q_min /= base;
            g.q_max /= base;
        }
        out.units = Units::Pu;
        out
    }

    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn branch_position(&self, id: u32) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn generator_position(&self, id: u32) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    pub fn slack_position(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Current setpoint per plant, in plant order (mean over member units).
    pub fn plant_setpoints(&self) -> Vec<f64> {
        self.plants
            .iter()
            .map(|plant| {
                let sum: f64 = plant
                    .generators
                    .iter()
                    .filter_map(|&gid| self.generator_position(gid))
                    .map(|k| self.generators[k].v_set)
                    .sum();
                sum / plant.generators.len() as f64
            })
            .collect()
    }

    /// Copy of the case with one voltage setpoint applied to every generator
    /// of each plant.
    pub fn with_plant_setpoints(&self, setpoints: &[f64]) -> Result<GridCase> {
        if setpoints.len() != self.plants.len() {
            return Err(Error::Dimension {
                expected: self.plants.len(),
                got: setpoints.len(),
            });
        }
        let mut out = self.clone();
        for (plant, &v) in self.plants.iter().zip(setpoints) {
            for &gid in &plant.generators {
                if let Some(k) = out.generator_position(gid) {
                    out.generators[k].v_set = v;
                }
            }
        }
        Ok(out)
    }

    /// Checks every structural and numerical invariant of the data model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Semantic(msg));

        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return bad(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return bad("case has no buses".into());
        }

        let mut bus_ids = HashSet::new();
        for bus in &self.buses {
            if !bus_ids.insert(bus.id) {
                return bad(format!("duplicate bus id {}", bus.id));
            }
            let values = [
                bus.v_mag, bus.v_ang, bus.p_load, bus.q_load, bus.g_shunt, bus.b_shunt, bus.v_min,
                bus.v_max,
            ];
            if values.iter().any(|v| !v.is_finite()) {
                return bad(format!("bus {} has a non-finite field", bus.id));
            }
            if bus.v_min >= bus.v_max {
                return bad(format!(
                    "bus {}: v_min {} must be below v_max {}",
                    bus.id, bus.v_min, bus.v_max
                ));
            }
        }
        match self.buses.iter().filter(|b| b.kind == BusKind::Slack).count() {
            0 => return bad("missing slack bus".into()),
            1 => {}
            n => return bad(format!("multiple slack buses ({n})")),
        }

        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return bad(format!("duplicate branch id {}", br.id));
            }
            for end in [br.from_bus, br.to_bus] {
                if !bus_ids.contains(&end) {
                    return bad(format!("branch {} references unknown bus {end}", br.id));
                }
            }
            if br.from_bus == br.to_bus {
                return bad(format!("branch {} connects bus {} to itself", br.id, br.from_bus));
            }
            if [br.r, br.x, br.b_charge, br.s_max].iter().any(|v| !v.is_finite()) {
                return bad(format!("branch {} has a non-finite field", br.id));
            }
            if br.r < 0.0 {
                return bad(format!("branch {} has negative resistance", br.id));
            }
            if br.x == 0.0 {
                return Err(Error::ZeroImpedance { branch: br.id });
            }
            if br.s_max <= 0.0 {
                return bad(format!("branch {} rating must be positive", br.id));
            }
            let (g, b) = derive_admittance_params(br)?;
            if !(g.is_finite() && b.is_finite()) {
                return Err(Error::ZeroImpedance { branch: br.id });
            }
        }

        let plant_ids: HashSet<u32> = self.plants.iter().map(|p| p.id).collect();
        if plant_ids.len() != self.plants.len() {
            return bad("duplicate plant id".into());
        }
        let mut gen_ids = HashSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id) {
                return bad(format!("duplicate generator id {}", g.id));
            }
            if !bus_ids.contains(&g.bus) {
                return bad(format!("generator {} references unknown bus {}", g.id, g.bus));
            }
            if !plant_ids.contains(&g.plant) {
                return bad(format!("generator {} references unknown plant {}", g.id, g.plant));
            }
            let values = [g.p_gen, g.q_gen, g.p_min, g.p_max, g.q_min, g.q_max, g.v_set];
            if values.iter().any(|v| !v.is_finite()) {
                return bad(format!("generator {} has a non-finite field", g.id));
            }
            if !(g.p_min <= g.p_gen && g.p_gen <= g.p_max) {
                return bad(format!(
                    "generator {}: p_gen {} outside [{}, {}]",
                    g.id, g.p_gen, g.p_min, g.p_max
                ));
            }
            if g.q_min >= g.q_max {
                return bad(format!("generator {}: q_min must be below q_max", g.id));
            }
            if !(SETPOINT_MIN..=SETPOINT_MAX).contains(&g.v_set) {
                return bad(format!(
                    "generator {}: v_set {} outside [{SETPOINT_MIN}, {SETPOINT_MAX}]",
                    g.id, g.v_set
                ));
            }
        }

        let mut owner: HashMap<u32, u32> = HashMap::new();
        for plant in &self.plants {
            if plant.generators.is_empty() {
                return bad(format!("plant {} has no generators", plant.id));
            }
            for &gid in &plant.generators {
                let Some(k) = self.generator_position(gid) else {
                    return bad(format!("plant {} references unknown generator {gid}", plant.id));
                };
                if let Some(prev) = owner.insert(gid, plant.id) {
                    return bad(format!("generator {gid} listed in plants {prev} and {}", plant.id));
                }
                if self.generators[k].plant != plant.id {
                    return bad(format!(
                        "generator {gid} declares plant {} but is listed in plant {}",
                        self.generators[k].plant, plant.id
                    ));
                }
            }
        }
        if let Some(g) = self.generators.iter().find(|g| !owner.contains_key(&g.id)) {
            return bad(format!("generator {} belongs to no plant", g.id));
        }

        for bus in &self.buses {
            if bus.kind != BusKind::PQ && !self.generators.iter().any(|g| g.bus == bus.id) {
                return bad(format!("{:?} bus {} has no generator", bus.kind, bus.id));
            }
        }

        for id in &self.monitored_buses {
            if !bus_ids.contains(id) {
                return bad(format!("monitored bus {id} not in case"));
            }
        }
        for id in &self.monitored_branches {
            if !branch_ids.contains(id) {
                return bad(format!("monitored branch {id} not in case"));
            }
        }

        if !self.is_connected() {
            return bad("network is not connected over in-service branches".into());
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut adjacency = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service) {
            if let (Some(i), Some(j)) = (self.bus_position(br.from_bus), self.bus_position(br.to_bus)) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Cases shipped with the crate.
pub mod bundled {
    use super::{parse_case, GridCase};

    pub const MICRO3: &str = include_str!("../../cases/micro3.json");
    pub const CASE14: &str = include_str!("../../cases/case14.json");

    /// Three-bus network with two single-unit plants.
    pub fn micro3() -> GridCase {
        parse_case(MICRO3).expect("bundled micro3 case is valid")
    }

    /// Fourteen-bus network with five units grouped in three plants.
    pub fn case14() -> GridCase {
        parse_case(CASE14).expect("bundled case14 is valid")
    }
}

/// Small hand-built cases for tests and benchmarks.
#[doc(hidden)]
pub mod test_support {
    use super::*;

    pub fn bus(id: u32, kind: BusKind, p_load: f64, q_load: f64) -> Bus {
        Bus {
            id,
            kind,
            v_mag: 1.0,
            v_ang: 0.0,
            p_load,
            q_load,
            g_shunt: 0.0,
            b_shunt: 0.0,
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
        }
    }

    pub fn branch(id: u32, from_bus: u32, to_bus: u32, r: f64, x: f64) -> Branch {
        Branch {
            id,
            from_bus,
            to_bus,
            r,
            x,
            b_charge: 0.0,
            s_max: 10.0,
            in_service: true,
        }
    }

    pub fn generator(id: u32, bus: u32, plant: u32, v_set: f64) -> Generator {
        Generator {
            id,
            bus,
            p_gen: 0.0,
            q_gen: 0.0,
            p_min: 0.0,
            p_max: 10.0,
            q_min: -10.0,
            q_max: 10.0,
            v_set,
            plant,
        }
    }

    /// Slack plus one PQ load bus over a single branch.
    pub fn two_bus(r: f64, x: f64, p_load: f64, q_load: f64) -> GridCase {
        GridCase {
            base_mva: 100.0,
            units: Units::Pu,
            buses: vec![bus(1, BusKind::Slack, 0.0, 0.0), bus(2, BusKind::PQ, p_load, q_load)],
            branches: vec![branch(1, 1, 2, r, x)],
            generators: vec![generator(1, 1, 1, 1.0)],
            plants: vec![Plant {
                id: 1,
                name: "slack".into(),
                generators: vec![1],
            }],
            monitored_buses: vec![1, 2],
            monitored_branches: vec![1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn lossless_line_admittance() {
        let (g, b) = derive_admittance_params(&branch(1, 1, 2, 0.0, 0.1)).unwrap();
        assert_eq!(g, 0.0);
        assert!((b + 10.0).abs() < 1e-12);
    }

    #[test]
    fn resistive_line_admittance() {
        let (g, b) = derive_admittance_params(&branch(1, 1, 2, 0.01, 0.1)).unwrap();
        assert!((g - 0.01 / 0.0101).abs() < 1e-12);
        assert!((b + 0.1 / 0.0101).abs() < 1e-12);
    }

    #[test]
    fn zero_impedance_rejected() {
        let err = derive_admittance_params(&branch(7, 1, 2, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::ZeroImpedance { branch: 7 }));
    }

    #[test]
    fn validate_accepts_two_bus() {
        two_bus(0.0, 0.1, 1.0, 0.0).validate().unwrap();
    }

    #[test]
    fn validate_rejects_structural_errors() {
        let mut c = two_bus(0.0, 0.1, 1.0, 0.0);
        c.buses[1].kind = BusKind::Slack;
        c.generators.push(generator(2, 2, 1, 1.0));
        c.plants[0].generators.push(2);
        assert!(c.validate().unwrap_err().to_string().contains("multiple slack"));

        let mut c = two_bus(0.0, 0.1, 1.0, 0.0);
        c.buses[0].kind = BusKind::PQ;
        assert!(c.validate().unwrap_err().to_string().contains("missing slack"));

        let mut c = two_bus(0.0, 0.1, 1.0, 0.0);
        c.branches[0].to_bus = 9;
        assert!(c.validate().unwrap_err().to_string().contains("unknown bus 9"));

        let mut c = two_bus(0.0, 0.1, 1.0, 0.0);
        c.branches[0].in_service = false;
        assert!(c.validate().unwrap_err().to_string().contains("not connected"));

        let mut c = two_bus(0.0, 0.1, 1.0, 0.0);
        c.plants[0].generators.clear();
        assert!(c.validate().is_err());

        let mut c = two_bus(0.0, 0.1, 1.0, 0.0);
        c.monitored_branches.push(4);
        assert!(c.validate().is_err());

        let mut c = two_bus(0.0, 0.1, 1.0, 0.0);
        c.buses[1].v_min = 1.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn per_unit_conversion_is_idempotent() {
        let mut c = two_bus(0.0, 0.1, 150.0, 20.0);
        c.units = Units::Mw;
        c.generators[0].p_max = 500.0;
        c.generators[0].q_min = -300.0;
        c.generators[0].q_max = 300.0;
        c.branches[0].s_max = 200.0;
        let pu = c.to_per_unit();
        assert_eq!(pu.buses[1].p_load, 1.5);
        assert_eq!(pu.branches[0].s_max, 2.0);
        assert_eq!(pu.to_per_unit(), pu);
    }

    #[test]
    fn bundled_cases_validate() {
        let m = bundled::micro3();
        assert_eq!(m.buses.len(), 3);
        let c = bundled::case14();
        assert_eq!(c.buses.len(), 14);
        assert!(c.plants.len() >= 2);
    }

    #[test]
    fn plant_setpoints_apply_to_all_members() {
        let c = bundled::case14();
        let target = vec![1.03; c.plants.len()];
        let updated = c.with_plant_setpoints(&target).unwrap();
        assert!(updated.generators.iter().all(|g| g.v_set == 1.03));
        assert_eq!(updated.plant_setpoints(), target);
        assert!(c.with_plant_setpoints(&[1.0]).is_err());
    }
}
