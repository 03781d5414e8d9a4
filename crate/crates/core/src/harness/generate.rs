use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::snapshot_paths;
use crate::error::{Error, Result};
use crate::grid_model::{read_case, write_case, GridCase, SETPOINT_MAX, SETPOINT_MIN};
use crate::power_flow::{solve_newton_raphson, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScalingMode {
    /// Independent factor for every bus.
    #[default]
    PerLoad,
    /// One factor for the whole system.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnapshotGenSpec {
    pub base_case: PathBuf,
    pub output_dir: PathBuf,
    pub n_snapshots: usize,
    pub load_scale_low: f64,
    pub load_scale_high: f64,
    pub scaling: ScalingMode,
    /// Half-width of the uniform per-plant setpoint perturbation, p.u.
    pub setpoint_jitter: f64,
    /// Attempts per snapshot before giving up.
    pub max_retries: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for SnapshotGenSpec {
    fn default() -> Self {
        Self {
            base_case: PathBuf::new(),
            output_dir: PathBuf::from("snapshots"),
            n_snapshots: 100,
            load_scale_low: 0.8,
            load_scale_high: 1.2,
            scaling: ScalingMode::PerLoad,
            setpoint_jitter: 0.02,
            max_retries: 20,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl SnapshotGenSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.load_scale_low > 0.0 && self.load_scale_low <= self.load_scale_high) {
            return Err(Error::Config(format!(
                "load scale range [{}, {}] must satisfy 0 < low <= high",
                self.load_scale_low, self.load_scale_high
            )));
        }
        if !(self.setpoint_jitter >= 0.0) {
            return Err(Error::Config("setpoint_jitter must be non-negative".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::Config("max_retries must be positive".into()));
        }
        Ok(())
    }

    /// Resolves relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        self.base_case = base.join(&self.base_case);
        self.output_dir = base.join(&self.output_dir);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub paths: Vec<PathBuf>,
    pub attempts: usize,
    /// Candidates rejected for non-convergence or non-positive losses.
    pub discarded: usize,
}

fn perturb(base: &GridCase, spec: &SnapshotGenSpec, rng: &mut ChaCha8Rng) -> GridCase {
    let mut case = base.clone();
    let (lo, hi) = (spec.load_scale_low, spec.load_scale_high);
    let global = rng.random_range(lo..=hi);
    let old_total: f64 = case.buses.iter().map(|b| b.p_load).sum();
    for bus in &mut case.buses {
        let f = match spec.scaling {
            ScalingMode::PerLoad => rng.random_range(lo..=hi),
            ScalingMode::Global => global,
        };
        bus.p_load *= f;
        bus.q_load *= f;
    }
    let new_total: f64 = case.buses.iter().map(|b| b.p_load).sum();
    let ratio = if old_total != 0.0 { new_total / old_total } else { 1.0 };
    let slack_bus = case.slack_position().map(|i| case.buses[i].id);
    for g in &mut case.generators {
        if Some(g.bus) != slack_bus {
            g.p_gen = (g.p_gen * ratio).clamp(g.p_min, g.p_max);
        }
    }
    if spec.setpoint_jitter > 0.0 {
        let j = spec.setpoint_jitter;
        let offsets: Vec<f64> = case.plants.iter().map(|_| rng.random_range(-j..=j)).collect();
        for (plant, d) in case.plants.clone().iter().zip(offsets) {
            for g in case.generators.iter_mut().filter(|g| plant.generators.contains(&g.id)) {
                g.v_set = (g.v_set + d).clamp(SETPOINT_MIN, SETPOINT_MAX);
            }
        }
    }
    case
}

/// Builds `n_snapshots` solvable perturbations of `base`, in memory.
pub fn generate_snapshot_cases(base: &GridCase, spec: &SnapshotGenSpec) -> Result<(Vec<GridCase>, usize)> {
    spec.validate()?;
    let base_sol = solve_newton_raphson(base, None, &spec.solver)?;
    if !base_sol.converged {
        return Err(Error::Numerical("base case power flow does not converge".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_snapshots);
    let mut discarded = 0;
    for i in 0..spec.n_snapshots {
        let mut accepted = None;
        for _ in 0..spec.max_retries {
            let candidate = perturb(base, spec, &mut rng);
            match solve_newton_raphson(&candidate, None, &spec.solver) {
                Ok(sol) if sol.converged && sol.p_loss_total > 0.0 => {
                    accepted = Some(candidate);
                    break;
                }
                _ => discarded += 1,
            }
        }
        match accepted {
            Some(c) => out.push(c),
            None => {
                return Err(Error::Numerical(format!(
                    "snapshot {i}: no solvable candidate in {} attempts",
                    spec.max_retries
                )))
            }
        }
    }
    Ok((out, discarded))
}

/// Writes `snapshot_NNNNN.json` files into the (empty or new) output directory.
pub fn generate_snapshots(spec: &SnapshotGenSpec) -> Result<GenerationReport> {
    let base = read_case(&spec.base_case)?;
    let dir = &spec.output_dir;
    if dir.exists() && !snapshot_paths(dir)?.is_empty() {
        return Err(Error::Config(format!("output directory {} already holds case files", dir.display())));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (cases, discarded) = generate_snapshot_cases(&base, spec)?;
    let mut paths = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let path = dir.join(format!("snapshot_{i:05}.json"));
        write_case(&path, case)?;
        paths.push(path);
    }
    Ok(GenerationReport {
        attempts: cases.len() + discarded,
        paths,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{bundled, serialize_case};

    #[test]
    fn identity_spec_reproduces_base() {
        let base = bundled::micro3();
        let spec = SnapshotGenSpec {
            n_snapshots: 4,
            load_scale_low: 1.0,
            load_scale_high: 1.0,
            setpoint_jitter: 0.0,
            ..SnapshotGenSpec::default()
        };
        let (cases, discarded) = generate_snapshot_cases(&base, &spec).unwrap();
        assert_eq!(discarded, 0);
        for c in cases {
            assert_eq!(serialize_case(&c), serialize_case(&base));
        }
    }

    #[test]
    fn global_mode_scales_uniformly() {
        let base = bundled::case14();
        let spec = SnapshotGenSpec {
            n_snapshots: 3,
            scaling: ScalingMode::Global,
            setpoint_jitter: 0.0,
            ..SnapshotGenSpec::default()
        };
        let (cases, _) = generate_snapshot_cases(&base, &spec).unwrap();
        for c in &cases {
            let ratios: Vec<f64> = c
                .buses
                .iter()
                .zip(&base.buses)
                .filter(|(_, b)| b.p_load > 0.0)
                .map(|(n, b)| n.p_load / b.p_load)
                .collect();
            assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-12));
            assert!((0.8..=1.2).contains(&ratios[0]));
        }
    }

    #[test]
    fn jitter_is_shared_within_a_plant() {
        let base = bundled::case14();
        let spec = SnapshotGenSpec {
            n_snapshots: 5,
            setpoint_jitter: 0.03,
            ..SnapshotGenSpec::default()
        };
        let (cases, _) = generate_snapshot_cases(&base, &spec).unwrap();
        for c in &cases {
            for plant in &c.plants {
                let v: Vec<f64> = c
                    .generators
                    .iter()
                    .filter(|g| plant.generators.contains(&g.id))
                    .map(|g| g.v_set)
                    .collect();
                assert!(v.iter().all(|x| *x == v[0]));
            }
            for (g, b) in c.generators.iter().zip(&base.generators) {
                assert!((g.v_set - b.v_set).abs() <= 0.03 + 1e-12);
            }
        }
    }

    #[test]
    fn unsolvable_base_is_error() {
        let mut base = bundled::micro3();
        base.buses[2].p_load = 50.0;
        let spec = SnapshotGenSpec::default();
        assert!(generate_snapshot_cases(&base, &spec).is_err());
    }

    #[test]
    fn rejects_bad_ranges() {
        let spec = SnapshotGenSpec {
            load_scale_low: 1.3,
            ..SnapshotGenSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
