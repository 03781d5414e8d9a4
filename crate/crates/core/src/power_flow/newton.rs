use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::admittance::{build_admittance, polar_vector, AdmittanceMatrix};
use super::flows::compute_branch_flows;
use super::{PowerFlowSolution, SolverOptions};
use crate::error::Result;
use crate::grid_model::{BusKind, GridCase};

/// Bus typing and specified injections for one Newton solve.
#[derive(Debug, Clone)]
struct BusModel {
    kinds: Vec<BusKind>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    v_target: Vec<f64>,
    switched: Vec<u32>,
}

impl BusModel {
    fn from_case(case: &GridCase) -> Self {
        let n = case.buses.len();
        let mut p_spec: Vec<f64> = case.buses.iter().map(|b| -b.p_load).collect();
        let mut q_spec: Vec<f64> = case.buses.iter().map(|b| -b.q_load).collect();
        let mut v_target: Vec<f64> = case.buses.iter().map(|b| b.v_mag).collect();
        let mut has_setpoint = vec![false; n];
        for g in &case.generators {
            let k = case.bus_position(g.bus).expect("validated case");
            p_spec[k] += g.p_gen;
            q_spec[k] += g.q_gen;
            // the first unit on a bus defines its regulated voltage
            if !has_setpoint[k] {
                v_target[k] = g.v_set;
                has_setpoint[k] = true;
            }
        }
        Self {
            kinds: case.buses.iter().map(|b| b.kind).collect(),
            p_spec,
            q_spec,
            v_target,
            switched: Vec::new(),
        }
    }

    /// Rebuilds the model that produced `solution`, including earlier switches.
    fn from_solution(case: &GridCase, solution: &PowerFlowSolution) -> Self {
        let mut model = Self::from_case(case);
        for (k, bus) in case.buses.iter().enumerate() {
            if bus.kind == BusKind::PV && solution.bus_kinds[k] == BusKind::PQ {
                let pinned: f64 = case
                    .generators
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g.bus == bus.id)
                    .map(|(gi, _)| solution.q_gen[gi])
                    .sum();
                model.kinds[k] = BusKind::PQ;
                model.q_spec[k] = pinned - bus.q_load;
            }
        }
        model.switched = solution.q_limit_switches.clone();
        model
    }
}

struct NewtonOutcome {
    converged: bool,
    iterations: usize,
    v_mag: Vec<f64>,
    v_ang: Vec<f64>,
    mismatch: f64,
}

fn initial_point(
    case: &GridCase,
    model: &BusModel,
    start: Option<&PowerFlowSolution>,
    opts: &SolverOptions,
) -> (Vec<f64>, Vec<f64>) {
    let n = case.buses.len();
    let (mut v_mag, v_ang) = match start {
        Some(s) if !opts.flat_start && s.v_mag.len() == n && s.v_mag.iter().all(|v| v.is_finite()) => {
            (s.v_mag.clone(), s.v_ang.clone())
        }
        _ => {
            let slack_ang = case
                .slack_position()
                .map(|k| case.buses[k].v_ang)
                .unwrap_or(0.0);
            (vec![1.0; n], vec![slack_ang; n])
        }
    };
    for k in 0..n {
        if model.kinds[k] != BusKind::PQ {
            v_mag[k] = model.v_target[k];
        }
    }
    (v_mag, v_ang)
}

fn newton(
    y: &AdmittanceMatrix,
    model: &BusModel,
    mut v_mag: Vec<f64>,
    mut v_ang: Vec<f64>,
    opts: &SolverOptions,
) -> NewtonOutcome {
    let n = y.n();
    let pvpq: Vec<usize> = (0..n).filter(|&k| model.kinds[k] != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| model.kinds[k] == BusKind::PQ).collect();
    let (npvpq, npq) = (pvpq.len(), pq.len());
    let dim = npvpq + npq;

    let mut mismatch = f64::INFINITY;
    for iter in 1..=opts.max_iterations.max(1) {
        let v = polar_vector(&v_mag, &v_ang);
        let current: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|k| y.entries[(i, k)] * v[k]).sum())
            .collect();
        let s: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj()).collect();

        let mut f = DVector::zeros(dim);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s[i].re - model.p_spec[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[npvpq + r] = s[i].im - model.q_spec[i];
        }
        mismatch = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !mismatch.is_finite() {
            break;
        }
        if mismatch <= opts.tolerance {
            return NewtonOutcome {
                converged: true,
                iterations: iter,
                v_mag,
                v_ang,
                mismatch,
            };
        }
        if iter == opts.max_iterations {
            break;
        }

        // dS/dVa and dS/dVm, entry by entry
        let ds_dva = |i: usize, k: usize| -> Complex64 {
            let diag = if i == k { current[i] } else { Complex64::new(0.0, 0.0) };
            Complex64::i() * v[i] * (diag - y.entries[(i, k)] * v[k]).conj()
        };
        let ds_dvm = |i: usize, k: usize| -> Complex64 {
            let unit_k = v[k] / v_mag[k];
            let mut d = v[i] * (y.entries[(i, k)] * unit_k).conj();
            if i == k {
                d += current[i].conj() * unit_k;
            }
            d
        };
        let mut jac = DMatrix::zeros(dim, dim);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva(i, k).re;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, npvpq + c)] = ds_dvm(i, k).re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(npvpq + r, c)] = ds_dva(i, k).im;
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(npvpq + r, npvpq + c)] = ds_dvm(i, k).im;
            }
        }

        let Some(dx) = jac.lu().solve(&f) else {
            log::debug!("singular Jacobian at iteration {iter}");
            break;
        };
        for (r, &i) in pvpq.iter().enumerate() {
            v_ang[i] -= dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            v_mag[i] -= dx[npvpq + r];
        }
    }

    NewtonOutcome {
        converged: false,
        iterations: opts.max_iterations,
        v_mag,
        v_ang,
        mismatch,
    }
}

/// Splits each bus's total generation among its units.
///
/// Active power stays at schedule except on the slack bus, where the first
/// unit absorbs the residual. Reactive power is shared in proportion to each
/// unit's reactive range.
fn dispatch(case: &GridCase, model: &BusModel, s: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let mut p_gen: Vec<f64> = case.generators.iter().map(|g| g.p_gen).collect();
    let mut q_gen = vec![0.0; case.generators.len()];
    for (k, bus) in case.buses.iter().enumerate() {
        let units: Vec<usize> = (0..case.generators.len())
            .filter(|&gi| case.generators[gi].bus == bus.id)
            .collect();
        if units.is_empty() {
            continue;
        }
        if model.kinds[k] == BusKind::Slack {
            let others: f64 = units[1..].iter().map(|&gi| case.generators[gi].p_gen).sum();
            p_gen[units[0]] = s[k].re + bus.p_load - others;
        }
        let q_total = s[k].im + bus.q_load;
        let q_lo: f64 = units.iter().map(|&gi| case.generators[gi].q_min).sum();
        let q_hi: f64 = units.iter().map(|&gi| case.generators[gi].q_max).sum();
        let share = (q_total - q_lo) / (q_hi - q_lo);
        for &gi in &units {
            let g = &case.generators[gi];
            q_gen[gi] = g.q_min + share * (g.q_max - g.q_min);
        }
    }
    (p_gen, q_gen)
}

fn solve_model(
    case: &GridCase,
    y: &AdmittanceMatrix,
    model: &BusModel,
    start: Option<&PowerFlowSolution>,
    opts: &SolverOptions,
) -> PowerFlowSolution {
    let (v_mag, v_ang) = initial_point(case, model, start, opts);
    let out = newton(y, model, v_mag, v_ang, opts);
    let s = y.injections(&out.v_mag, &out.v_ang);
    let flows = compute_branch_flows(case, &out.v_mag, &out.v_ang);
    let (p_gen, q_gen) = dispatch(case, model, &s);
    PowerFlowSolution {
        converged: out.converged,
        iterations: out.iterations,
        p_loss_total: flows.iter().map(|f| f.p_loss).sum(),
        flows,
        v_mag: out.v_mag,
        v_ang: out.v_ang,
        mismatch_inf_norm: out.mismatch,
        q_limit_switches: model.switched.clone(),
        bus_kinds: model.kinds.clone(),
        p_gen,
        q_gen,
    }
}

fn enforce_loop(
    case: &GridCase,
    y: &AdmittanceMatrix,
    model: &mut BusModel,
    mut solution: PowerFlowSolution,
    opts: &SolverOptions,
) -> PowerFlowSolution {
    let mut rounds = 0;
    while solution.converged {
        let mut switches = Vec::new();
        for (k, bus) in case.buses.iter().enumerate() {
            if model.kinds[k] != BusKind::PV {
                continue;
            }
            let units: Vec<usize> = (0..case.generators.len())
                .filter(|&gi| case.generators[gi].bus == bus.id)
                .collect();
            let q_total: f64 = units.iter().map(|&gi| solution.q_gen[gi]).sum();
            let q_lo: f64 = units.iter().map(|&gi| case.generators[gi].q_min).sum();
            let q_hi: f64 = units.iter().map(|&gi| case.generators[gi].q_max).sum();
            if q_total > q_hi + opts.tolerance {
                switches.push((k, q_hi, units));
            } else if q_total < q_lo - opts.tolerance {
                switches.push((k, q_lo, units));
            }
        }
        if switches.is_empty() {
            break;
        }
        if rounds == opts.q_limit_budget {
            log::debug!("reactive limit switching budget of {rounds} exhausted");
            solution.converged = false;
            break;
        }
        for (k, limit, units) in switches {
            model.kinds[k] = BusKind::PQ;
            model.q_spec[k] = limit - case.buses[k].q_load;
            model
                .switched
                .extend(units.iter().map(|&gi| case.generators[gi].id));
        }
        solution = solve_model(case, y, model, Some(&solution), opts);
        rounds += 1;
    }
    solution
}

/// Solves the AC power flow by polar Newton-Raphson, then enforces generator
/// reactive limits by PV to PQ switching between full solves.
///
/// Divergence is not an error: it is reported through `converged = false`.
pub fn solve_newton_raphson(
    case: &GridCase,
    start: Option<&PowerFlowSolution>,
    opts: &SolverOptions,
) -> Result<PowerFlowSolution> {
    let y = build_admittance(case)?;
    let mut model = BusModel::from_case(case);
    let solution = solve_model(case, &y, &model, start, opts);
    if !opts.enforce_q_limits {
        return Ok(solution);
    }
    Ok(enforce_loop(case, &y, &mut model, solution, opts))
}

/// Applies reactive limit switching to an existing solution and re-solves.
/// Returns the resulting bus typing alongside the new solution.
pub fn enforce_q_limits(
    case: &GridCase,
    solution: &PowerFlowSolution,
    opts: &SolverOptions,
) -> Result<(Vec<BusKind>, PowerFlowSolution)> {
    let y = build_admittance(case)?;
    let mut model = BusModel::from_solution(case, solution);
    let resolved = enforce_loop(case, &y, &mut model, solution.clone(), opts);
    Ok((resolved.bus_kinds.clone(), resolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::bundled;
    use crate::grid_model::test_support::*;

    #[test]
    fn flat_no_load_network() {
        let mut case = two_bus(0.01, 0.1, 0.0, 0.0);
        case.buses.push(bus(3, BusKind::PV, 0.0, 0.0));
        case.branches.push(branch(2, 2, 3, 0.02, 0.2));
        case.generators.push(generator(2, 3, 1, 1.0));
        case.plants[0].generators.push(2);
        case.validate().unwrap();
        let sol = solve_newton_raphson(&case, None, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.v_mag.iter().all(|&v| v == 1.0));
        assert!(sol.v_ang.iter().all(|&a| a == 0.0));
        assert_eq!(sol.p_loss_total, 0.0);
        assert!(sol.flows.iter().all(|f| f.s_from == 0.0 && f.s_to == 0.0));
    }

    #[test]
    fn ample_headroom_means_no_switch() {
        let case = bundled::micro3();
        let opts = SolverOptions::default();
        let plain = solve_newton_raphson(&case, None, &SolverOptions { enforce_q_limits: false, ..opts })
            .unwrap();
        let enforced = solve_newton_raphson(&case, None, &opts).unwrap();
        assert!(enforced.q_limit_switches.is_empty());
        assert_eq!(plain, enforced);
        let (kinds, again) = enforce_q_limits(&case, &enforced, &opts).unwrap();
        assert_eq!(kinds, case.buses.iter().map(|b| b.kind).collect::<Vec<_>>());
        assert_eq!(again, enforced);
    }

    #[test]
    fn all_pq_is_identity() {
        let case = two_bus(0.01, 0.1, 0.8, 0.3);
        let opts = SolverOptions::default();
        let sol = solve_newton_raphson(&case, None, &opts).unwrap();
        let (_, again) = enforce_q_limits(&case, &sol, &opts).unwrap();
        assert_eq!(again, sol);
    }

    #[test]
    fn reactive_limit_switches_pv_to_pq() {
        let mut case = bundled::micro3();
        case.generators[1].q_min = -0.5;
        case.generators[1].q_max = 0.0;
        case.buses[2].q_load = 1.0; // inductive load pulls reactive support from bus 2
        let opts = SolverOptions::default();
        let sol = solve_newton_raphson(&case, None, &opts).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.q_limit_switches, vec![2]);
        assert_eq!(sol.bus_kinds[1], BusKind::PQ);
        assert!(sol.q_gen[1].abs() < 1e-7);
        assert!(sol.v_mag[1] < case.generators[1].v_set);
    }

    #[test]
    fn switching_budget_exhaustion_flags_divergence() {
        let mut case = bundled::micro3();
        case.generators[1].q_max = 0.0;
        case.buses[2].q_load = 1.0;
        let opts = SolverOptions {
            q_limit_budget: 0,
            ..SolverOptions::default()
        };
        let sol = solve_newton_raphson(&case, None, &opts).unwrap();
        assert!(!sol.converged);
    }

    #[test]
    fn overloaded_network_diverges() {
        let case = two_bus(0.0, 0.5, 5.0, 2.0);
        let sol = solve_newton_raphson(&case, None, &SolverOptions::default()).unwrap();
        assert!(!sol.converged);
    }
}
