//! Test-only oracles. Nothing here calls into the solver under test.
#![allow(dead_code)]

pub mod gradcheck;

use gridrl_core::{BusKind, GridCase};
use num_complex::Complex64;

/// Nodal admittance assembled directly from `r`, `x`, charging and shunts.
pub fn oracle_ybus(case: &GridCase) -> Vec<Vec<Complex64>> {
    let n = case.buses.len();
    let idx = |id: u32| case.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (i, b) in case.buses.iter().enumerate() {
        y[i][i] += Complex64::new(b.g_shunt, b.b_shunt);
    }
    for br in case.branches.iter().filter(|b| b.in_service) {
        let series = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let (i, j) = (idx(br.from_bus), idx(br.to_bus));
        let half = Complex64::new(0.0, br.b_charge);
        y[i][i] += series + half;
        y[j][j] += series + half;
        y[i][j] -= series;
        y[j][i] -= series;
    }
    y
}

pub struct OracleSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub sweeps: usize,
}

/// Gauss-Seidel power flow iterated until the largest voltage update falls
/// below `tol`. `pinned_q` lists buses forced to PQ with a fixed total
/// generator output `(bus position, q_gen)`.
pub fn gauss_seidel(case: &GridCase, pinned_q: &[(usize, f64)], tol: f64) -> OracleSolution {
    let n = case.buses.len();
    let y = oracle_ybus(case);
    let mut kinds: Vec<BusKind> = case.buses.iter().map(|b| b.kind).collect();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut vset = vec![1.0; n];
    let mut seen = vec![false; n];
    for (i, b) in case.buses.iter().enumerate() {
        p[i] -= b.p_load;
        q[i] -= b.q_load;
    }
    for g in &case.generators {
        let i = case.buses.iter().position(|b| b.id == g.bus).unwrap();
        p[i] += g.p_gen;
        q[i] += g.q_gen;
        if !seen[i] {
            vset[i] = g.v_set;
            seen[i] = true;
        }
    }
    for &(i, q_gen) in pinned_q {
        kinds[i] = BusKind::PQ;
        q[i] = q_gen - case.buses[i].q_load;
    }
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| {
            let mag = if kinds[i] == BusKind::PQ { 1.0 } else { vset[i] };
            let ang = if kinds[i] == BusKind::Slack { case.buses[i].v_ang } else { 0.0 };
            Complex64::from_polar(mag, ang)
        })
        .collect();

    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut largest = 0.0_f64;
        for i in 0..n {
            if kinds[i] == BusKind::Slack {
                continue;
            }
            let others: Complex64 = (0..n).filter(|&k| k != i).map(|k| y[i][k] * v[k]).sum();
            let q_i = if kinds[i] == BusKind::PV {
                let total = others + y[i][i] * v[i];
                (v[i] * total.conj()).im
            } else {
                q[i]
            };
            let s = Complex64::new(p[i], q_i);
            let mut next = (s.conj() / v[i].conj() - others) / y[i][i];
            if kinds[i] == BusKind::PV {
                next = Complex64::from_polar(vset[i], next.arg());
            }
            largest = largest.max((next - v[i]).norm());
            v[i] = next;
        }
        if largest < tol || sweeps >= 2_000_000 {
            break;
        }
    }
    OracleSolution {
        v_mag: v.iter().map(|z| z.norm()).collect(),
        v_ang: v.iter().map(|z| z.arg()).collect(),
        sweeps,
    }
}

/// Pinned reactive outputs implied by a solution's final bus typing.
pub fn pinned_from(case: &GridCase, kinds: &[BusKind], q_gen: &[f64]) -> Vec<(usize, f64)> {
    case.buses
        .iter()
        .enumerate()
        .filter(|(i, b)| b.kind == BusKind::PV && kinds[*i] == BusKind::PQ)
        .map(|(i, b)| {
            let total = case
                .generators
                .iter()
                .zip(q_gen)
                .filter(|(g, _)| g.bus == b.id)
                .map(|(_, q)| q)
                .sum();
            (i, total)
        })
        .collect()
}

/// Max elementwise absolute difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
