use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::grid_model::{derive_admittance_params, GridCase};

/// Dense bus admittance matrix `Y = G + jB`, indexed by bus position in the case.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub entries: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    /// Complex power injections `S = V * conj(Y V)` for the given polar voltages.
    pub fn injections(&self, v_mag: &[f64], v_ang: &[f64]) -> Vec<Complex64> {
        let v = polar_vector(v_mag, v_ang);
        let n = self.n();
        (0..n)
            .map(|i| {
                let current: Complex64 = (0..n).map(|k| self.entries[(i, k)] * v[k]).sum();
                v[i] * current.conj()
            })
            .collect()
    }
}

pub(crate) fn polar_vector(v_mag: &[f64], v_ang: &[f64]) -> Vec<Complex64> {
    v_mag
        .iter()
        .zip(v_ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect()
}

/// Assembles the pi-model admittance matrix including line charging and
/// bus shunts. Out-of-service branches contribute nothing.
pub fn build_admittance(case: &GridCase) -> Result<AdmittanceMatrix> {
    let n = case.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(bus.g_shunt, bus.b_shunt);
    }
    for br in case.branches.iter().filter(|b| b.in_service) {
        let (g, b) = derive_admittance_params(br)?;
        let series = Complex64::new(g, b);
        let charging = Complex64::new(0.0, br.b_charge);
        let i = case.bus_position(br.from_bus).expect("validated case");
        let j = case.bus_position(br.to_bus).expect("validated case");
        y[(i, i)] += series + charging;
        y[(j, j)] += series + charging;
        y[(i, j)] -= series;
        y[(j, i)] -= series;
    }
    Ok(AdmittanceMatrix { entries: y })
}
