use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid_model::GridCase;

/// Disjoint, exhaustive partition of named snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Vec<(String, GridCase)>,
    pub test: Vec<(String, GridCase)>,
}

impl DataSplit {
    pub fn train_cases(&self) -> Vec<GridCase> {
        self.train.iter().map(|(_, c)| c.clone()).collect()
    }

    pub fn test_cases(&self) -> Vec<GridCase> {
        self.test.iter().map(|(_, c)| c.clone()).collect()
    }
}

/// Shuffles under `seed` and cuts at `train_fraction`. Both sides are non-empty.
pub fn split_snapshots(mut snapshots: Vec<(String, GridCase)>, train_fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    if snapshots.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two snapshots to split, got {}",
            snapshots.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    snapshots.shuffle(&mut rng);
    let n = snapshots.len();
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let test = snapshots.split_off(n_train);
    Ok(DataSplit { train: snapshots, test })
}

/// `copies` passes over `cases`, shuffled together.
pub fn replicate_and_shuffle(cases: &[GridCase], copies: usize, seed: u64) -> Vec<GridCase> {
    let mut out: Vec<GridCase> = (0..copies).flat_map(|_| cases.iter().cloned()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    out.shuffle(&mut rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::bundled;
    use std::collections::BTreeSet;

    fn named(n: usize) -> Vec<(String, GridCase)> {
        let base = bundled::micro3();
        (0..n)
            .map(|i| {
                let mut c = base.clone();
                c.buses[2].p_load = 1.0 + i as f64 * 1e-3;
                (format!("s{i:03}"), c)
            })
            .collect()
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let split = split_snapshots(named(50), 0.8, 7).unwrap();
        assert_eq!(split.train.len(), 40);
        assert_eq!(split.test.len(), 10);
        let train: BTreeSet<_> = split.train.iter().map(|(n, _)| n.clone()).collect();
        let test: BTreeSet<_> = split.test.iter().map(|(n, _)| n.clone()).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 50);
    }

    #[test]
    fn split_depends_only_on_seed() {
        let a = split_snapshots(named(20), 0.8, 3).unwrap();
        let b = split_snapshots(named(20), 0.8, 3).unwrap();
        let c = split_snapshots(named(20), 0.8, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        assert!(split_snapshots(named(1), 0.8, 0).is_err());
        assert!(split_snapshots(named(10), 1.0, 0).is_err());
        // tiny sets still leave one snapshot on each side
        let s = split_snapshots(named(2), 0.99, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
    }

    #[test]
    fn replication_multiplies_counts() {
        let cases: Vec<GridCase> = named(4).into_iter().map(|(_, c)| c).collect();
        let out = replicate_and_shuffle(&cases, 3, 1);
        assert_eq!(out.len(), 12);
        for c in &cases {
            assert_eq!(out.iter().filter(|o| *o == c).count(), 3);
        }
    }
}
