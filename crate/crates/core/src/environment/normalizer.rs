use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest per-feature scale; features with less spread are treated as constant.
pub const MIN_SCALE: f64 = 1e-6;

/// Frozen per-feature affine standardizer `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub frozen: bool,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            frozen: true,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// Fits mean and population standard deviation per feature.
pub fn fit_normalizer(samples: &[Vec<f64>]) -> Result<Normalizer> {
    if samples.len() < 2 {
        return Err(Error::Config(format!(
            "normalizer needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: bad.len(),
        });
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var.into_iter().map(|v| (v / n).sqrt().max(MIN_SCALE)).collect();
    Ok(Normalizer {
        mean,
        scale,
        frozen: true,
    })
}
