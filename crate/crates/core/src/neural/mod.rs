//! Dense feed-forward networks with exact backpropagation.
//!
//! Batches are stored column-wise: a batch of `B` inputs of width `d` is a
//! `d x B` matrix. Weights are `out x in`.

mod adam;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState, ScalarAdam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            // keeps NaN visible instead of clamping it to zero
            Activation::ReLU => {
                if z < 0.0 {
                    0.0
                } else {
                    z
                }
            }
            Activation::Linear => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layer_dims: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Serialized form of a network: shape plus row-major flattened parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layer_dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl From<&DenseNetwork> for NetworkRecord {
    fn from(net: &DenseNetwork) -> Self {
        Self {
            layer_dims: net.layer_dims.clone(),
            params: net.flatten(),
        }
    }
}

impl TryFrom<&NetworkRecord> for DenseNetwork {
    type Error = Error;

    fn try_from(record: &NetworkRecord) -> Result<Self> {
        if record.layer_dims.len() < 2 || record.layer_dims.contains(&0) {
            return Err(Error::Semantic(format!("invalid layer dims {:?}", record.layer_dims)));
        }
        DenseNetwork::from_flat(&record.layer_dims, &record.params)
    }
}

/// Per-parameter gradients, shape-congruent with a [`DenseNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    layer_dims: Vec<usize>,
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.activations[0].ncols()
    }
}

impl DenseNetwork {
    /// Random initialisation, uniform in `±1/sqrt(fan_in)` for weights and biases.
    pub fn random<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Self {
        assert!(layer_dims.len() >= 2, "network needs input and output widths");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)));
            biases.push(DVector::from_fn(fan_out, |_, _| rng.random_range(-limit..limit)));
        }
        Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            hidden_activation: Activation::ReLU,
            output_activation: Activation::Linear,
        }
    }

    /// All-zero network of the given shape.
    pub fn zeros(layer_dims: &[usize]) -> Self {
        let weights = layer_dims
            .windows(2)
            .map(|p| DMatrix::zeros(p[1], p[0]))
            .collect();
        let biases = layer_dims.windows(2).map(|p| DVector::zeros(p[1])).collect();
        Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            hidden_activation: Activation::ReLU,
            output_activation: Activation::Linear,
        }
    }

    /// Re-draws the output layer uniformly in `±scale`.
    pub fn with_output_scale<R: Rng + ?Sized>(mut self, scale: f64, rng: &mut R) -> Self {
        let last = self.weights.len() - 1;
        self.weights[last].iter_mut().for_each(|w| *w = rng.random_range(-scale..scale));
        self.biases[last].iter_mut().for_each(|b| *b = rng.random_range(-scale..scale));
        self
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.weights.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        let (out, tape) = self.forward_batch(&x)?;
        Ok((out.as_slice().to_vec(), tape))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(inputs)?;
        let mut a = inputs.clone();
        for l in 0..self.weights.len() {
            let act = self.activation(l);
            let mut z = &self.weights[l] * &a;
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            z.apply(|v| *v = act.apply(*v));
            a = z;
        }
        Ok(a)
    }

    fn check_input(&self, inputs: &DMatrix<f64>) -> Result<()> {
        if inputs.nrows() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: inputs.nrows(),
            });
        }
        Ok(())
    }

    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<(DMatrix<f64>, Tape)> {
        self.check_input(inputs)?;
        let mut activations = vec![inputs.clone()];
        let mut pre_activations = Vec::with_capacity(self.weights.len());
        for l in 0..self.weights.len() {
            let act = self.activation(l);
            let mut z = &self.weights[l] * &activations[l];
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            let a = z.map(|v| act.apply(v));
            pre_activations.push(z);
            activations.push(a);
        }
        let out = activations.last().unwrap().clone();
        Ok((
            out,
            Tape {
                layer_dims: self.layer_dims.clone(),
                activations,
                pre_activations,
            },
        ))
    }

    /// Backpropagates `output_grad` (dL/d output, same shape as the forward
    /// output) through the recorded pass. Returns parameter gradients summed
    /// over the batch and the gradient with respect to the inputs.
    pub fn backward(&self, tape: &Tape, output_grad: &DMatrix<f64>) -> Result<(GradientSet, DMatrix<f64>)> {
        if tape.layer_dims != self.layer_dims {
            return Err(Error::Config("tape was recorded on a different network shape".into()));
        }
        if output_grad.nrows() != self.output_dim() || output_grad.ncols() != tape.batch_size() {
            return Err(Error::Dimension {
                expected: self.output_dim() * tape.batch_size(),
                got: output_grad.len(),
            });
        }
        let n_layers = self.weights.len();
        let mut weights = vec![DMatrix::zeros(0, 0); n_layers];
        let mut biases = vec![DVector::zeros(0); n_layers];
        let mut delta = output_grad.clone();
        for l in (0..n_layers).rev() {
            let act = self.activation(l);
            delta.zip_apply(&tape.pre_activations[l], |d, z| *d *= act.derivative(z));
            weights[l] = &delta * tape.activations[l].transpose();
            biases[l] = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
            delta = self.weights[l].transpose() * &delta;
        }
        Ok((GradientSet { weights, biases }, delta))
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters flattened layer by layer: weights in row-major order, then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..w.nrows() {
                out.extend(w.row(r).iter());
            }
            out.extend(b.iter());
        }
        out
    }

    /// Inverse of [`DenseNetwork::flatten`].
    pub fn from_flat(layer_dims: &[usize], params: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(layer_dims);
        if params.len() != net.parameter_count() {
            return Err(Error::Dimension {
                expected: net.parameter_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] = it.next().unwrap();
                }
            }
            b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        if net.flatten().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite network parameter".into()));
        }
        Ok(net)
    }
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    fn congruent_with(&self, net: &DenseNetwork) -> bool {
        self.weights.len() == net.weights.len()
            && self.weights.iter().zip(&net.weights).all(|(g, w)| g.shape() == w.shape())
            && self.biases.iter().zip(&net.biases).all(|(g, b)| g.len() == b.len())
    }
}

/// Moves `target` towards `source`: `target <- polyak * target + (1 - polyak) * source`.
/// `polyak` is the retention coefficient.
pub fn polyak_update(target: &mut DenseNetwork, source: &DenseNetwork, polyak: f64) {
    assert_eq!(target.layer_dims, source.layer_dims, "polyak update on mismatched networks");
    for (t, s) in target.weights.iter_mut().zip(&source.weights) {
        t.zip_apply(s, |t, s| *t = polyak * *t + (1.0 - polyak) * s);
    }
    for (t, s) in target.biases.iter_mut().zip(&source.biases) {
        t.zip_apply(s, |t, s| *t = polyak * *t + (1.0 - polyak) * s);
    }
}
