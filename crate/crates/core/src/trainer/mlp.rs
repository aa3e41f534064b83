use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::numerics::{gemm, Matrix, RngStream, Trans};

/// A fully connected ReLU network. Hidden layers use the rectifier, the
/// last layer is linear and produces logits.
///
/// Weights are stored `fan_in × fan_out` so a batch (one sample per row)
/// maps forward as `X · W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    #[serde(skip)]
    cache: Option<ForwardCache>,
}

/// Inputs to every layer from the last [`MlpModel::forward`] call.
#[derive(Debug, Clone, PartialEq)]
struct ForwardCache {
    inputs: Vec<Matrix>,
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpModel {
    /// He-normal weights (`N(0, 2/fan_in)`), zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(invalid_param("an MLP needs at least an input and an output size"));
        }
        if layer_sizes.contains(&0) {
            return Err(invalid_param(format!("zero-size layer in {layer_sizes:?}")));
        }
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            weights.push(Matrix::from_fn(fan_in, fan_out, |_, _| scale * rng.normal()));
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            cache: None,
        })
    }

    /// Builds a model from explicit parameters.
    pub fn from_parameters(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(invalid_param("need one bias vector per weight matrix"));
        }
        let mut sizes = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *sizes.last().unwrap() || b.len() != w.cols() {
                return Err(invalid_param(format!("layer {l} shapes do not chain")));
            }
            sizes.push(w.cols());
        }
        Ok(Self {
            layer_sizes: sizes,
            weights,
            biases,
            cache: None,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_size() {
            return Err(invalid_input(format!(
                "batch has {} features, model expects {}",
                batch.cols(),
                self.input_size()
            )));
        }
        Ok(())
    }

    fn layer(&self, l: usize, input: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(input.rows(), self.weights[l].cols());
        for i in 0..z.rows() {
            z.row_mut(i).copy_from_slice(&self.biases[l]);
        }
        gemm(1.0, input, Trans::No, &self.weights[l], Trans::No, 1.0, &mut z);
        if l + 1 < self.weights.len() {
            z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        z
    }

    /// Logits for every row of `batch`, caching layer inputs for
    /// [`MlpModel::backward`].
    pub fn forward(&mut self, batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut a = batch.clone();
        for l in 0..self.weights.len() {
            let next = self.layer(l, &a);
            inputs.push(a);
            a = next;
        }
        self.cache = Some(ForwardCache { inputs });
        Ok(a)
    }

    /// Logits without touching the cache.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        let mut a = self.layer(0, batch);
        for l in 1..self.weights.len() {
            a = self.layer(l, &a);
        }
        Ok(a)
    }

    /// Gradients of the batch-mean loss, given per-sample logit gradients
    /// for the batch of the most recent [`MlpModel::forward`].
    pub fn backward(&self, grad_logits: &Matrix) -> Result<Gradients> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::InvalidState("backward called before forward".into()))?;
        let n = cache.inputs[0].rows();
        if grad_logits.shape() != (n, self.classes()) {
            return Err(invalid_input(format!(
                "logit gradient is {:?}, forward produced {:?}",
                grad_logits.shape(),
                (n, self.classes())
            )));
        }
        let layers = self.weights.len();
        let mut gw: Vec<Matrix> = Vec::with_capacity(layers);
        let mut gb: Vec<Vec<f64>> = Vec::with_capacity(layers);
        let scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let mut delta = grad_logits.clone();
        delta.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        for l in (0..layers).rev() {
            let input = &cache.inputs[l];
            let mut w = Matrix::zeros(self.weights[l].rows(), self.weights[l].cols());
            gemm(1.0, input, Trans::Yes, &delta, Trans::No, 0.0, &mut w);
            let mut b = vec![0.0; delta.cols()];
            for row in delta.iter_rows() {
                for (acc, d) in b.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            gw.push(w);
            gb.push(b);
            if l > 0 {
                let mut prev = Matrix::zeros(n, self.weights[l].rows());
                gemm(1.0, &delta, Trans::No, &self.weights[l], Trans::Yes, 0.0, &mut prev);
                // ReLU mask: the cached input to layer l is the post-activation
                for (d, a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }
}
