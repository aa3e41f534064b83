use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpModel};
use crate::numerics::Matrix;

/// Momentum buffers for SGD with L2 weight decay on the weights (biases
/// are not decayed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity_w: Vec<Matrix>,
    velocity_b: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(model: &MlpModel, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity_w: model
                .weights()
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            velocity_b: model.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn velocity_weights(&self) -> &[Matrix] {
        &self.velocity_w
    }
}

/// `v ← μ·v + g + λ·θ`, then `θ ← θ - lr·v`.
pub fn sgd_step(model: &mut MlpModel, grads: &Gradients, opt: &mut OptState, lr: f64) {
    let (mu, wd) = (opt.momentum, opt.weight_decay);
    for l in 0..model.weights().len() {
        let v = opt.velocity_w[l].as_mut_slice();
        let w = model.weight_mut(l).as_mut_slice();
        for ((vi, wi), gi) in v.iter_mut().zip(w.iter_mut()).zip(grads.weights[l].as_slice()) {
            *vi = mu * *vi + gi + wd * *wi;
            *wi -= lr * *vi;
        }
        let v = &mut opt.velocity_b[l];
        let b = model.bias_mut(l);
        for ((vi, bi), gi) in v.iter_mut().zip(b.iter_mut()).zip(&grads.biases[l]) {
            *vi = mu * *vi + gi;
            *bi -= lr * *vi;
        }
    }
}
