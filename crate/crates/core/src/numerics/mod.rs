//! Numeric building blocks shared by every other module.

mod matrix;
mod rng;

pub use matrix::{gemm, Matrix, Trans};
pub use rng::{splitmix64, RngStream};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};

/// Tolerance on the total mass of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, "probability vector")?;
        Ok(Self(probs))
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, class: usize) -> Result<Self> {
        if class >= k {
            return Err(invalid_input(format!("class {class} out of range for K={k}")));
        }
        let mut v = vec![0.0; k];
        v[class] = 1.0;
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(invalid_input(format!("empty {what}")));
    }
    if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid_input(format!("{what} entry {x} outside [0, 1]")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(invalid_input(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Index of the largest entry, smallest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(invalid_input("empty logits"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(invalid_input("non-finite logit"));
    }
    Ok(())
}

/// `ln Σ exp(z_j)`, shifted by the maximum so large logits do not overflow.
pub fn log_sum_exp(logits: &[f64]) -> Result<f64> {
    check_logits(logits)?;
    Ok(lse_unchecked(logits))
}

#[inline]
pub(crate) fn lse_unchecked(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Softmax of finite logits, computed with max subtraction.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    check_logits(logits)?;
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    Ok(ProbVector(out))
}

/// `ln softmax(z)`, exact even where the probability underflows.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    let lse = lse_unchecked(logits);
    Ok(logits.iter().map(|z| z - lse).collect())
}

/// Unchecked softmax into a caller-provided buffer.
#[inline]
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// `max(ln x, floor)`: the logarithm with `log 0` defined as the negative
/// constant `floor`.
///
/// The output is clamped rather than the input, so the result is exactly
/// `floor` at 0, exactly `ln x` for `x ≥ e^floor`, and continuous between.
pub fn clamped_log(x: f64, floor: f64) -> Result<f64> {
    if floor.is_nan() || floor >= 0.0 {
        return Err(invalid_param(format!("log-zero constant must be negative, got {floor}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid_input(format!("clamped_log argument {x} outside [0, 1]")));
    }
    Ok(clog(x, floor))
}

#[inline]
pub(crate) fn clog(x: f64, floor: f64) -> f64 {
    if x <= 0.0 {
        floor
    } else {
        x.ln().max(floor)
    }
}
