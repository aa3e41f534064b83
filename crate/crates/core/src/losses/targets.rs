use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};
use crate::numerics::{argmax, check_simplex, ProbVector};

/// A label distribution `q(k|x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetDist(Vec<f64>);

impl TargetDist {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights, "target distribution")?;
        Ok(Self(weights))
    }

    pub fn one_hot(classes: usize, label: usize) -> Result<Self> {
        if label >= classes {
            return Err(invalid_input(format!("label {label} out of range for K={classes}")));
        }
        let mut w = vec![0.0; classes];
        w[label] = 1.0;
        Ok(Self(w))
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

    /// The class carrying all the mass, if this is a one-hot target.
    pub fn one_hot_class(&self) -> Option<usize> {
        let k = argmax(&self.0);
        (self.0[k] == 1.0).then_some(k)
    }

    /// `(1 - eps)·q + eps/K`.
    pub fn smoothed(&self, eps: f64) -> Result<Self> {
        check_unit("smoothing", eps)?;
        let k = self.0.len() as f64;
        Ok(Self(self.0.iter().map(|q| (1.0 - eps) * q + eps / k).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMode {
    #[default]
    None,
    Soft,
    Hard,
}

pub(crate) fn check_unit(what: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid_param(format!("{what} {v} outside [0, 1]")));
    }
    Ok(())
}

/// Label smoothing: `1 - eps + eps/K` on the label and `eps/K` elsewhere.
pub fn smoothed_target(label: usize, eps: f64, classes: usize) -> Result<TargetDist> {
    TargetDist::one_hot(classes, label)?.smoothed(eps)
}

/// Bootstrap target: a convex mix of the given label and the model's own
/// prediction. Soft mode mixes in the prediction; hard mode mixes in the
/// one-hot of its argmax (smallest index on ties). `None` returns the raw
/// one-hot label.
pub fn bootstrap_target(
    label: usize,
    prediction: &ProbVector,
    weight: f64,
    mode: BootstrapMode,
) -> Result<TargetDist> {
    check_unit("bootstrap weight", weight)?;
    bootstrap_from_slice(label, prediction.as_slice(), weight, mode)
}

pub(crate) fn bootstrap_from_slice(
    label: usize,
    prediction: &[f64],
    weight: f64,
    mode: BootstrapMode,
) -> Result<TargetDist> {
    let k = prediction.len();
    let mut t = TargetDist::one_hot(k, label)?;
    match mode {
        BootstrapMode::None => {}
        BootstrapMode::Soft => {
            for (q, p) in t.0.iter_mut().zip(prediction) {
                *q = weight * *q + (1.0 - weight) * p;
            }
        }
        BootstrapMode::Hard => {
            for q in t.0.iter_mut() {
                *q *= weight;
            }
            t.0[argmax(prediction)] += 1.0 - weight;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_examples() {
        assert_eq!(smoothed_target(2, 0.0, 4).unwrap(), TargetDist::one_hot(4, 2).unwrap());
        let u = smoothed_target(2, 1.0, 4).unwrap();
        assert!(u.as_slice().iter().all(|&q| q == 0.25));
        let t = smoothed_target(3, 0.1, 10).unwrap();
        for (k, &q) in t.as_slice().iter().enumerate() {
            let want = if k == 3 { 0.91 } else { 0.01 };
            assert!((q - want).abs() < 1e-15);
        }
        assert!(smoothed_target(10, 0.1, 10).is_err());
        assert!(smoothed_target(0, 1.5, 10).is_err());
    }

    #[test]
    fn bootstrap_examples() {
        let p = ProbVector::new(vec![0.6, 0.4]).unwrap();
        let raw = bootstrap_target(1, &p, 1.0, BootstrapMode::Soft).unwrap();
        assert_eq!(raw, TargetDist::one_hot(2, 1).unwrap());
        let own = bootstrap_target(1, &p, 0.0, BootstrapMode::Soft).unwrap();
        assert_eq!(own.as_slice(), p.as_slice());
        let mix = bootstrap_target(0, &p, 0.8, BootstrapMode::Soft).unwrap();
        assert!((mix.as_slice()[0] - 0.92).abs() < 1e-15);
        assert!((mix.as_slice()[1] - 0.08).abs() < 1e-15);
        assert!(bootstrap_target(0, &p, 1.1, BootstrapMode::Soft).is_err());
    }

    #[test]
    fn hard_bootstrap_breaks_ties_low() {
        let p = ProbVector::new(vec![0.25, 0.375, 0.375]).unwrap();
        let t = bootstrap_target(0, &p, 0.8, BootstrapMode::Hard).unwrap();
        assert_eq!(t.as_slice(), &[0.8, 0.19999999999999996, 0.0]);
        let none = bootstrap_target(2, &p, 0.3, BootstrapMode::None).unwrap();
        assert_eq!(none.one_hot_class(), Some(2));
    }
}
