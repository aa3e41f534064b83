//! Value-and-gradient kernels. Every gradient is with respect to the
//! logits, pushed through the softmax Jacobian
//! `∂p_k/∂z_j = p_k (δ_kj - p_j)`.

use serde::{Deserialize, Serialize};

use super::targets::TargetDist;
use crate::error::{invalid_input, invalid_param, Result};
use crate::noise::NoiseModel;
use crate::numerics::{clog, lse_unchecked};

/// Loss value and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossResult {
    pub value: f64,
    pub grad_logits: Vec<f64>,
}

impl LossResult {
    pub(crate) fn zeros(k: usize) -> Self {
        Self {
            value: 0.0,
            grad_logits: vec![0.0; k],
        }
    }

    /// `self += w · other`.
    pub(crate) fn add_scaled(&mut self, w: f64, other: &LossResult) {
        self.value += w * other.value;
        for (g, o) in self.grad_logits.iter_mut().zip(&other.grad_logits) {
            *g += w * o;
        }
    }
}

/// Softmax probabilities together with their logarithms.
pub(crate) struct Probs {
    pub p: Vec<f64>,
    pub logp: Vec<f64>,
}

impl Probs {
    pub fn from_logits(z: &[f64]) -> Result<Self> {
        if z.is_empty() {
            return Err(invalid_input("empty logits"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(invalid_input("non-finite logit"));
        }
        let lse = lse_unchecked(z);
        let logp: Vec<f64> = z.iter().map(|v| v - lse).collect();
        let p = logp.iter().map(|l| l.exp()).collect();
        Ok(Self { p, logp })
    }

    pub fn from_probs(p: &[f64]) -> Self {
        Self {
            p: p.to_vec(),
            logp: p.iter().map(|x| x.ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    /// Pulls a gradient with respect to `p` back to the logits:
    /// `∂/∂z_j = p_j (g_j - Σ_k g_k p_k)`.
    pub fn pullback(&self, dp: &[f64]) -> Vec<f64> {
        let mean: f64 = dp.iter().zip(&self.p).map(|(g, p)| g * p).sum();
        dp.iter().zip(&self.p).map(|(g, p)| p * (g - mean)).collect()
    }
}

fn check_dims(k: usize, target: &TargetDist) -> Result<()> {
    if target.len() != k {
        return Err(invalid_input(format!(
            "target has {} classes but logits have {k}",
            target.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_clamp(a: f64) -> Result<()> {
    if !(a.is_finite() && a < 0.0) {
        return Err(invalid_param(format!("log-zero constant must be finite and negative, got {a}")));
    }
    Ok(())
}

pub(crate) fn check_gce_exponent(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid_param(format!("GCE exponent {q} outside (0, 1]")));
    }
    Ok(())
}

fn check_label(k: usize, label: usize) -> Result<()> {
    if label >= k {
        return Err(invalid_input(format!("label {label} out of range for K={k}")));
    }
    Ok(())
}

// ---- probability-space cores shared by the logits and theory paths ----

pub(crate) fn ce_value(pr: &Probs, q: &[f64]) -> f64 {
    -q.iter()
        .zip(&pr.logp)
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, l)| q * l)
        .sum::<f64>()
}

pub(crate) fn rce_value(pr: &Probs, q: &[f64], a: f64) -> f64 {
    -pr.p.iter().zip(q).map(|(p, q)| p * clog(*q, a)).sum::<f64>()
}

pub(crate) fn mae_value(pr: &Probs, q: &[f64]) -> f64 {
    pr.p.iter().zip(q).map(|(p, q)| (p - q).abs()).sum()
}

pub(crate) fn gce_value(pr: &Probs, label: usize, exponent: f64) -> f64 {
    (1.0 - (exponent * pr.logp[label]).exp()) / exponent
}

pub(crate) fn ce_core(pr: &Probs, q: &[f64]) -> LossResult {
    LossResult {
        value: ce_value(pr, q),
        grad_logits: pr.p.iter().zip(q).map(|(p, q)| p - q).collect(),
    }
}

pub(crate) fn rce_core(pr: &Probs, q: &[f64], a: f64) -> LossResult {
    let logq: Vec<f64> = q.iter().map(|&x| clog(x, a)).collect();
    let mean: f64 = pr.p.iter().zip(&logq).map(|(p, l)| p * l).sum();
    LossResult {
        value: -mean,
        grad_logits: pr
            .p
            .iter()
            .zip(&logq)
            .map(|(p, l)| -p * (l - mean))
            .collect(),
    }
}

pub(crate) fn mae_core(pr: &Probs, q: &[f64]) -> LossResult {
    let signs: Vec<f64> = pr
        .p
        .iter()
        .zip(q)
        .map(|(p, q)| {
            let d = p - q;
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    LossResult {
        value: mae_value(pr, q),
        grad_logits: pr.pullback(&signs),
    }
}

pub(crate) fn gce_core(pr: &Probs, label: usize, exponent: f64) -> LossResult {
    let py_q = (exponent * pr.logp[label]).exp();
    let grad = pr
        .p
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let delta = if j == label { 1.0 } else { 0.0 };
            -py_q * (delta - p)
        })
        .collect();
    LossResult {
        value: (1.0 - py_q) / exponent,
        grad_logits: grad,
    }
}

/// Forward correction in log space: `ln (Tᵀp)_l = logsumexp_k (ln T_kl + ln p_k)`.
/// With `r_j = T_jl p_j / (Tᵀp)_l` the gradient is `p_j - r_j`. `column(j)`
/// is `T_jl` for the observed label `l`.
fn forward_core(pr: &Probs, column: impl Fn(usize) -> f64) -> LossResult {
    let k = pr.len();
    let terms: Vec<f64> = (0..k)
        .map(|j| {
            let t = column(j);
            if t > 0.0 {
                t.ln() + pr.logp[j]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let finite = terms.iter().any(|t| t.is_finite());
    if !finite {
        // nothing can reach this label; clamp at machine-epsilon scale
        return LossResult {
            value: -f64::EPSILON.ln(),
            grad_logits: vec![0.0; k],
        };
    }
    let log_u = lse_unchecked(&terms);
    LossResult {
        value: -log_u,
        grad_logits: terms
            .iter()
            .zip(&pr.p)
            .map(|(t, p)| p - (t - log_u).exp())
            .collect(),
    }
}

// ---- public logits-space kernels ----

/// Cross entropy `-Σ q_k ln p_k`; gradient `p - q`.
pub fn ce_loss(logits: &[f64], target: &TargetDist) -> Result<LossResult> {
    check_dims(logits.len(), target)?;
    let pr = Probs::from_logits(logits)?;
    Ok(ce_core(&pr, target.as_slice()))
}

/// Reverse cross entropy `-Σ p_k log q_k` with `log 0 = clamp`.
///
/// For one-hot targets the value is `-clamp · (1 - p_y)`.
pub fn rce_loss(logits: &[f64], target: &TargetDist, clamp: f64) -> Result<LossResult> {
    check_clamp(clamp)?;
    check_dims(logits.len(), target)?;
    let pr = Probs::from_logits(logits)?;
    Ok(rce_core(&pr, target.as_slice(), clamp))
}

/// `alpha · CE + beta · RCE`.
pub fn sl_loss(
    logits: &[f64],
    target: &TargetDist,
    alpha: f64,
    beta: f64,
    clamp: f64,
) -> Result<LossResult> {
    check_weight("alpha", alpha)?;
    check_weight("beta", beta)?;
    check_clamp(clamp)?;
    check_dims(logits.len(), target)?;
    let pr = Probs::from_logits(logits)?;
    Ok(sl_core(&pr, target.as_slice(), alpha, beta, clamp))
}

pub(crate) fn sl_core(pr: &Probs, q: &[f64], alpha: f64, beta: f64, clamp: f64) -> LossResult {
    let ce = ce_core(pr, q);
    let rce = rce_core(pr, q, clamp);
    let mut out = LossResult::zeros(pr.len());
    out.add_scaled(alpha, &ce);
    out.add_scaled(beta, &rce);
    out
}

pub(crate) fn check_weight(what: &str, w: f64) -> Result<()> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(invalid_param(format!("{what} must be finite and non-negative, got {w}")));
    }
    Ok(())
}

/// Mean absolute error `Σ |p_k - q_k|`.
pub fn mae_loss(logits: &[f64], target: &TargetDist) -> Result<LossResult> {
    check_dims(logits.len(), target)?;
    let pr = Probs::from_logits(logits)?;
    Ok(mae_core(&pr, target.as_slice()))
}

/// Generalized cross entropy `(1 - p_y^q) / q`.
pub fn gce_loss(logits: &[f64], label: usize, exponent: f64) -> Result<LossResult> {
    check_gce_exponent(exponent)?;
    check_label(logits.len(), label)?;
    let pr = Probs::from_logits(logits)?;
    Ok(gce_core(&pr, label, exponent))
}

/// Forward-corrected cross entropy `-ln (Tᵀp)_label`.
pub fn forward_loss(logits: &[f64], label: usize, transition: &NoiseModel) -> Result<LossResult> {
    let k = logits.len();
    if transition.classes() != k {
        return Err(invalid_param(format!(
            "transition matrix is {0}x{0} but logits have {k} classes",
            transition.classes()
        )));
    }
    check_label(k, label)?;
    let pr = Probs::from_logits(logits)?;
    Ok(forward_core(&pr, |j| transition.entry(j, label)))
}

pub(crate) fn forward_identity(pr: &Probs, label: usize) -> LossResult {
    forward_core(pr, |j| if j == label { 1.0 } else { 0.0 })
}

pub(crate) fn forward_with(pr: &Probs, label: usize, t: &NoiseModel) -> LossResult {
    forward_core(pr, |j| t.entry(j, label))
}
