//! The loss family compared under label noise.
//!
//! [`ce_loss`], [`rce_loss`], [`sl_loss`], [`mae_loss`], [`gce_loss`] and
//! [`forward_loss`] are standalone kernels. [`LossSpec`] describes one
//! configured loss (kind, parameters, target transform) or a weighted pair,
//! and evaluates it per sample.

mod kernels;
mod targets;

pub use kernels::{ce_loss, forward_loss, gce_loss, mae_loss, rce_loss, sl_loss, LossResult};
pub use targets::{bootstrap_target, smoothed_target, BootstrapMode, TargetDist};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::noise::NoiseModel;
use crate::numerics::ProbVector;
use kernels::{check_clamp, check_gce_exponent, check_weight, Probs};
use targets::bootstrap_from_slice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Rce,
    Sl,
    Mae,
    Gce,
    Forward,
    Composite,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Rce => "rce",
            LossKind::Sl => "sl",
            LossKind::Mae => "mae",
            LossKind::Gce => "gce",
            LossKind::Forward => "forward",
            LossKind::Composite => "composite",
        }
    }
}

/// Which transition matrix a Forward loss multiplies the prediction by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionRef {
    Identity,
    /// The noise model that corrupted the training labels.
    Noise,
}

/// Two weighted child losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeParts {
    pub first: LossSpec,
    pub first_weight: f64,
    pub second: LossSpec,
    pub second_weight: f64,
}

/// A configured loss. Parameters that the kind does not use are ignored
/// but still range-checked by [`LossSpec::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub alpha: f64,
    pub beta: f64,
    /// The value taken by `log 0` inside RCE; must be negative.
    pub clamp: f64,
    pub gce_exponent: f64,
    /// Label-smoothing strength applied to the target.
    pub smoothing: f64,
    pub bootstrap_weight: f64,
    pub bootstrap: BootstrapMode,
    pub transition: Option<TransitionRef>,
    pub composite: Option<Box<CompositeParts>>,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::Ce,
            alpha: 1.0,
            beta: 1.0,
            clamp: -4.0,
            gce_exponent: 0.7,
            smoothing: 0.0,
            bootstrap_weight: 0.95,
            bootstrap: BootstrapMode::None,
            transition: None,
            composite: None,
        }
    }
}

/// Per-sample information a loss may need besides the logits.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub label: usize,
    /// Resolves [`TransitionRef::Noise`].
    pub noise: Option<&'a NoiseModel>,
}

impl<'a> LossContext<'a> {
    pub fn new(label: usize) -> Self {
        Self { label, noise: None }
    }

    pub fn with_noise(label: usize, noise: &'a NoiseModel) -> Self {
        Self {
            label,
            noise: Some(noise),
        }
    }
}

impl LossSpec {
    fn of(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn ce() -> Self {
        Self::of(LossKind::Ce)
    }

    pub fn rce(clamp: f64) -> Self {
        Self {
            clamp,
            ..Self::of(LossKind::Rce)
        }
    }

    pub fn sl(alpha: f64, beta: f64, clamp: f64) -> Self {
        Self {
            alpha,
            beta,
            clamp,
            ..Self::of(LossKind::Sl)
        }
    }

    pub fn mae() -> Self {
        Self::of(LossKind::Mae)
    }

    pub fn gce(exponent: f64) -> Self {
        Self {
            gce_exponent: exponent,
            ..Self::of(LossKind::Gce)
        }
    }

    pub fn forward(transition: TransitionRef) -> Self {
        Self {
            transition: Some(transition),
            ..Self::of(LossKind::Forward)
        }
    }

    /// CE on label-smoothed targets.
    pub fn lsr(eps: f64) -> Self {
        Self::ce().with_smoothing(eps)
    }

    /// CE on bootstrap targets.
    pub fn bootstrap(mode: BootstrapMode, weight: f64) -> Self {
        Self {
            bootstrap: mode,
            bootstrap_weight: weight,
            ..Self::ce()
        }
    }

    pub fn composite(first: LossSpec, first_weight: f64, second: LossSpec, second_weight: f64) -> Self {
        Self {
            composite: Some(Box::new(CompositeParts {
                first,
                first_weight,
                second,
                second_weight,
            })),
            ..Self::of(LossKind::Composite)
        }
    }

    pub fn with_smoothing(mut self, eps: f64) -> Self {
        self.smoothing = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_weight("alpha", self.alpha)?;
        check_weight("beta", self.beta)?;
        check_clamp(self.clamp)?;
        check_gce_exponent(self.gce_exponent)?;
        kernels_unit("smoothing", self.smoothing)?;
        kernels_unit("bootstrap weight", self.bootstrap_weight)?;
        match (&self.kind, &self.composite) {
            (LossKind::Composite, Some(parts)) => {
                check_weight("composite weight", parts.first_weight)?;
                check_weight("composite weight", parts.second_weight)?;
                parts.first.validate()?;
                parts.second.validate()?;
            }
            (LossKind::Composite, None) => {
                return Err(invalid_param("composite loss without children"));
            }
            (_, Some(_)) => {
                return Err(invalid_param("only composite losses may carry children"));
            }
            (_, None) => {}
        }
        if self.kind == LossKind::Forward && self.transition.is_none() {
            return Err(invalid_param("forward loss needs a transition reference"));
        }
        Ok(())
    }

    /// True if this loss, or any child, multiplies by the noise matrix.
    pub fn uses_noise_matrix(&self) -> bool {
        match (&self.kind, &self.composite) {
            (LossKind::Forward, _) => self.transition == Some(TransitionRef::Noise),
            (LossKind::Composite, Some(p)) => p.first.uses_noise_matrix() || p.second.uses_noise_matrix(),
            _ => false,
        }
    }

    /// The target distribution this loss trains towards for `label`, given
    /// the current prediction (only bootstrap targets look at it).
    pub fn target(&self, label: usize, prediction: &[f64]) -> Result<TargetDist> {
        let t = bootstrap_from_slice(label, prediction, self.bootstrap_weight, self.bootstrap)?;
        if self.smoothing > 0.0 {
            t.smoothed(self.smoothing)
        } else {
            Ok(t)
        }
    }

    /// Loss value and logit gradient for one sample.
    ///
    /// Bootstrap targets are built from the current prediction and then
    /// held fixed: no gradient flows through the target.
    pub fn evaluate(&self, logits: &[f64], ctx: &LossContext<'_>) -> Result<LossResult> {
        let pr = Probs::from_logits(logits)?;
        self.eval_probs(&pr, ctx, None)
    }

    /// Like [`LossSpec::evaluate`] but builds bootstrap targets from the
    /// supplied prediction instead of the softmax of `logits`.
    pub fn evaluate_with_prediction(
        &self,
        logits: &[f64],
        ctx: &LossContext<'_>,
        prediction: &[f64],
    ) -> Result<LossResult> {
        if prediction.len() != logits.len() {
            return Err(invalid_input("prediction and logits differ in length"));
        }
        let pr = Probs::from_logits(logits)?;
        self.eval_probs(&pr, ctx, Some(prediction))
    }

    fn eval_probs(&self, pr: &Probs, ctx: &LossContext<'_>, frozen: Option<&[f64]>) -> Result<LossResult> {
        let k = pr.len();
        if ctx.label >= k {
            return Err(invalid_input(format!("label {} out of range for K={k}", ctx.label)));
        }
        let prediction = frozen.unwrap_or(&pr.p);
        Ok(match self.kind {
            LossKind::Ce => kernels::ce_core(pr, self.target(ctx.label, prediction)?.as_slice()),
            LossKind::Rce => kernels::rce_core(pr, self.target(ctx.label, prediction)?.as_slice(), self.clamp),
            LossKind::Sl => kernels::sl_core(
                pr,
                self.target(ctx.label, prediction)?.as_slice(),
                self.alpha,
                self.beta,
                self.clamp,
            ),
            LossKind::Mae => kernels::mae_core(pr, self.target(ctx.label, prediction)?.as_slice()),
            LossKind::Gce => kernels::gce_core(pr, ctx.label, self.gce_exponent),
            LossKind::Forward => match self.transition {
                Some(TransitionRef::Identity) => kernels::forward_identity(pr, ctx.label),
                Some(TransitionRef::Noise) => {
                    let t = ctx
                        .noise
                        .ok_or_else(|| Error::InvalidState("forward loss needs a noise model".into()))?;
                    if t.classes() != k {
                        return Err(invalid_param(format!(
                            "transition matrix has {} classes, logits have {k}",
                            t.classes()
                        )));
                    }
                    kernels::forward_with(pr, ctx.label, t)
                }
                None => return Err(invalid_param("forward loss needs a transition reference")),
            },
            LossKind::Composite => {
                let parts = self
                    .composite
                    .as_ref()
                    .ok_or_else(|| invalid_param("composite loss without children"))?;
                let a = parts.first.eval_probs(pr, ctx, frozen)?;
                let b = parts.second.eval_probs(pr, ctx, frozen)?;
                let mut out = LossResult::zeros(k);
                out.add_scaled(parts.first_weight, &a);
                out.add_scaled(parts.second_weight, &b);
                out
            }
        })
    }

    /// Loss value computed from a probability vector alone, as used for
    /// risks of fixed classifiers. Forward correction needs logits and a
    /// transition matrix, so it is rejected here.
    pub fn value_from_probs(&self, p: &ProbVector, label: usize) -> Result<f64> {
        let pr = Probs::from_probs(p.as_slice());
        self.value_probs(&pr, label)
    }

    pub(crate) fn value_probs(&self, pr: &Probs, label: usize) -> Result<f64> {
        let k = pr.len();
        if label >= k {
            return Err(invalid_input(format!("label {label} out of range for K={k}")));
        }
        let q = || self.target(label, &pr.p);
        Ok(match self.kind {
            LossKind::Ce => kernels::ce_value(pr, q()?.as_slice()),
            LossKind::Rce => kernels::rce_value(pr, q()?.as_slice(), self.clamp),
            LossKind::Sl => {
                let q = q()?;
                self.alpha * kernels::ce_value(pr, q.as_slice())
                    + self.beta * kernels::rce_value(pr, q.as_slice(), self.clamp)
            }
            LossKind::Mae => kernels::mae_value(pr, q()?.as_slice()),
            LossKind::Gce => kernels::gce_value(pr, label, self.gce_exponent),
            LossKind::Forward => {
                return Err(Error::UnsupportedLoss(
                    "forward correction is not a function of the prediction alone".into(),
                ))
            }
            LossKind::Composite => {
                let parts = self
                    .composite
                    .as_ref()
                    .ok_or_else(|| invalid_param("composite loss without children"))?;
                parts.first_weight * parts.first.value_probs(pr, label)?
                    + parts.second_weight * parts.second.value_probs(pr, label)?
            }
        })
    }
}

fn kernels_unit(what: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid_param(format!("{what} {v} outside [0, 1]")));
    }
    Ok(())
}

/// Weighted sum of two losses on the same sample.
pub fn composite_loss(
    a: &LossSpec,
    weight_a: f64,
    b: &LossSpec,
    weight_b: f64,
    logits: &[f64],
    ctx: &LossContext<'_>,
) -> Result<LossResult> {
    check_weight("composite weight", weight_a)?;
    check_weight("composite weight", weight_b)?;
    let ra = a.evaluate(logits, ctx)?;
    let rb = b.evaluate(logits, ctx)?;
    let mut out = LossResult::zeros(logits.len());
    out.add_scaled(weight_a, &ra);
    out.add_scaled(weight_b, &rb);
    Ok(out)
}

#[cfg(test)]
mod tests;
