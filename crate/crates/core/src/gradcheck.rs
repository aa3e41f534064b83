//! Central finite-difference checks of analytic logit gradients.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Result};
use crate::losses::{BootstrapMode, LossContext, LossKind, LossSpec, TransitionRef};
use crate::noise::{symmetric_matrix, NoiseModel};
use crate::numerics::{softmax, RngStream};
use crate::parallel;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor of [`rel_err`]; below it errors are effectively absolute.
pub const REL_FLOOR: f64 = 1e-3;
/// MAE trials with some `|p_j - q_j|` below this are skipped (the kink).
pub const MAE_KINK: f64 = 1e-4;
/// Noise rate of the transition matrix handed to noise-aware losses.
pub const CHECK_NOISE_RATE: f64 = 0.3;

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest [`rel_err`] over the logits of one sample. Bootstrap targets
/// stay frozen at the unperturbed prediction.
pub fn check_sample(loss: &LossSpec, logits: &[f64], ctx: &LossContext<'_>, step: f64) -> Result<f64> {
    let frozen = softmax(logits)?;
    let analytic = loss.evaluate_with_prediction(logits, ctx, frozen.as_slice())?;
    let mut z = logits.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..z.len() {
        let orig = z[j];
        z[j] = orig + step;
        let up = loss.evaluate_with_prediction(&z, ctx, frozen.as_slice())?.value;
        z[j] = orig - step;
        let down = loss.evaluate_with_prediction(&z, ctx, frozen.as_slice())?.value;
        z[j] = orig;
        worst = worst.max(rel_err(analytic.grad_logits[j], (up - down) / (2.0 * step)));
    }
    Ok(worst)
}

/// One named loss under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLoss {
    pub name: String,
    pub spec: LossSpec,
}

impl NamedLoss {
    pub fn new(name: impl Into<String>, spec: LossSpec) -> Self {
        Self {
            name: name.into(),
            spec,
        }
    }
}

/// Every loss kind and target transform with representative parameters.
pub fn default_losses() -> Vec<NamedLoss> {
    vec![
        NamedLoss::new("ce", LossSpec::ce()),
        NamedLoss::new("rce[clamp=-4]", LossSpec::rce(-4.0)),
        NamedLoss::new("sl[alpha=1,beta=1,clamp=-4]", LossSpec::sl(1.0, 1.0, -4.0)),
        NamedLoss::new("sl[alpha=0.1,beta=1,clamp=-6]", LossSpec::sl(0.1, 1.0, -6.0)),
        NamedLoss::new("sl[alpha=0.01,beta=1,clamp=-4]", LossSpec::sl(0.01, 1.0, -4.0)),
        NamedLoss::new("mae", LossSpec::mae()),
        NamedLoss::new("gce", LossSpec::gce(0.7)),
        NamedLoss::new("forward-identity", LossSpec::forward(TransitionRef::Identity)),
        NamedLoss::new("forward", LossSpec::forward(TransitionRef::Noise)),
        NamedLoss::new("lsr", LossSpec::lsr(0.1)),
        NamedLoss::new("bootstrap-soft", LossSpec::bootstrap(BootstrapMode::Soft, 0.95)),
        NamedLoss::new("bootstrap-hard", LossSpec::bootstrap(BootstrapMode::Hard, 0.8)),
        NamedLoss::new(
            "forward+rce",
            LossSpec::composite(LossSpec::forward(TransitionRef::Noise), 1.0, LossSpec::rce(-4.0), 1.0),
        ),
        NamedLoss::new("lsr+sl[alpha=1,beta=1,clamp=-4]", LossSpec::sl(1.0, 1.0, -4.0).with_smoothing(0.1)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub losses: Vec<NamedLoss>,
    pub classes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    /// Scale of the standard-normal logits.
    pub logit_scale: f64,
    /// Push the label's logit to +30 in every trial.
    pub saturate: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            losses: default_losses(),
            classes: vec![2, 3, 10],
            trials: 1000,
            seed: 0,
            step: STEP,
            logit_scale: 2.0,
            saturate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckRow {
    pub loss: String,
    pub classes: usize,
    pub trials: usize,
    /// Trials dropped because they sat on a kink of the loss.
    pub skipped: usize,
    pub max_rel_err: f64,
}

fn on_mae_kink(loss: &LossSpec, logits: &[f64], label: usize) -> Result<bool> {
    if loss.kind != LossKind::Mae {
        return Ok(false);
    }
    let p = softmax(logits)?;
    let q = loss.target(label, p.as_slice())?;
    Ok(p.as_slice().iter().zip(q.as_slice()).any(|(p, q)| (p - q).abs() < MAE_KINK))
}

/// Runs every (loss, K) pair over `trials` random samples. Trial `t` of a
/// pair draws from its own child stream, so results do not depend on
/// scheduling.
pub fn run(config: &GradCheckConfig) -> Result<Vec<GradCheckRow>> {
    if config.trials == 0 {
        return Err(invalid_param("grad check needs at least one trial"));
    }
    if let Some(&k) = config.classes.iter().find(|&&k| k < 2) {
        return Err(invalid_param(format!("grad check needs K >= 2, got {k}")));
    }
    for l in &config.losses {
        l.spec.validate()?;
    }
    let mut rows = Vec::new();
    for (li, named) in config.losses.iter().enumerate() {
        for &k in &config.classes {
            let noise: NoiseModel = symmetric_matrix(k, CHECK_NOISE_RATE)?;
            let base = RngStream::new(config.seed, ((li as u64) << 32) | k as u64);
            let outcomes = parallel::map_indexed(config.trials, |t| -> Result<Option<f64>> {
                let mut rng = base.split(t as u64);
                let label = rng.below(k);
                let mut z: Vec<f64> = (0..k).map(|_| config.logit_scale * rng.normal()).collect();
                if config.saturate {
                    z[label] = 30.0;
                }
                if on_mae_kink(&named.spec, &z, label)? {
                    return Ok(None);
                }
                let ctx = LossContext::with_noise(label, &noise);
                check_sample(&named.spec, &z, &ctx, config.step).map(Some)
            });
            let mut worst: f64 = 0.0;
            let mut skipped = 0;
            for o in outcomes {
                match o? {
                    Some(e) => worst = worst.max(e),
                    None => skipped += 1,
                }
            }
            rows.push(GradCheckRow {
                loss: named.name.clone(),
                classes: k,
                trials: config.trials,
                skipped,
                max_rel_err: worst,
            });
        }
    }
    Ok(rows)
}
