//! MLP training with SGD, momentum, weight decay and a step learning-rate
//! schedule, plus the per-epoch diagnostics of a run.

mod mlp;
mod optim;

pub use mlp::{Gradients, MlpModel};
pub use optim::{sgd_step, OptState};

use serde::{Serialize, Serializer};

use crate::data_io::Dataset;
use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::losses::{LossContext, LossSpec};
use crate::metrics::{
    classwise_accuracy, clean_subset_confidence, confusion_matrix, prediction_distribution, ClasswiseReport,
    PredictionDistribution,
};
use crate::noise::NoiseModel;
use crate::numerics::{argmax, softmax_into, Matrix, RngStream};

/// RNG stream ids derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// Rows per evaluation chunk.
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    /// Hidden layer widths; empty means softmax regression.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    #[serde(serialize_with = "noise_echo")]
    pub noise: Option<NoiseModel>,
}

#[derive(Serialize)]
struct NoiseEcho {
    eta: f64,
    matrix: String,
}

fn noise_echo<S: Serializer>(noise: &Option<NoiseModel>, s: S) -> std::result::Result<S::Ok, S::Error> {
    noise
        .as_ref()
        .map(|m| NoiseEcho {
            eta: m.eta(),
            matrix: m.to_text(),
        })
        .serialize(s)
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::ce(),
            hidden: vec![256, 128],
            epochs: 30,
            batch_size: 128,
            base_lr: 0.01,
            lr_milestones: Vec::new(),
            lr_factor: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            noise: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(invalid_param("batch_size must be at least 1"));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(invalid_param(format!("base_lr must be finite and >= 0, got {}", self.base_lr)));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return Err(invalid_param(format!("lr_factor must be in (0, 1], got {}", self.lr_factor)));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid_param(format!(
                "lr_milestones must be strictly increasing, got {:?}",
                self.lr_milestones
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid_param(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid_param(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.hidden.contains(&0) {
            return Err(invalid_param("hidden layers must be non-empty"));
        }
        Ok(())
    }
}

/// `base_lr · lr_factor^(milestones ≤ epoch)`, epochs counted from 0.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let passed = config.lr_milestones.iter().filter(|&&m| m <= epoch).count();
    config.base_lr * config.lr_factor.powi(passed as i32)
}

/// Everything measured during one training run. Epoch series have one
/// entry per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub epoch_accuracy: Vec<f64>,
    pub epoch_classwise: Vec<Vec<f64>>,
    /// Mean training loss on the (possibly noisy) training labels.
    pub epoch_train_loss: Vec<f64>,
    pub final_report: ClasswiseReport,
    /// `[true][predicted]` counts on the test set.
    pub final_confusion: Vec<Vec<usize>>,
    pub final_predictions: PredictionDistribution,
    /// Per class: mean predicted distribution over training samples of that
    /// class whose label was left clean. `None` when no such sample exists.
    pub confidence_profile: Vec<Option<Vec<f64>>>,
    pub realized_noise_rate: f64,
}

impl TrainRun {
    pub fn last_accuracy(&self) -> Option<f64> {
        self.epoch_accuracy.last().copied()
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.epoch_accuracy.iter().copied().reduce(f64::max)
    }
}

/// Softmax probabilities for every row, computed in chunks.
pub fn predict_probabilities(model: &MlpModel, features: &Matrix) -> Result<Matrix> {
    let k = model.classes();
    let mut out = Matrix::zeros(features.rows(), k);
    let mut start = 0;
    while start < features.rows() {
        let end = (start + EVAL_CHUNK).min(features.rows());
        let idx: Vec<usize> = (start..end).collect();
        let logits = model.predict(&features.select_rows(&idx))?;
        for (r, i) in (start..end).enumerate() {
            softmax_into(logits.row(r), out.row_mut(i));
        }
        start = end;
    }
    Ok(out)
}

/// Argmax class for every row.
pub fn predict_classes(model: &MlpModel, features: &Matrix) -> Result<Vec<usize>> {
    let probs = predict_probabilities(model, features)?;
    Ok(probs.iter_rows().map(argmax).collect())
}

fn check_data(train: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<()> {
    if train.is_empty() {
        return Err(invalid_input("empty training set"));
    }
    if train.classes != test.classes || train.dim() != test.dim() {
        return Err(invalid_input(format!(
            "train is {}-dim with K={}, test is {}-dim with K={}",
            train.dim(),
            train.classes,
            test.dim(),
            test.classes
        )));
    }
    if let Some(noise) = &config.noise {
        if noise.classes() != train.classes {
            return Err(invalid_param(format!(
                "noise model has {} classes, data has {}",
                noise.classes(),
                train.classes
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model and returns its run record.
pub fn train(train: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<TrainRun> {
    train_model(train, test, config).map(|(run, _)| run)
}

/// Like [`train`] but also hands back the trained model.
pub fn train_model(train: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<(TrainRun, MlpModel)> {
    config.validate()?;
    check_data(train, test, config)?;
    let k = train.classes;

    let mut sizes = vec![train.dim()];
    sizes.extend(&config.hidden);
    sizes.push(k);
    let mut model = MlpModel::init(&sizes, &mut RngStream::new(config.seed, STREAM_INIT))?;
    let mut opt = OptState::new(&model, config.momentum, config.weight_decay);

    let identity;
    let corruption;
    let (noisy_labels, clean_mask, realized) = match &config.noise {
        Some(noise) => {
            corruption = noise.corrupt(&train.labels, &mut RngStream::new(config.seed, STREAM_NOISE))?;
            (&corruption.noisy_labels[..], corruption.clean_mask.clone(), corruption.realized_rate)
        }
        None => (&train.labels[..], vec![true; train.len()], 0.0),
    };
    let transition = match &config.noise {
        Some(n) => n,
        None => {
            identity = NoiseModel::identity(k);
            &identity
        }
    };

    let mut shuffle_rng = RngStream::new(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_accuracy = Vec::with_capacity(config.epochs);
    let mut epoch_classwise = Vec::with_capacity(config.epochs);
    let mut epoch_train_loss = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = train.features.select_rows(batch);
            let logits = model.forward(&x)?;
            if !logits.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let mut grad = Matrix::zeros(batch.len(), k);
            for (r, &i) in batch.iter().enumerate() {
                let ctx = LossContext::with_noise(noisy_labels[i], transition);
                let res = config.loss.evaluate(logits.row(r), &ctx)?;
                if !res.value.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                loss_sum += res.value;
                grad.row_mut(r).copy_from_slice(&res.grad_logits);
            }
            let grads = model.backward(&grad)?;
            sgd_step(&mut model, &grads, &mut opt, lr);
        }
        if !loss_sum.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_train_loss.push(loss_sum / train.len() as f64);
        let report = classwise_accuracy(&predict_classes(&model, &test.features)?, &test.labels, k)?;
        epoch_accuracy.push(report.overall);
        epoch_classwise.push(report.per_class);
    }

    let predictions = predict_classes(&model, &test.features)?;
    let train_probs = predict_probabilities(&model, &train.features)?;
    let confidence_profile = (0..k)
        .map(|c| match clean_subset_confidence(&train_probs, &train.labels, &clean_mask, c) {
            Ok(v) => Ok(Some(v)),
            Err(Error::EmptySubset(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;

    let run = TrainRun {
        config: config.clone(),
        epoch_accuracy,
        epoch_classwise,
        epoch_train_loss,
        final_report: classwise_accuracy(&predictions, &test.labels, k)?,
        final_confusion: confusion_matrix(&predictions, &test.labels, k)?,
        final_predictions: prediction_distribution(&predictions, &test.labels, k)?,
        confidence_profile,
        realized_noise_rate: realized,
    };
    Ok((run, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{synthetic_blobs, BlobSpec};
    use crate::noise::symmetric_matrix;

    fn blobs(seed: u64) -> (Dataset, Dataset) {
        let spec = BlobSpec {
            classes: 3,
            dim: 4,
            per_class: 100,
            separation: 6.0,
        };
        synthetic_blobs(&spec, &mut RngStream::new(seed, 0)).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden: vec![8],
            epochs: 5,
            batch_size: 16,
            base_lr: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn lr_schedule_steps_at_milestones() {
        let cfg = TrainConfig {
            base_lr: 0.01,
            lr_milestones: vec![40, 80],
            lr_factor: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at(0, &cfg), 0.01);
        assert!((lr_at(39, &cfg) - 0.01).abs() < 1e-18);
        assert!((lr_at(40, &cfg) - 0.001).abs() < 1e-15);
        assert!((lr_at(45, &cfg) - 0.001).abs() < 1e-15);
        assert!((lr_at(85, &cfg) - 0.0001).abs() < 1e-16);
    }

    #[test]
    fn config_validation() {
        let ok = small_config();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { lr_milestones: vec![5, 5], ..ok.clone() },
            TrainConfig { lr_milestones: vec![8, 3], ..ok.clone() },
            TrainConfig { lr_factor: 0.0, ..ok.clone() },
            TrainConfig { lr_factor: 1.5, ..ok.clone() },
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { momentum: 1.0, ..ok.clone() },
            TrainConfig { weight_decay: -1.0, ..ok.clone() },
            TrainConfig { hidden: vec![0], ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))), "{bad:?}");
        }
    }

    #[test]
    fn zero_epochs_leaves_model_at_init() {
        let (tr, te) = blobs(1);
        let cfg = TrainConfig { epochs: 0, ..small_config() };
        let (run, model) = train_model(&tr, &te, &cfg).unwrap();
        assert!(run.epoch_accuracy.is_empty() && run.epoch_classwise.is_empty());
        let init = MlpModel::init(&[4, 8, 3], &mut RngStream::new(cfg.seed, STREAM_INIT)).unwrap();
        assert_eq!(model.weights(), init.weights());
        assert_eq!(run.last_accuracy(), None);
    }

    #[test]
    fn runs_are_deterministic() {
        let (tr, te) = blobs(2);
        let cfg = TrainConfig {
            noise: Some(symmetric_matrix(3, 0.3).unwrap()),
            ..small_config()
        };
        let a = train(&tr, &te, &cfg).unwrap();
        let b = train(&tr, &te, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epoch_accuracy.len(), cfg.epochs);
        assert!(a.realized_noise_rate > 0.15 && a.realized_noise_rate < 0.45);
    }

    #[test]
    fn sl_without_reverse_term_matches_ce() {
        let (tr, te) = blobs(3);
        let ce = train(&tr, &te, &small_config()).unwrap();
        let sl = train(
            &tr,
            &te,
            &TrainConfig {
                loss: LossSpec::sl(1.0, 0.0, -4.0),
                ..small_config()
            },
        )
        .unwrap();
        assert_eq!(ce.epoch_accuracy, sl.epoch_accuracy);
        assert_eq!(ce.epoch_train_loss, sl.epoch_train_loss);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (tr, te) = blobs(4);
        let cfg = TrainConfig { epochs: 20, ..small_config() };
        let run = train(&tr, &te, &cfg).unwrap();
        assert!(run.last_accuracy().unwrap() > 0.95, "{:?}", run.epoch_accuracy);
        assert!(run.epoch_train_loss.last() < run.epoch_train_loss.first());
    }

    #[test]
    fn overall_is_support_weighted_classwise_mean() {
        let (tr, te) = blobs(5);
        let run = train(&tr, &te, &small_config()).unwrap();
        let support = &run.final_report.support;
        let n: usize = support.iter().sum();
        for (acc, per) in run.epoch_accuracy.iter().zip(&run.epoch_classwise) {
            let weighted: f64 = per.iter().zip(support).map(|(a, &s)| a * s as f64).sum::<f64>() / n as f64;
            assert!((acc - weighted).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_class_mismatch_is_rejected() {
        let (tr, te) = blobs(6);
        let cfg = TrainConfig {
            noise: Some(symmetric_matrix(4, 0.2).unwrap()),
            ..small_config()
        };
        assert!(matches!(train(&tr, &te, &cfg), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn exploding_lr_reports_divergence() {
        let (tr, te) = blobs(7);
        let cfg = TrainConfig {
            base_lr: 1e6,
            momentum: 0.0,
            epochs: 50,
            ..small_config()
        };
        match train(&tr, &te, &cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_echo_serializes_noise_as_text() {
        let cfg = TrainConfig {
            noise: Some(symmetric_matrix(3, 0.3).unwrap()),
            ..small_config()
        };
        let json = serde_json::to_value(&cfg).unwrap();
        assert!(json["noise"]["matrix"].as_str().unwrap().lines().count() == 3);
    }
}
