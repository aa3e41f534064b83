//! Flat `key = value` experiment configs. A key given more than once forms
//! a grid; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use symloss::data_io::{load_mnist, synthetic_blobs, BlobSpec, Dataset, MnistOptions};
use symloss::losses::{BootstrapMode, LossSpec, TransitionRef};
use symloss::noise::{pairflip_matrix, symmetric_matrix, NoiseModel, MNIST_FLIPS};
use symloss::numerics::RngStream;
use symloss::trainer::TrainConfig;

use crate::error::{CliError, Result};

/// Environment variable naming the default MNIST directory.
pub const DATA_DIR_ENV: &str = "SYMLOSS_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

/// RNG stream of the synthetic blob generator.
const BLOB_STREAM: u64 = 0xb10b;

/// Keys that may repeat to form a grid.
const GRID_KEYS: &[&str] = &["loss", "alpha", "beta", "clamp", "eta", "classes"];

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "data_dir",
    "train_subset",
    "test_subset",
    "blob_classes",
    "blob_dim",
    "blob_per_class",
    "blob_separation",
    "loss",
    "alpha",
    "beta",
    "clamp",
    "gce_q",
    "smoothing",
    "bootstrap_weight",
    "noise",
    "eta",
    "flips",
    "hidden",
    "epochs",
    "batch_size",
    "lr",
    "lr_milestones",
    "lr_factor",
    "momentum",
    "weight_decay",
    "seed",
    "reps",
    "classes",
    "classifiers",
    "samples",
    "grid_resolution",
    "asym_eta",
    "trials",
    "saturate",
];

/// Parsed `key = value` pairs in file order, with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Vec<(usize, String)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {lineno}: expected `key = value`")))?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::config(format!("line {lineno}: unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(CliError::config(format!("line {lineno}: `{key}` has no value")));
            }
            let slot = entries.entry(key.to_string()).or_default();
            if !slot.is_empty() && !GRID_KEYS.contains(&key) {
                return Err(CliError::config(format!("line {lineno}: `{key}` may only appear once")));
            }
            slot.push((lineno, value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn parse_value<T: FromStr>(key: &str, lineno: usize, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| CliError::config(format!("line {lineno}: bad value `{v}` for `{key}`")))
    }

    fn one<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.entries.get(key).and_then(|v| v.first()) {
            Some((lineno, v)) => Self::parse_value(key, *lineno, v),
            None => Ok(default),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key).and_then(|v| v.first()) {
            Some((lineno, v)) => Self::parse_value(key, *lineno, v).map(Some),
            None => Ok(None),
        }
    }

    fn grid<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.entries.get(key) {
            Some(vals) => vals.iter().map(|(l, v)| Self::parse_value(key, *l, v)).collect(),
            None => Ok(default),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.entries.get(key).and_then(|v| v.first()) {
            Some((lineno, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Self::parse_value(key, *lineno, s))
                .collect(),
            None => Ok(default),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }
}

/// Named losses accepted by `loss = ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(into = "&'static str")]
pub enum LossChoice {
    Ce,
    Rce,
    Sl,
    Mae,
    Gce,
    Forward,
    Lsr,
    BootstrapSoft,
    BootstrapHard,
    ForwardSl,
    LsrSl,
}

impl From<LossChoice> for &'static str {
    fn from(l: LossChoice) -> Self {
        l.name()
    }
}

impl LossChoice {
    pub const ALL: [LossChoice; 11] = [
        LossChoice::Ce,
        LossChoice::Rce,
        LossChoice::Sl,
        LossChoice::Mae,
        LossChoice::Gce,
        LossChoice::Forward,
        LossChoice::Lsr,
        LossChoice::BootstrapSoft,
        LossChoice::BootstrapHard,
        LossChoice::ForwardSl,
        LossChoice::LsrSl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossChoice::Ce => "ce",
            LossChoice::Rce => "rce",
            LossChoice::Sl => "sl",
            LossChoice::Mae => "mae",
            LossChoice::Gce => "gce",
            LossChoice::Forward => "forward",
            LossChoice::Lsr => "lsr",
            LossChoice::BootstrapSoft => "bootstrap-soft",
            LossChoice::BootstrapHard => "bootstrap-hard",
            LossChoice::ForwardSl => "forward+sl",
            LossChoice::LsrSl => "lsr+sl",
        }
    }

    pub fn uses_weights(self) -> bool {
        matches!(self, LossChoice::Sl | LossChoice::ForwardSl | LossChoice::LsrSl)
    }

    pub fn uses_clamp(self) -> bool {
        matches!(self, LossChoice::Rce) || self.uses_weights()
    }
}

impl FromStr for LossChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LossChoice::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown loss `{s}`"))
    }
}

/// One point of the loss grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParams {
    pub loss: LossChoice,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub clamp: Option<f64>,
}

impl LossParams {
    /// `sl[alpha=0.1,beta=1,clamp=-6]`, or just the name when no parameter
    /// applies.
    pub fn label(&self) -> String {
        let parts: Vec<String> = [("alpha", self.alpha), ("beta", self.beta), ("clamp", self.clamp)]
            .iter()
            .filter_map(|(k, v)| v.map(|v| format!("{k}={v}")))
            .collect();
        if parts.is_empty() {
            self.loss.name().to_string()
        } else {
            format!("{}[{}]", self.loss.name(), parts.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Symmetric,
    Pairflip,
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(NoiseKind::None),
            "symmetric" => Ok(NoiseKind::Symmetric),
            "pairflip" | "asymmetric" => Ok(NoiseKind::Pairflip),
            _ => Err(format!("unknown noise kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Mnist {
        data_dir: PathBuf,
        train_subset: Option<usize>,
        test_subset: Option<usize>,
    },
    Blobs(BlobSpec),
}

impl DatasetSpec {
    /// Loads or generates the train and test sets. Blobs depend only on
    /// `seed`.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        Ok(match self {
            DatasetSpec::Mnist {
                data_dir,
                train_subset,
                test_subset,
            } => load_mnist(
                data_dir,
                MnistOptions {
                    train_subset: *train_subset,
                    test_subset: *test_subset,
                },
            )?,
            DatasetSpec::Blobs(spec) => synthetic_blobs(spec, &mut RngStream::new(seed, BLOB_STREAM))?,
        })
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::Mnist { .. } => 10,
            DatasetSpec::Blobs(b) => b.classes,
        }
    }
}

fn parse_flips(raw: &RawConfig) -> Result<Vec<(usize, usize)>> {
    let Some(text) = raw.opt::<String>("flips")? else {
        return Ok(MNIST_FLIPS.to_vec());
    };
    if text == "mnist" {
        return Ok(MNIST_FLIPS.to_vec());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once('>')
                .ok_or_else(|| CliError::config(format!("flip `{pair}` is not `from>to`")))?;
            let a = a.trim().parse().map_err(|_| CliError::config(format!("bad flip `{pair}`")))?;
            let b = b.trim().parse().map_err(|_| CliError::config(format!("bad flip `{pair}`")))?;
            Ok((a, b))
        })
        .collect()
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// `None` lets each command pick its default.
    pub losses: Option<Vec<LossChoice>>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub clamps: Vec<f64>,
    pub gce_q: f64,
    pub smoothing: f64,
    pub bootstrap_weight: f64,
    pub noise: NoiseKind,
    /// `None` lets each command pick its default.
    pub etas: Option<Vec<f64>>,
    pub flips: Vec<(usize, usize)>,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub reps: usize,
    pub classes: Option<Vec<usize>>,
    pub classifiers: usize,
    pub samples: usize,
    pub grid_resolution: usize,
    pub asym_eta: f64,
    pub trials: usize,
    pub saturate: bool,
}

impl ExperimentConfig {
    /// Resolves a raw config, falling back to `data_dir` (typically from the
    /// environment) when the file does not name one.
    pub fn from_raw(raw: &RawConfig, data_dir: Option<PathBuf>) -> Result<Self> {
        let dataset = match raw.one("dataset", "blobs".to_string())?.as_str() {
            "mnist" => {
                let dir = raw
                    .opt::<PathBuf>("data_dir")?
                    .or(data_dir)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
                if !dir.is_dir() {
                    return Err(CliError::config(format!(
                        "MNIST directory {} does not exist (set data_dir or {DATA_DIR_ENV})",
                        dir.display()
                    )));
                }
                DatasetSpec::Mnist {
                    data_dir: dir,
                    train_subset: raw.opt("train_subset")?,
                    test_subset: raw.opt("test_subset")?,
                }
            }
            "blobs" => DatasetSpec::Blobs(BlobSpec {
                classes: raw.one("blob_classes", 3)?,
                dim: raw.one("blob_dim", 2)?,
                per_class: raw.one("blob_per_class", 200)?,
                separation: raw.one("blob_separation", 10.0)?,
            }),
            other => return Err(CliError::config(format!("unknown dataset `{other}`"))),
        };
        let etas = raw.has("eta").then(|| raw.grid("eta", Vec::new())).transpose()?;
        let noise = match raw.opt::<NoiseKind>("noise")? {
            Some(n) => n,
            None if raw.has("eta") => NoiseKind::Symmetric,
            None => NoiseKind::None,
        };
        let cfg = Self {
            dataset,
            losses: raw.has("loss").then(|| raw.grid("loss", Vec::new())).transpose()?,
            alphas: raw.grid("alpha", vec![1.0])?,
            betas: raw.grid("beta", vec![1.0])?,
            clamps: raw.grid("clamp", vec![-4.0])?,
            gce_q: raw.one("gce_q", 0.7)?,
            smoothing: raw.one("smoothing", 0.1)?,
            bootstrap_weight: raw.one("bootstrap_weight", 0.95)?,
            noise,
            etas,
            flips: parse_flips(raw)?,
            hidden: raw.list("hidden", vec![256, 128])?,
            epochs: raw.one("epochs", 20)?,
            batch_size: raw.one("batch_size", 128)?,
            lr: raw.one("lr", 0.01)?,
            lr_milestones: raw.list("lr_milestones", Vec::new())?,
            lr_factor: raw.one("lr_factor", 0.1)?,
            momentum: raw.one("momentum", 0.9)?,
            weight_decay: raw.one("weight_decay", 1e-4)?,
            seed: raw.one("seed", 0)?,
            reps: raw.one("reps", 1)?,
            classes: raw.has("classes").then(|| raw.grid("classes", Vec::new())).transpose()?,
            classifiers: raw.one("classifiers", 100)?,
            samples: raw.one("samples", 20)?,
            grid_resolution: raw.one("grid_resolution", 21)?,
            asym_eta: raw.one("asym_eta", 0.3)?,
            trials: raw.one("trials", 1000)?,
            saturate: raw.one("saturate", false)?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.noise == NoiseKind::None && self.etas().iter().any(|&e| e != 0.0) {
            return Err(CliError::config("`noise = none` with a non-zero eta"));
        }
        if self.reps == 0 {
            return Err(CliError::config("reps must be at least 1"));
        }
        Ok(())
    }

    /// Configured noise rates, noise-free when none are given.
    pub fn etas(&self) -> Vec<f64> {
        self.etas.clone().unwrap_or_else(|| vec![0.0])
    }

    /// Configured losses, cross entropy when none are named.
    pub fn losses(&self) -> Vec<LossChoice> {
        self.losses.clone().unwrap_or_else(|| vec![LossChoice::Ce])
    }

    /// The loss grid, collapsing parameters a loss does not use.
    pub fn loss_grid(&self) -> Vec<LossParams> {
        let mut out = Vec::new();
        for loss in self.losses() {
            let alphas: Vec<Option<f64>> = if loss.uses_weights() {
                self.alphas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let betas: Vec<Option<f64>> = if loss.uses_weights() {
                self.betas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let clamps: Vec<Option<f64>> = if loss.uses_clamp() {
                self.clamps.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for &alpha in &alphas {
                for &beta in &betas {
                    for &clamp in &clamps {
                        out.push(LossParams {
                            loss,
                            alpha,
                            beta,
                            clamp,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn loss_spec(&self, p: &LossParams) -> LossSpec {
        let (alpha, beta) = (p.alpha.unwrap_or(1.0), p.beta.unwrap_or(1.0));
        let clamp = p.clamp.unwrap_or(-4.0);
        match p.loss {
            LossChoice::Ce => LossSpec::ce(),
            LossChoice::Rce => LossSpec::rce(clamp),
            LossChoice::Sl => LossSpec::sl(alpha, beta, clamp),
            LossChoice::Mae => LossSpec::mae(),
            LossChoice::Gce => LossSpec::gce(self.gce_q),
            LossChoice::Forward => LossSpec::forward(TransitionRef::Noise),
            LossChoice::Lsr => LossSpec::lsr(self.smoothing),
            LossChoice::BootstrapSoft => LossSpec::bootstrap(BootstrapMode::Soft, self.bootstrap_weight),
            LossChoice::BootstrapHard => LossSpec::bootstrap(BootstrapMode::Hard, self.bootstrap_weight),
            LossChoice::ForwardSl => LossSpec::composite(
                LossSpec::forward(TransitionRef::Noise),
                1.0,
                LossSpec::sl(alpha, beta, clamp),
                1.0,
            ),
            LossChoice::LsrSl => LossSpec::sl(alpha, beta, clamp).with_smoothing(self.smoothing),
        }
    }

    pub fn noise_model(&self, classes: usize, eta: f64) -> Result<Option<NoiseModel>> {
        Ok(match self.noise {
            NoiseKind::None => None,
            NoiseKind::Symmetric => Some(symmetric_matrix(classes, eta)?),
            NoiseKind::Pairflip => Some(pairflip_matrix(classes, eta, &self.flips)?),
        })
    }

    pub fn train_config(&self, params: &LossParams, eta: f64, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            loss: self.loss_spec(params),
            hidden: self.hidden.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_lr: self.lr,
            lr_milestones: self.lr_milestones.clone(),
            lr_factor: self.lr_factor,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed,
            noise: self.noise_model(self.dataset.classes(), eta)?,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// The single training setup of `train`; grids must be singletons.
    pub fn single(&self) -> Result<(LossParams, f64)> {
        let grid = self.loss_grid();
        if grid.len() != 1 || self.etas().len() != 1 {
            return Err(CliError::config(format!(
                "train needs exactly one loss setting and one eta, got {} and {}",
                grid.len(),
                self.etas().len()
            )));
        }
        Ok((grid[0], self.etas()[0]))
    }
}
