//! The four subcommands. Each returns its in-memory result after writing
//! artifacts under the output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use symloss::data_io::Dataset;
use symloss::gradcheck::{self, GradCheckConfig, GradCheckRow, NamedLoss};
use symloss::losses::LossSpec;
use symloss::noise::{pairflip_matrix, symmetric_matrix};
use symloss::numerics::RngStream;
use symloss::parallel;
use symloss::theory::{brute_force_minimizers, verify_symmetric_identity, FixedClassifier};
use symloss::trainer::{train, TrainRun};

use crate::artifacts::{num, opt, write_json, write_manifest, CsvTable, CSV_SCHEMA};
use crate::config::{ExperimentConfig, LossParams, RawConfig};
use crate::error::{CliError, Result};

/// Residual bound of the symmetric-noise identity.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Gradient checks pass below this relative error.
pub const GRAD_TOL: f64 = 1e-6;

/// Stream from which sweep repetition seeds are split.
const SWEEP_STREAM: u64 = 0x5eed;
const THEOREM_STREAM: u64 = 0x7e0;
/// Brute-force instance size used by `verify-theorem`.
const BRUTE_CLASSES: usize = 3;
const BRUTE_LABELS: [usize; 3] = [0, 1, 2];
/// Cyclic flips for the asymmetric brute-force check.
const BRUTE_FLIPS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub data_dir: Option<PathBuf>,
}

pub fn load_config(opts: &Options) -> Result<ExperimentConfig> {
    let raw = match &opts.config {
        Some(path) => RawConfig::from_path(path)?,
        None => RawConfig::default(),
    };
    let mut cfg = ExperimentConfig::from_raw(&raw, opts.data_dir.clone())?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Seed of repetition `rep`: the base seed itself for the first, then
/// draws from child streams of the base seed.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    if rep == 0 {
        return base;
    }
    RngStream::new(base, SWEEP_STREAM).split(rep as u64).next_seed()
}

/// One line of `sweep.csv`, also printed by `train`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub loss: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub clamp: Option<f64>,
    pub eta: f64,
    pub seed: u64,
    pub last_acc: Option<f64>,
    pub best_acc: Option<f64>,
    pub class_acc_spread: Option<f64>,
    pub realized_noise: Option<f64>,
    pub status: String,
}

impl RunSummary {
    fn new(params: &LossParams, eta: f64, seed: u64) -> Self {
        Self {
            loss: params.loss.name().to_string(),
            alpha: params.alpha,
            beta: params.beta,
            clamp: params.clamp,
            eta,
            seed,
            last_acc: None,
            best_acc: None,
            class_acc_spread: None,
            realized_noise: None,
            status: String::new(),
        }
    }

    fn fill(mut self, run: &TrainRun) -> Self {
        self.last_acc = Some(run.last_accuracy().unwrap_or(run.final_report.overall));
        self.best_acc = Some(run.best_accuracy().unwrap_or(run.final_report.overall));
        self.class_acc_spread = Some(run.final_report.spread);
        self.realized_noise = Some(run.realized_noise_rate);
        self.status = "ok".into();
        self
    }

    pub const HEADER: [&'static str; 11] = [
        "loss",
        "alpha",
        "beta",
        "clamp",
        "eta",
        "seed",
        "last_acc",
        "best_acc",
        "class_acc_spread",
        "realized_noise",
        "status",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.loss.clone(),
            opt(self.alpha),
            opt(self.beta),
            opt(self.clamp),
            num(self.eta),
            self.seed.to_string(),
            opt(self.last_acc),
            opt(self.best_acc),
            opt(self.class_acc_spread),
            opt(self.realized_noise),
            self.status.clone(),
        ]
    }
}

#[derive(Serialize)]
struct RunArtifact<'a> {
    csv_schema: u32,
    dataset: &'a crate::config::DatasetSpec,
    loss: &'a LossParams,
    eta: f64,
    summary: &'a RunSummary,
    run: &'a TrainRun,
}

fn write_run(dir: &Path, cfg: &ExperimentConfig, params: &LossParams, eta: f64, summary: &RunSummary, run: &TrainRun) -> Result<()> {
    write_json(
        &dir.join("run.json"),
        &RunArtifact {
            csv_schema: CSV_SCHEMA,
            dataset: &cfg.dataset,
            loss: params,
            eta,
            summary,
            run,
        },
    )?;

    let k = run.final_report.per_class.len();
    let mut header = vec!["epoch".to_string(), "overall_acc".to_string()];
    header.extend((0..k).map(|c| format!("acc_class_{c}")));
    let mut epochs = CsvTable::new(&header)?;
    for (e, (acc, per)) in run.epoch_accuracy.iter().zip(&run.epoch_classwise).enumerate() {
        let mut row = vec![e.to_string(), num(*acc)];
        row.extend(per.iter().map(|&v| num(v)));
        epochs.row(&row)?;
    }
    epochs.write(&dir.join("epochs.csv"))?;

    let mut header: Vec<String> = ["class", "support", "accuracy", "predicted", "true_positive"]
        .map(String::from)
        .to_vec();
    header.extend((0..k).map(|c| format!("confidence_{c}")));
    header.extend((0..k).map(|c| format!("confusion_{c}")));
    let mut report = CsvTable::new(&header)?;
    for c in 0..k {
        let mut row = vec![
            c.to_string(),
            run.final_report.support[c].to_string(),
            num(run.final_report.per_class[c]),
            run.final_predictions.predicted[c].to_string(),
            run.final_predictions.true_positive[c].to_string(),
        ];
        match &run.confidence_profile[c] {
            Some(p) => row.extend(p.iter().map(|&v| num(v))),
            None => row.extend(std::iter::repeat_n(String::new(), k)),
        }
        row.extend(run.final_confusion[c].iter().map(usize::to_string));
        report.row(&row)?;
    }
    report.write(&dir.join("final_report.csv"))?;
    write_manifest(dir, "train", &["run.json", "epochs.csv", "final_report.csv"])
}

fn run_one(
    cfg: &ExperimentConfig,
    data: &(Dataset, Dataset),
    params: &LossParams,
    eta: f64,
    seed: u64,
    dir: &Path,
) -> Result<RunSummary> {
    let tc = cfg.train_config(params, eta, seed)?;
    let run = train(&data.0, &data.1, &tc)?;
    let summary = RunSummary::new(params, eta, seed).fill(&run);
    write_run(dir, cfg, params, eta, &summary, &run)?;
    Ok(summary)
}

/// `train`: one configuration, artifacts straight into the output directory.
pub fn cmd_train(opts: &Options) -> Result<RunSummary> {
    let cfg = load_config(opts)?;
    let (params, eta) = cfg.single()?;
    let data = cfg.dataset.load(cfg.seed)?;
    run_one(&cfg, &data, &params, eta, cfg.seed, &opts.out)
}

/// `sweep`: loss grid × eta grid × repetitions. Cells run in parallel, each
/// writing its own run artifacts; `sweep.csv` lists them in cell order.
/// Failed cells are recorded and do not stop the sweep.
pub fn cmd_sweep(opts: &Options) -> Result<Vec<RunSummary>> {
    let cfg = load_config(opts)?;
    let data = cfg.dataset.load(cfg.seed)?;
    let mut cells = Vec::new();
    for params in cfg.loss_grid() {
        for eta in cfg.etas() {
            for rep in 0..cfg.reps {
                cells.push((params, eta, rep_seed(cfg.seed, rep)));
            }
        }
    }
    // configuration errors abort before any training starts
    for (params, eta, seed) in &cells {
        cfg.train_config(params, *eta, *seed)?;
    }
    let rows = parallel::with_jobs(opts.jobs, || {
        parallel::map_indexed(cells.len(), |i| {
            let (params, eta, seed) = cells[i];
            let dir = opts.out.join("cells").join(format!("{i:04}"));
            match run_one(&cfg, &data, &params, eta, seed, &dir) {
                Ok(s) => s,
                Err(e) => {
                    let mut s = RunSummary::new(&params, eta, seed);
                    s.status = match e {
                        CliError::Core(symloss::Error::Divergence { epoch }) => format!("diverged at epoch {epoch}"),
                        other => format!("error: {other}"),
                    };
                    s
                }
            }
        })
    });
    let mut table = CsvTable::new(RunSummary::HEADER)?;
    for r in &rows {
        table.row(r.record())?;
    }
    table.write(&opts.out.join("sweep.csv"))?;
    write_manifest(&opts.out, "sweep", &["sweep.csv", "cells"])?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub classes: usize,
    pub eta: f64,
    pub clamp: f64,
    pub classifiers: usize,
    pub max_residual: f64,
    /// `eta < 1 - 1/K`; the identity itself holds either way.
    pub condition_met: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerRow {
    pub model: String,
    pub eta: f64,
    pub classes: usize,
    pub samples: usize,
    pub grid_resolution: usize,
    pub clean_min: f64,
    pub noisy_min: f64,
    pub clean_argmin_size: usize,
    pub noisy_argmin_size: usize,
    pub sets_equal: bool,
    /// `pass`, `fail`, `condition unmet` or `hypothesis unmet`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub seed: u64,
    pub identity_tolerance: f64,
    pub identity: Vec<IdentityRow>,
    pub minimizers: Vec<MinimizerRow>,
    pub pass: bool,
}

/// `verify-theorem`: the symmetric-noise identity on random classifiers
/// plus brute-force minimizer comparisons on a 3-sample, 3-class instance.
pub fn cmd_verify_theorem(opts: &Options) -> Result<TheoremReport> {
    let cfg = load_config(opts)?;
    let classes = cfg.classes.clone().unwrap_or_else(|| vec![2, 10]);
    let etas = cfg
        .etas
        .clone()
        .unwrap_or_else(|| (1..=8).map(|i| i as f64 / 10.0).collect());
    if cfg.classifiers == 0 || cfg.samples == 0 {
        return Err(CliError::config("classifiers and samples must be positive"));
    }
    let base = RngStream::new(cfg.seed, THEOREM_STREAM);
    let mut identity = Vec::new();
    let mut cell = 0u64;
    for &k in &classes {
        if k < 2 {
            return Err(CliError::config(format!("classes must be >= 2, got {k}")));
        }
        for &eta in &etas {
            for &clamp in &cfg.clamps {
                let stream = base.split(cell);
                cell += 1;
                let residuals = parallel::with_jobs(opts.jobs, || {
                    parallel::map_indexed(cfg.classifiers, |i| -> Result<f64> {
                        let mut rng = stream.split(i as u64);
                        let labels: Vec<usize> = (0..cfg.samples).map(|_| rng.below(k)).collect();
                        let f = FixedClassifier::random(cfg.samples, k, 2.0, &mut rng)?;
                        Ok(verify_symmetric_identity(&f, &labels, eta, clamp, k)?.residual)
                    })
                });
                let mut max_residual: f64 = 0.0;
                for r in residuals {
                    max_residual = max_residual.max(r?);
                }
                identity.push(IdentityRow {
                    classes: k,
                    eta,
                    clamp,
                    classifiers: cfg.classifiers,
                    max_residual,
                    condition_met: eta < 1.0 - 1.0 / k as f64,
                    pass: max_residual < IDENTITY_TOL,
                });
            }
        }
    }

    let mut minimizers = Vec::new();
    let clamp = cfg.clamps[0];
    let rce = LossSpec::rce(clamp);
    let k = BRUTE_CLASSES;
    let mut check = |name: &str, eta: f64, model, condition: bool| -> Result<()> {
        let r = parallel::with_jobs(opts.jobs, || {
            brute_force_minimizers(&BRUTE_LABELS, k, &rce, &model, cfg.grid_resolution)
        })?;
        let status = if !condition {
            "condition unmet"
        } else if name == "pairflip" && !r.zero_clean_risk {
            "hypothesis unmet"
        } else if r.sets_equal {
            "pass"
        } else {
            "fail"
        };
        minimizers.push(MinimizerRow {
            model: name.to_string(),
            eta,
            classes: k,
            samples: BRUTE_LABELS.len(),
            grid_resolution: cfg.grid_resolution,
            clean_min: r.clean_min,
            noisy_min: r.noisy_min,
            clean_argmin_size: r.clean_argmin.len(),
            noisy_argmin_size: r.noisy_argmin.len(),
            sets_equal: r.sets_equal,
            status: status.to_string(),
        });
        Ok(())
    };
    for &eta in &etas {
        let model = symmetric_matrix(k, eta)?;
        check("symmetric", eta, model, eta < 1.0 - 1.0 / k as f64)?;
    }
    let asym = pairflip_matrix(k, cfg.asym_eta, &BRUTE_FLIPS)?;
    let dominant = asym.is_diagonally_dominant();
    check("pairflip", cfg.asym_eta, asym, dominant)?;

    let pass = identity.iter().all(|r| r.pass) && minimizers.iter().all(|m| m.status != "fail");
    let report = TheoremReport {
        seed: cfg.seed,
        identity_tolerance: IDENTITY_TOL,
        identity,
        minimizers,
        pass,
    };
    write_json(&opts.out.join("theorem_report.json"), &report)?;
    write_manifest(&opts.out, "verify-theorem", &["theorem_report.json"])?;
    Ok(report)
}

/// `grad-check`: every configured loss (all kinds when none are named) at
/// every K; writes `gradcheck.csv`.
pub fn cmd_grad_check(opts: &Options) -> Result<Vec<GradCheckRow>> {
    let cfg = load_config(opts)?;
    let losses = match &cfg.losses {
        Some(_) => cfg
            .loss_grid()
            .iter()
            .map(|p| NamedLoss::new(p.label(), cfg.loss_spec(p)))
            .collect(),
        None => gradcheck::default_losses(),
    };
    if cfg.trials == 0 {
        return Err(CliError::config("trials must be at least 1"));
    }
    let gc = GradCheckConfig {
        losses,
        classes: cfg.classes.clone().unwrap_or_else(|| vec![2, 3, 10]),
        trials: cfg.trials,
        seed: cfg.seed,
        saturate: cfg.saturate,
        ..GradCheckConfig::default()
    };
    let rows = parallel::with_jobs(opts.jobs, || gradcheck::run(&gc))?;
    let mut table = CsvTable::new(["loss", "K", "max_rel_err"])?;
    for r in &rows {
        table.row([r.loss.clone(), r.classes.to_string(), num(r.max_rel_err)])?;
    }
    table.write(&opts.out.join("gradcheck.csv"))?;
    write_manifest(&opts.out, "grad-check", &["gradcheck.csv"])?;
    Ok(rows)
}

/// True when every row is below [`GRAD_TOL`].
pub fn grad_check_passed(rows: &[GradCheckRow]) -> bool {
    rows.iter().all(|r| r.max_rel_err < GRAD_TOL)
}
