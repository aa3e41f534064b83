//! Exact checks of noise tolerance on finite problems: clean and noisy
//! risks of fixed classifiers, the symmetric-noise risk identity for RCE,
//! and brute-force minimizer comparison over a simplex grid.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::losses::LossSpec;
use crate::noise::{symmetric_matrix, NoiseModel};
use crate::numerics::{softmax, ProbVector, RngStream};
use crate::parallel;

/// Risks closer than this are treated as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Enumeration limits of [`brute_force_minimizers`].
pub const MAX_SAMPLES: usize = 4;
pub const MAX_CLASSES: usize = 3;
pub const MAX_RESOLUTION: usize = 21;
pub const MAX_TUPLES: usize = 20_000_000;
/// Largest argmin set kept before giving up.
pub const MAX_ARGMIN: usize = 1 << 20;

/// A classifier evaluated on a finite sample: one distribution per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedClassifier {
    pub probs: Vec<ProbVector>,
}

impl FixedClassifier {
    pub fn new(probs: Vec<ProbVector>) -> Result<Self> {
        if let Some(k) = probs.first().map(ProbVector::len) {
            if probs.iter().any(|p| p.len() != k) {
                return Err(invalid_input("classifier outputs differ in length"));
            }
        }
        Ok(Self { probs })
    }

    /// Same distribution on every sample.
    pub fn constant(p: ProbVector, n: usize) -> Self {
        Self { probs: vec![p; n] }
    }

    /// Softmax of standard-normal logits scaled by `temperature`.
    pub fn random(n: usize, classes: usize, temperature: f64, rng: &mut RngStream) -> Result<Self> {
        let probs = (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..classes).map(|_| temperature * rng.normal()).collect();
                softmax(&z)
            })
            .collect::<Result<_>>()?;
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn check(&self, labels: &[usize]) -> Result<usize> {
        if self.probs.len() != labels.len() {
            return Err(invalid_input(format!(
                "{} predictions for {} labels",
                self.probs.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(invalid_input("risk of an empty sample"));
        }
        Ok(self.probs[0].len())
    }
}

/// Mean loss over the samples.
pub fn empirical_risk(f: &FixedClassifier, labels: &[usize], loss: &LossSpec) -> Result<f64> {
    f.check(labels)?;
    let mut total = 0.0;
    for (p, &y) in f.probs.iter().zip(labels) {
        total += loss.value_from_probs(p, y)?;
    }
    Ok(total / labels.len() as f64)
}

/// Expected loss when each label `y` is replaced by `k` with probability
/// `T[y][k]`, computed exactly.
pub fn expected_noisy_risk(
    f: &FixedClassifier,
    labels: &[usize],
    loss: &LossSpec,
    model: &NoiseModel,
) -> Result<f64> {
    let k = f.check(labels)?;
    if model.classes() != k {
        return Err(invalid_param(format!(
            "noise model has {} classes, classifier has {k}",
            model.classes()
        )));
    }
    let mut total = 0.0;
    for (p, &y) in f.probs.iter().zip(labels) {
        total += noisy_sample_loss(loss, p, y, model)?;
    }
    Ok(total / labels.len() as f64)
}

fn noisy_sample_loss(loss: &LossSpec, p: &ProbVector, y: usize, model: &NoiseModel) -> Result<f64> {
    let mut s = 0.0;
    for (k, &t) in model.row(y).iter().enumerate() {
        if t > 0.0 {
            s += t * loss.value_from_probs(p, k)?;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub clean_risk: f64,
    pub noisy_risk_analytic: f64,
    pub predicted_noisy_risk: f64,
    pub residual: f64,
}

/// Compares the exact symmetric-noise RCE risk with
/// `(1 - ηK/(K-1))·R(f) - Aη`.
pub fn verify_symmetric_identity(
    f: &FixedClassifier,
    labels: &[usize],
    eta: f64,
    clamp: f64,
    classes: usize,
) -> Result<RiskReport> {
    let loss = LossSpec::rce(clamp);
    loss.validate()?;
    let model = symmetric_matrix(classes, eta)?;
    let clean_risk = empirical_risk(f, labels, &loss)?;
    let noisy_risk_analytic = expected_noisy_risk(f, labels, &loss, &model)?;
    let k = classes as f64;
    let predicted_noisy_risk = (1.0 - eta * k / (k - 1.0)) * clean_risk - clamp * eta;
    Ok(RiskReport {
        clean_risk,
        noisy_risk_analytic,
        predicted_noisy_risk,
        residual: (noisy_risk_analytic - predicted_noisy_risk).abs(),
    })
}

/// All points of the simplex lattice with `resolution` points per edge,
/// i.e. vectors with entries in `{0, 1/(r-1), ..., 1}` summing to one.
/// Ordered lexicographically by the integer counts.
pub fn simplex_grid(classes: usize, resolution: usize) -> Result<Vec<ProbVector>> {
    if classes == 0 || resolution < 2 {
        return Err(invalid_param(format!(
            "simplex grid needs K >= 1 and resolution >= 2, got K={classes}, resolution={resolution}"
        )));
    }
    let steps = resolution - 1;
    let mut out = Vec::new();
    let mut counts = vec![0usize; classes];
    fn rec(pos: usize, left: usize, steps: usize, counts: &mut Vec<usize>, out: &mut Vec<ProbVector>) -> Result<()> {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            let p = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            out.push(ProbVector::new(p)?);
            return Ok(());
        }
        for c in (0..=left).rev() {
            counts[pos] = c;
            rec(pos + 1, left - c, steps, counts, out)?;
        }
        Ok(())
    }
    rec(0, steps, steps, &mut counts, &mut out)?;
    Ok(out)
}

/// Outcome of an exhaustive minimizer search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerReport {
    pub grid_points: usize,
    pub tuples: usize,
    pub clean_min: f64,
    pub noisy_min: f64,
    /// Every minimizing classifier, one distribution per sample.
    pub clean_argmin: Vec<Vec<ProbVector>>,
    pub noisy_argmin: Vec<Vec<ProbVector>>,
    pub sets_equal: bool,
    /// Whether some grid classifier reaches zero clean risk.
    pub zero_clean_risk: bool,
}

/// Risk value paired with the grid indices of one classifier tuple.
type Scored = Vec<(f64, Vec<usize>)>;

struct Partial {
    clean_min: f64,
    noisy_min: f64,
    clean: Scored,
    noisy: Scored,
}

fn keep(list: &mut Vec<(f64, Vec<usize>)>, min: &mut f64, risk: f64, tuple: &[usize]) {
    if risk < *min - TIE_TOL {
        *min = risk;
        list.retain(|(r, _)| *r <= risk + TIE_TOL);
    }
    if risk <= *min + TIE_TOL {
        *min = min.min(risk);
        list.push((risk, tuple.to_vec()));
    }
}

/// Enumerates every classifier that assigns each sample a point of the
/// simplex grid and returns the minimizers of the clean and of the noisy
/// risk. Work is split over the first sample's grid point and merged in
/// index order.
pub fn brute_force_minimizers(
    labels: &[usize],
    classes: usize,
    loss: &LossSpec,
    model: &NoiseModel,
    resolution: usize,
) -> Result<MinimizerReport> {
    let n = labels.len();
    if n == 0 || n > MAX_SAMPLES || classes > MAX_CLASSES || resolution > MAX_RESOLUTION {
        return Err(Error::ResourceLimit(format!(
            "brute force supports up to {MAX_SAMPLES} samples, K <= {MAX_CLASSES}, resolution <= {MAX_RESOLUTION}; \
             got n={n}, K={classes}, resolution={resolution}"
        )));
    }
    if classes < 2 {
        return Err(invalid_param("brute force needs K >= 2"));
    }
    if model.classes() != classes {
        return Err(invalid_param(format!(
            "noise model has {} classes, K={classes}",
            model.classes()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(invalid_input(format!("label {y} out of range for K={classes}")));
    }
    loss.validate()?;
    let grid = simplex_grid(classes, resolution)?;
    let g = grid.len();
    let tuples = g.checked_pow(n as u32).filter(|&t| t <= MAX_TUPLES).ok_or_else(|| {
        Error::ResourceLimit(format!("{g}^{n} classifier tuples exceed the limit of {MAX_TUPLES}"))
    })?;

    // Per-sample loss tables; risks are sums over samples.
    let mut clean_tab = vec![vec![0.0; g]; n];
    let mut noisy_tab = vec![vec![0.0; g]; n];
    for (i, &y) in labels.iter().enumerate() {
        for (j, p) in grid.iter().enumerate() {
            clean_tab[i][j] = loss.value_from_probs(p, y)?;
            noisy_tab[i][j] = noisy_sample_loss(loss, p, y, model)?;
        }
    }

    let scale = 1.0 / n as f64;
    let partials = parallel::map_indexed(g, |first| {
        let mut part = Partial {
            clean_min: f64::INFINITY,
            noisy_min: f64::INFINITY,
            clean: Vec::new(),
            noisy: Vec::new(),
        };
        let mut tuple = vec![0usize; n];
        tuple[0] = first;
        let inner = tuples / g;
        for mut code in 0..inner {
            for slot in tuple.iter_mut().skip(1).rev() {
                *slot = code % g;
                code /= g;
            }
            let (mut c, mut z) = (0.0, 0.0);
            for (i, &t) in tuple.iter().enumerate() {
                c += clean_tab[i][t];
                z += noisy_tab[i][t];
            }
            keep(&mut part.clean, &mut part.clean_min, c * scale, &tuple);
            keep(&mut part.noisy, &mut part.noisy_min, z * scale, &tuple);
            if part.clean.len() > MAX_ARGMIN || part.noisy.len() > MAX_ARGMIN {
                break;
            }
        }
        part
    });

    let clean_min = partials.iter().map(|p| p.clean_min).fold(f64::INFINITY, f64::min);
    let noisy_min = partials.iter().map(|p| p.noisy_min).fold(f64::INFINITY, f64::min);
    let collect = |pick: fn(&Partial) -> &Scored, min: f64| -> Result<Vec<Vec<usize>>> {
        let mut set = Vec::new();
        for p in &partials {
            let list = pick(p);
            if list.len() > MAX_ARGMIN {
                return Err(Error::ResourceLimit(format!("argmin set exceeds {MAX_ARGMIN} classifiers")));
            }
            set.extend(list.iter().filter(|(r, _)| *r <= min + TIE_TOL).map(|(_, t)| t.clone()));
        }
        Ok(set)
    };
    let clean_set = collect(|p| &p.clean, clean_min)?;
    let noisy_set = collect(|p| &p.noisy, noisy_min)?;
    let to_probs = |set: &[Vec<usize>]| -> Vec<Vec<ProbVector>> {
        set.iter()
            .map(|t| t.iter().map(|&j| grid[j].clone()).collect())
            .collect()
    };
    Ok(MinimizerReport {
        grid_points: g,
        tuples,
        clean_min,
        noisy_min,
        sets_equal: clean_set == noisy_set,
        zero_clean_risk: clean_min.abs() <= TIE_TOL,
        clean_argmin: to_probs(&clean_set),
        noisy_argmin: to_probs(&noisy_set),
    })
}
