//! Label-noise transition matrices and seeded label corruption.
//!
//! `T[y][k]` is the probability that a sample whose true class is `y` is
//! observed with label `k`. Symmetric noise spreads `eta` evenly over the
//! other classes; pair-flip noise moves `eta` of a class onto one designated
//! partner class.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Row-sum tolerance for a transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// The MNIST class-dependent flips: 2→7, 3→8, 5↔6, 7→1.
pub const MNIST_FLIPS: [(usize, usize); 5] = [(2, 7), (3, 8), (5, 6), (6, 5), (7, 1)];

/// A row-stochastic K×K label-transition matrix with its nominal rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    classes: usize,
    matrix: Matrix,
    eta: f64,
}

/// Result of corrupting a label sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub noisy_labels: Vec<usize>,
    /// `true` where the observed label equals the original one.
    pub clean_mask: Vec<bool>,
    pub realized_rate: f64,
}

impl NoiseModel {
    /// Wraps a square matrix after checking entries lie in `[0, 1]` and every
    /// row sums to one.
    pub fn from_matrix(matrix: Matrix, eta: f64) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r == 0 {
            return Err(invalid_param(format!("transition matrix must be square, got {r}x{c}")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid_param(format!("noise rate {eta} outside [0, 1]")));
        }
        for (y, row) in matrix.iter_rows().enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(invalid_param(format!("transition entry {v} in row {y} outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(invalid_param(format!("transition row {y} sums to {s}")));
            }
        }
        Ok(Self {
            classes: r,
            matrix,
            eta,
        })
    }

    pub fn identity(classes: usize) -> Self {
        Self {
            classes,
            matrix: Matrix::identity(classes),
            eta: 0.0,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Nominal noise rate the model was built with.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn entry(&self, truth: usize, observed: usize) -> f64 {
        self.matrix.get(truth, observed)
    }

    pub fn row(&self, truth: usize) -> &[f64] {
        self.matrix.row(truth)
    }

    /// Diagonal dominance: every off-diagonal entry is strictly below the
    /// diagonal entry of its row.
    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.classes).all(|y| {
            let d = self.entry(y, y);
            (0..self.classes).all(|k| k == y || self.entry(y, k) < d)
        })
    }

    /// Row-per-line, space-separated decimal block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in self.matrix.iter_rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parses the block written by [`NoiseModel::to_text`].
    pub fn from_text(text: &str, eta: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad matrix entry {t:?}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let m = Matrix::from_rows(&rows).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_matrix(m, eta)
    }

    /// Replaces every label with a draw from its transition row.
    ///
    /// Exactly one uniform is consumed per label and mapped through the
    /// row's inverse CDF, so a given stream always yields the same labels.
    pub fn corrupt(&self, labels: &[usize], rng: &mut RngStream) -> Result<CorruptionRecord> {
        if let Some(&y) = labels.iter().find(|&&y| y >= self.classes) {
            return Err(invalid_input(format!("label {y} out of range for K={}", self.classes)));
        }
        let mut noisy_labels = Vec::with_capacity(labels.len());
        let mut clean_mask = Vec::with_capacity(labels.len());
        for &y in labels {
            let u = rng.uniform();
            let k = inverse_cdf(self.row(y), u);
            noisy_labels.push(k);
            clean_mask.push(k == y);
        }
        let flipped = clean_mask.iter().filter(|c| !**c).count();
        let realized_rate = if labels.is_empty() {
            0.0
        } else {
            flipped as f64 / labels.len() as f64
        };
        Ok(CorruptionRecord {
            noisy_labels,
            clean_mask,
            realized_rate,
        })
    }
}

fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &w) in row.iter().enumerate() {
        acc += w;
        if u < acc && w > 0.0 {
            return k;
        }
    }
    // u landed in the rounding gap above the accumulated mass
    row.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Uniform noise: keep the label with probability `1 - eta`, otherwise move
/// to one of the other `K - 1` classes uniformly.
pub fn symmetric_matrix(classes: usize, eta: f64) -> Result<NoiseModel> {
    if classes < 2 {
        return Err(invalid_param(format!("symmetric noise needs K >= 2, got {classes}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid_param(format!("noise rate {eta} outside [0, 1]")));
    }
    let off = eta / (classes - 1) as f64;
    let m = Matrix::from_fn(classes, classes, |i, j| if i == j { 1.0 - eta } else { off });
    NoiseModel::from_matrix(m, eta)
}

/// Class-dependent flips. Each `(from, to)` pair moves `eta` of class
/// `from` onto `to`; a two-way swap is written as two pairs.
pub fn pairflip_matrix(classes: usize, eta: f64, pairs: &[(usize, usize)]) -> Result<NoiseModel> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid_param(format!("noise rate {eta} outside [0, 1]")));
    }
    let mut m = Matrix::identity(classes);
    let mut seen = vec![false; classes];
    for &(from, to) in pairs {
        if from >= classes || to >= classes {
            return Err(invalid_param(format!("flip {from}->{to} out of range for K={classes}")));
        }
        if from == to {
            return Err(invalid_param(format!("flip {from}->{to} maps a class onto itself")));
        }
        if seen[from] {
            return Err(invalid_param(format!("class {from} appears twice as a flip source")));
        }
        seen[from] = true;
        m.set(from, from, 1.0 - eta);
        m.set(from, to, eta);
    }
    NoiseModel::from_matrix(m, eta)
}

/// Noise-tolerance precondition for class-dependent noise: the true class keeps the
/// largest share of every row.
pub fn check_asymmetric_condition(model: &NoiseModel) -> bool {
    model.is_diagonally_dominant()
}

/// Picks two distinct members of every group at random and swaps them both
/// ways. Groups with fewer than two members are skipped.
pub fn sample_group_pairs(groups: &[Vec<usize>], rng: &mut RngStream) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for g in groups {
        if g.len() < 2 {
            continue;
        }
        let i = rng.below(g.len());
        let mut j = rng.below(g.len() - 1);
        if j >= i {
            j += 1;
        }
        pairs.push((g[i], g[j]));
        pairs.push((g[j], g[i]));
    }
    pairs
}
