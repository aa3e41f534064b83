//! Evaluation statistics: class-wise accuracy, prediction distribution,
//! confusion counts and clean-subset confidence profiles.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClasswiseReport {
    pub per_class: Vec<f64>,
    pub support: Vec<usize>,
    /// Classes absent from the labels. Their accuracy is reported as 1.
    pub zero_support: Vec<bool>,
    pub overall: f64,
    /// `max - min` of `per_class`.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub predicted: Vec<usize>,
    pub true_positive: Vec<usize>,
}

fn check_pairs(predictions: &[usize], labels: &[usize], classes: usize) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(invalid_input(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if let Some(v) = labels.iter().chain(predictions).find(|&&v| v >= classes) {
        return Err(invalid_input(format!("class {v} out of range for K={classes}")));
    }
    Ok(())
}

pub fn classwise_accuracy(predictions: &[usize], labels: &[usize], classes: usize) -> Result<ClasswiseReport> {
    check_pairs(predictions, labels, classes)?;
    let mut support = vec![0usize; classes];
    let mut correct = vec![0usize; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        support[y] += 1;
        if p == y {
            correct[y] += 1;
        }
    }
    let per_class: Vec<f64> = support
        .iter()
        .zip(&correct)
        .map(|(&s, &c)| if s == 0 { 1.0 } else { c as f64 / s as f64 })
        .collect();
    let total_correct: usize = correct.iter().sum();
    let overall = if labels.is_empty() {
        1.0
    } else {
        total_correct as f64 / labels.len() as f64
    };
    let max = per_class.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = per_class.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ClasswiseReport {
        zero_support: support.iter().map(|&s| s == 0).collect(),
        per_class,
        support,
        overall,
        spread: if classes == 0 { 0.0 } else { max - min },
    })
}

pub fn prediction_distribution(
    predictions: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<PredictionDistribution> {
    check_pairs(predictions, labels, classes)?;
    let mut predicted = vec![0usize; classes];
    let mut true_positive = vec![0usize; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        predicted[p] += 1;
        if p == y {
            true_positive[p] += 1;
        }
    }
    Ok(PredictionDistribution {
        predicted,
        true_positive,
    })
}

/// `counts[true][predicted]`.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    check_pairs(predictions, labels, classes)?;
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        m[y][p] += 1;
    }
    Ok(m)
}

/// Mean predicted distribution over the samples labelled `class` whose
/// label survived corruption (`clean_mask` true). `probabilities` holds one
/// distribution per row.
pub fn clean_subset_confidence(
    probabilities: &Matrix,
    labels: &[usize],
    clean_mask: &[bool],
    class: usize,
) -> Result<Vec<f64>> {
    let n = probabilities.rows();
    if labels.len() != n || clean_mask.len() != n {
        return Err(invalid_input(format!(
            "{n} probability rows, {} labels, {} mask entries",
            labels.len(),
            clean_mask.len()
        )));
    }
    let k = probabilities.cols();
    let mut acc = vec![0.0; k];
    let mut count = 0usize;
    for i in 0..n {
        if clean_mask[i] && labels[i] == class {
            for (a, p) in acc.iter_mut().zip(probabilities.row(i)) {
                *a += p;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptySubset(format!("no clean samples of class {class}")));
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classwise_examples() {
        let r = classwise_accuracy(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(r.per_class, vec![1.0; 3]);
        assert_eq!(r.spread, 0.0);

        let r = classwise_accuracy(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(r.per_class, vec![1.0, 0.0]);
        assert_eq!(r.overall, 0.5);

        let r = classwise_accuracy(&[0, 1, 1, 2], &[0, 0, 1, 2], 3).unwrap();
        assert_eq!(r.per_class, vec![0.5, 1.0, 1.0]);
        assert_eq!(r.overall, 0.75);

        assert!(classwise_accuracy(&[0], &[0, 1], 2).is_err());
        assert!(classwise_accuracy(&[0], &[2], 2).is_err());
    }

    #[test]
    fn zero_support_is_flagged() {
        let r = classwise_accuracy(&[0, 1], &[0, 0], 3).unwrap();
        assert_eq!(r.per_class, vec![0.5, 1.0, 1.0]);
        assert_eq!(r.zero_support, vec![false, true, true]);
    }

    #[test]
    fn distribution_examples() {
        let labels: Vec<usize> = (0..50_000).map(|i| i % 10).collect();
        let d = prediction_distribution(&labels, &labels, 10).unwrap();
        assert!(d.predicted.iter().all(|&c| c == 5000));
        assert_eq!(d.predicted, d.true_positive);

        let d = prediction_distribution(&[2, 2, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(d.predicted, vec![0, 0, 4]);
        assert_eq!(d.true_positive, vec![0, 0, 2]);

        let d = prediction_distribution(&[1, 1], &[0, 1], 2).unwrap();
        assert_eq!(d.predicted, vec![0, 2]);
        assert_eq!(d.true_positive, vec![0, 1]);
    }

    #[test]
    fn confusion_counts() {
        let m = confusion_matrix(&[0, 1, 1, 2], &[0, 0, 1, 2], 3).unwrap();
        assert_eq!(m, vec![vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn confidence_examples() {
        let p = Matrix::new(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(clean_subset_confidence(&p, &[1], &[true], 1).unwrap(), vec![0.0, 1.0, 0.0]);

        let p = Matrix::new(3, 2, vec![0.6, 0.4, 0.4, 0.6, 0.9, 0.1]).unwrap();
        let v = clean_subset_confidence(&p, &[0, 0, 0], &[true, true, false], 0).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);

        assert!(matches!(
            clean_subset_confidence(&p, &[0, 0, 0], &[false; 3], 0),
            Err(Error::EmptySubset(_))
        ));
        assert!(clean_subset_confidence(&p, &[0, 0], &[true; 3], 0).is_err());
    }

    proptest! {
        #[test]
        fn overall_is_support_weighted_mean(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let r = classwise_accuracy(&preds, &labels, 5).unwrap();
            let weighted: f64 = r.per_class.iter().zip(&r.support).map(|(a, &s)| a * s as f64).sum::<f64>()
                / labels.len() as f64;
            prop_assert!((weighted - r.overall).abs() < 1e-12);
            let d = prediction_distribution(&preds, &labels, 5).unwrap();
            let correct = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
            prop_assert_eq!(d.true_positive.iter().sum::<usize>(), correct);
            prop_assert_eq!(d.predicted.iter().sum::<usize>(), labels.len());
            prop_assert!(d.true_positive.iter().zip(&d.predicted).all(|(t, p)| t <= p));
        }

        #[test]
        fn confidence_profile_sums_to_one(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..30)) {
            let n = rows.len();
            let probs: Vec<Vec<f64>> = rows.iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            }).collect();
            let m = Matrix::from_rows(&probs).unwrap();
            let v = clean_subset_confidence(&m, &vec![2; n], &vec![true; n], 2).unwrap();
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
