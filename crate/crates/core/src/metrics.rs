//! Binary classification metrics against a chosen positive class.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::forest::{ForestError, RandomForest};

/// Confusion counts with respect to one positive class. Every other class
/// counts as negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// As a 2x2 matrix, rows = actual (positive, negative), columns =
    /// predicted (positive, negative).
    pub fn matrix(&self) -> [[u64; 2]; 2] {
        [[self.tp, self.fn_], [self.fp, self.tn]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub n_samples: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Metrics from confusion counts. Undefined ratios are reported as 0.
    ///
    /// Accuracy counts every correct prediction, so for multi-class data it
    /// is not `(tp + tn) / n`; `correct` carries that count.
    pub fn from_confusion(confusion: Confusion, correct: u64) -> Self {
        let n = confusion.total();
        let precision = ratio(confusion.tp, confusion.tp + confusion.fp);
        let recall = ratio(confusion.tp, confusion.tp + confusion.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            accuracy: ratio(correct, n),
            precision,
            recall,
            f1,
            confusion,
            n_samples: n,
        }
    }

    pub fn from_predictions(actual: &[u32], predicted: &[u32], positive: u32) -> Self {
        assert_eq!(actual.len(), predicted.len());
        let mut c = Confusion::default();
        let mut correct = 0;
        for (&a, &p) in actual.iter().zip(predicted) {
            correct += u64::from(a == p);
            match (a == positive, p == positive) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Self::from_confusion(c, correct)
    }
}

/// Scores `forest` on every row of `data`.
pub fn evaluate(
    forest: &RandomForest,
    data: &Dataset,
    positive_label: u32,
) -> Result<Metrics, ForestError> {
    if data.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    forest.check_dataset(data)?;
    if positive_label as usize >= forest.n_classes() {
        return Err(ForestError::UnknownLabel(positive_label));
    }
    let predicted = forest.predict_all(data)?;
    Ok(Metrics::from_predictions(
        data.labels(),
        &predicted,
        positive_label,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let m = Metrics::from_predictions(&[0, 1, 1, 0], &[0, 1, 1, 0], 1);
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn textbook_counts() {
        let c = Confusion {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 6,
        };
        let m = Metrics::from_confusion(c, 8);
        assert!((m.accuracy - 0.8).abs() < 1e-15);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.n_samples, 10);
    }

    #[test]
    fn no_positive_predictions() {
        let m = Metrics::from_predictions(&[1, 0, 0], &[0, 0, 0], 1);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_layout() {
        let m = Metrics::from_predictions(&[1, 1, 0, 0, 0], &[1, 0, 1, 0, 0], 1);
        assert_eq!(m.confusion.matrix(), [[1, 1], [1, 2]]);
    }
}
