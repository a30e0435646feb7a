use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true classes, columns predictions. Invalid predictions
/// (ambiguous or unparseable model output) are kept per true class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub invalid: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
            invalid: vec![0; classes],
        }
    }

    /// From square counts with no invalid predictions.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let c = counts.len();
        assert!(counts.iter().all(|r| r.len() == c), "confusion matrix must be square");
        ConfusionMatrix {
            counts,
            invalid: vec![0; c],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// Records one prediction; `None` is an invalid output.
    pub fn record(&mut self, truth: usize, predicted: Option<usize>) {
        match predicted {
            Some(p) => self.counts[truth][p] += 1,
            None => self.invalid[truth] += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
        for (a, b) in self.invalid.iter_mut().zip(&other.invalid) {
            *a += b;
        }
    }

    /// Valid predictions only.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn invalid_count(&self) -> u64 {
        self.invalid.iter().sum()
    }

    /// Valid plus invalid predictions.
    pub fn evaluated(&self) -> u64 {
        self.total() + self.invalid_count()
    }

    pub fn invalid_rate(&self) -> f64 {
        match self.evaluated() {
            0 => 0.0,
            n => self.invalid_count() as f64 / n as f64,
        }
    }

    /// The same matrix with invalid predictions dropped.
    pub fn valid_only(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: self.counts.clone(),
            invalid: vec![0; self.classes()],
        }
    }

    fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() + self.invalid[class]
    }

    fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Per-class F1; 0 when precision + recall is 0.
    pub fn f1_per_class(&self) -> Vec<f64> {
        (0..self.classes())
            .map(|c| {
                let tp = self.counts[c][c] as f64;
                let predicted = self.predicted(c) as f64;
                let support = self.support(c) as f64;
                let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
                let recall = if support > 0.0 { tp / support } else { 0.0 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Macro,
    /// Weighted by class support (invalid predictions included).
    Weighted,
}

pub fn f_score(cm: &ConfusionMatrix, averaging: Averaging) -> Result<f64, EvalError> {
    if cm.evaluated() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let f1 = cm.f1_per_class();
    Ok(match averaging {
        Averaging::Macro => f1.iter().sum::<f64>() / f1.len() as f64,
        Averaging::Weighted => {
            let total = cm.evaluated() as f64;
            f1.iter()
                .enumerate()
                .map(|(c, f)| f * cm.support(c) as f64 / total)
                .sum()
        }
    })
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    f_score(cm, Averaging::Macro)
}

/// Correct predictions over all evaluated instances, invalid ones included.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    if cm.evaluated() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let trace: u64 = (0..cm.classes()).map(|c| cm.counts[c][c]).sum();
    Ok(trace as f64 / cm.evaluated() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_predictions() {
        let cm = ConfusionMatrix::from_counts(vec![vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 7]]);
        assert_eq!(macro_f1(&cm).unwrap(), 1.0);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn two_class_example() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![2, 4]]);
        // class 0: P 3/5, R 3/4 -> 2/3; class 1: P 4/5, R 4/6 -> 8/11
        assert_abs_diff_eq!(macro_f1(&cm).unwrap(), 23.0 / 33.0, epsilon = 1e-12);
        assert_abs_diff_eq!(accuracy(&cm).unwrap(), 0.7, epsilon = 1e-12);
        // sklearn weighted average for the same predictions
        assert_abs_diff_eq!(f_score(&cm, Averaging::Weighted).unwrap(), 0.703_030_303_030_303, epsilon = 1e-12);
    }

    #[test]
    fn single_predicted_class() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 0], vec![5, 0]]);
        assert_abs_diff_eq!(macro_f1(&cm).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_predictions_are_false_negatives() {
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..5 {
            cm.record(0, Some(0));
            cm.record(1, Some(1));
        }
        cm.record(0, None);
        cm.record(1, None);
        assert_abs_diff_eq!(accuracy(&cm).unwrap(), 10.0 / 12.0, epsilon = 1e-12);
        // P = 1, R = 5/6 for both classes
        assert_abs_diff_eq!(macro_f1(&cm).unwrap(), 2.0 * (5.0 / 6.0) / (1.0 + 5.0 / 6.0), epsilon = 1e-12);
        assert_eq!(macro_f1(&cm.valid_only()).unwrap(), 1.0);
        assert_abs_diff_eq!(cm.invalid_rate(), 2.0 / 12.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_matrix() {
        assert_eq!(macro_f1(&ConfusionMatrix::new(3)), Err(EvalError::EmptyMatrix));
        assert_eq!(accuracy(&ConfusionMatrix::new(3)), Err(EvalError::EmptyMatrix));
        let mut all_invalid = ConfusionMatrix::new(2);
        all_invalid.record(0, None);
        assert_eq!(macro_f1(&all_invalid).unwrap(), 0.0);
    }

    #[test]
    fn merge_adds_cells() {
        let mut a = ConfusionMatrix::from_counts(vec![vec![1, 0], vec![0, 1]]);
        let mut b = ConfusionMatrix::new(2);
        b.record(0, Some(1));
        b.record(1, None);
        a.merge(&b);
        assert_eq!(a.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(a.invalid, vec![0, 1]);
        assert_eq!(a.evaluated(), 4);
    }
}
