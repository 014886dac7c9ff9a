//! Confusion matrix, recall/precision/F1 and AUROC.
//!
//! A prediction is positive iff `ŷ > threshold` (strict). Ratios with a zero
//! denominator are defined as 0 rather than NaN.

use std::cmp::Ordering;

use crate::dataset::{Dataset, ScoreVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn recall(&self) -> f64 {
        recall(self)
    }

    pub fn precision(&self) -> f64 {
        precision(self)
    }

    pub fn f1(&self) -> f64 {
        f1(self)
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix {
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tp: self.tp + o.tp,
        }
    }
}

/// Outcome of one prediction against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Tp,
    Tn,
    Fp,
    Fn,
}

impl Outcome {
    pub fn of(label: u8, predicted: u8) -> Outcome {
        match (label, predicted) {
            (1, 1) => Outcome::Tp,
            (0, 0) => Outcome::Tn,
            (0, _) => Outcome::Fp,
            _ => Outcome::Fn,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Tp => "TP",
            Outcome::Tn => "TN",
            Outcome::Fp => "FP",
            Outcome::Fn => "FN",
        }
    }
}

pub fn predicted_label(score: f64, threshold: f64) -> u8 {
    (score > threshold) as u8
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::OutOfRange {
            name: "threshold",
            value: threshold,
            expected: "[0, 1]",
        });
    }
    Ok(())
}

pub fn confusion_at_threshold(
    scores: &ScoreVector,
    data: &Dataset,
    threshold: f64,
) -> Result<ConfusionMatrix> {
    check_threshold(threshold)?;
    let aligned = scores.aligned_to(data)?;
    let mut m = ConfusionMatrix::default();
    for (&s, y) in aligned.iter().zip(data.labels()) {
        match Outcome::of(y, predicted_label(s, threshold)) {
            Outcome::Tp => m.tp += 1,
            Outcome::Tn => m.tn += 1,
            Outcome::Fp => m.fp += 1,
            Outcome::Fn => m.fn_ += 1,
        }
    }
    Ok(m)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn recall(m: &ConfusionMatrix) -> f64 {
    ratio(m.tp, m.tp + m.fn_)
}

pub fn precision(m: &ConfusionMatrix) -> f64 {
    ratio(m.tp, m.tp + m.fp)
}

pub fn f1(m: &ConfusionMatrix) -> f64 {
    f1_from(precision(m), recall(m))
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Exact AUROC via the Mann–Whitney rank sum with mid-ranks for ties.
///
/// Equals P(score(pos) > score(neg)) + ½·P(tie).
pub fn auroc(scores: &ScoreVector, data: &Dataset) -> Result<f64> {
    let aligned = scores.aligned_to(data)?;
    let labels: Vec<u8> = data.labels().collect();
    auroc_from_slices(&aligned, &labels)
}

pub fn auroc_from_slices(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::IdMismatch);
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Sum of 1-based mid-ranks over positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub threshold: f64,
    pub matrix: ConfusionMatrix,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub auroc: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "threshold,tn,fp,fn,tp,recall,precision,f1,auroc";

    /// Evaluates `scores` at `threshold`. AUROC is reported as 0 for
    /// single-class data, where it is undefined.
    pub fn evaluate(scores: &ScoreVector, data: &Dataset, threshold: f64) -> Result<Self> {
        let matrix = confusion_at_threshold(scores, data, threshold)?;
        let auroc = match auroc(scores, data) {
            Ok(v) => v,
            Err(Error::SingleClass) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport::from_matrix(matrix, threshold, auroc))
    }

    pub fn from_matrix(matrix: ConfusionMatrix, threshold: f64, auroc: f64) -> Self {
        MetricsReport {
            threshold,
            matrix,
            recall: recall(&matrix),
            precision: precision(&matrix),
            f1: f1(&matrix),
            auroc,
        }
    }

    pub fn csv_row(&self) -> String {
        let m = &self.matrix;
        format!(
            "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            self.threshold,
            m.tn,
            m.fp,
            m.fn_,
            m.tp,
            self.recall,
            self.precision,
            self.f1,
            self.auroc
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(scores: &[f64], labels: &[u8]) -> (ScoreVector, Dataset) {
        let n = scores.len();
        let ids: Vec<u64> = (0..n as u64).collect();
        let d = Dataset::from_rows(vec![vec![0.0]; n], labels.to_vec()).unwrap();
        (ScoreVector::new(ids, scores.to_vec()).unwrap(), d)
    }

    #[test]
    fn threshold_zero_recovers_every_positive() {
        let (s, d) = case(&[0.01, 0.2, 0.9, 0.4, 0.05], &[1, 0, 1, 1, 0]);
        let m = confusion_at_threshold(&s, &d, 0.0).unwrap();
        assert_eq!(m.fn_, 0);
        assert_eq!(recall(&m), 1.0);
    }

    #[test]
    fn score_equal_to_threshold_is_negative() {
        let (s, d) = case(&[0.5, 0.5], &[1, 0]);
        let m = confusion_at_threshold(&s, &d, 0.5).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                tn: 1,
                fp: 0,
                fn_: 1,
                tp: 0
            }
        );
    }

    #[test]
    fn four_examples_by_hand() {
        // (0.9,1)=TP (0.7,0)=FP (0.2,1)=FN (0.1,0)=TN
        let (s, d) = case(&[0.9, 0.7, 0.2, 0.1], &[1, 0, 1, 0]);
        let m = confusion_at_threshold(&s, &d, 0.5).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                tn: 1,
                fp: 1,
                fn_: 1,
                tp: 1
            }
        );
    }

    #[test]
    fn threshold_out_of_range() {
        let (s, d) = case(&[0.5], &[1]);
        assert!(confusion_at_threshold(&s, &d, 1.5).is_err());
        assert!(confusion_at_threshold(&s, &d, -0.1).is_err());
    }

    #[test]
    fn f1_from_table_rows() {
        assert!((f1_from(0.26, 0.98) - 0.41).abs() < 0.005);
        assert!((f1_from(0.59, 0.53) - 0.56).abs() < 0.005);
    }

    #[test]
    fn degenerate_and_simple_ratios() {
        let z = ConfusionMatrix::default();
        assert_eq!((recall(&z), precision(&z), f1(&z)), (0.0, 0.0, 0.0));
        let m = ConfusionMatrix {
            tn: 0,
            fp: 0,
            fn_: 5,
            tp: 5,
        };
        assert_eq!(recall(&m), 0.5);
        assert_eq!(precision(&m), 1.0);
        assert!((f1(&m) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auroc_forced_values() {
        let (s, d) = case(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        assert_eq!(auroc(&s, &d).unwrap(), 1.0);
        let (s, d) = case(&[0.3; 6], &[0, 1, 0, 1, 1, 0]);
        assert_eq!(auroc(&s, &d).unwrap(), 0.5);
        let (s, d) = case(&[0.3, 0.4], &[1, 1]);
        assert!(matches!(auroc(&s, &d), Err(Error::SingleClass)));
    }

    #[test]
    fn auroc_six_by_six_against_pairs() {
        let pos = [0.9, 0.75, 0.6, 0.6, 0.4, 0.2];
        let neg = [0.8, 0.6, 0.5, 0.3, 0.2, 0.1];
        let mut scores = pos.to_vec();
        scores.extend(neg);
        let labels: Vec<u8> = [1u8; 6].into_iter().chain([0u8; 6]).collect();
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        // 6 + 5 + 4.5 + 4.5 + 3 + 1.5 by hand.
        assert_eq!(wins, 24.5);
        let (s, d) = case(&scores, &labels);
        assert!((auroc(&s, &d).unwrap() - wins / 36.0).abs() < 1e-12);
    }

    #[test]
    fn report_csv_row_format() {
        let (s, d) = case(&[0.9, 0.7, 0.2, 0.1], &[1, 0, 1, 0]);
        let r = MetricsReport::evaluate(&s, &d, 0.5).unwrap();
        assert_eq!(r.csv_row(), "0.5,1,1,1,1,0.5000,0.5000,0.5000,0.7500");
    }
}
