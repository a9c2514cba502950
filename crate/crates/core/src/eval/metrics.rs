//! Confusion matrix, threshold metrics and rank AUC. Overfitting is the
//! positive class.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Verdict;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Verdict, gold: Verdict) {
        match (predicted, gold) {
            (Verdict::Overfitting, Verdict::Overfitting) => self.tp += 1,
            (Verdict::Overfitting, Verdict::Correct) => self.fp += 1,
            (Verdict::Correct, Verdict::Overfitting) => self.fn_ += 1,
            (Verdict::Correct, Verdict::Correct) => self.tn += 1,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

fn index_golds(golds: &[(String, Verdict)]) -> HashMap<&str, Verdict> {
    golds.iter().map(|(id, v)| (id.as_str(), *v)).collect()
}

fn check_same_ids<T>(items: &[(String, T)], golds: &HashMap<&str, Verdict>) -> Result<()> {
    let got: BTreeSet<&str> = items.iter().map(|(id, _)| id.as_str()).collect();
    let want: BTreeSet<&str> = golds.keys().copied().collect();
    if got.len() != items.len() {
        return Err(Error::invalid("duplicate ids among predictions"));
    }
    if got != want {
        let diff = got.symmetric_difference(&want).map(|s| s.to_string()).collect();
        return Err(Error::IdMismatch(diff));
    }
    Ok(())
}

/// Errors with the symmetric difference when the id sets differ.
pub fn confusion(predictions: &[(String, Verdict)], golds: &[(String, Verdict)]) -> Result<ConfusionMatrix> {
    let gold = index_golds(golds);
    if gold.len() != golds.len() {
        return Err(Error::invalid("duplicate ids among golds"));
    }
    check_same_ids(predictions, &gold)?;
    let mut cm = ConfusionMatrix::default();
    for (id, p) in predictions {
        cm.record(*p, gold[id.as_str()]);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// A zero denominator makes the ratio 0.0, so an all-negative predictor has
/// precision, recall and F1 of 0. An empty matrix is an error.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("metrics of an empty confusion matrix"));
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy: ratio(cm.tp + cm.tn, total),
        precision,
        recall,
        f1,
    })
}

fn split_by_class(scores: &[(String, f64)], golds: &[(String, Verdict)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let gold = index_golds(golds);
    if gold.len() != golds.len() {
        return Err(Error::invalid("duplicate ids among golds"));
    }
    check_same_ids(scores, &gold)?;
    if let Some((id, _)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::invalid(format!("score for `{id}` is not finite")));
    }
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (id, s) in scores {
        if gold[id.as_str()].is_positive() {
            pos.push(*s);
        } else {
            neg.push(*s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedMetric("AUC needs both classes"));
    }
    Ok((pos, neg))
}

/// P(score_pos > score_neg) + 0.5·P(tie) over all positive/negative pairs,
/// from midranks in O(n log n).
pub fn auc(scores: &[(String, f64)], golds: &[(String, Verdict)]) -> Result<f64> {
    let (pos, neg) = split_by_class(scores, golds)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of positive ranks, ranks doubled to stay integral under ties.
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1..=j, doubled midrank = i+1+j.
        let doubled_mid = (i + 1 + j) as u128;
        let pos_here = all[i..j].iter().filter(|e| e.1).count() as u128;
        rank2_sum += doubled_mid * pos_here;
        i = j;
    }
    let (np, nn) = (pos.len() as u128, neg.len() as u128);
    let u2 = rank2_sum - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// Exhaustive O(P·N) pairwise AUC. Reference implementation for tests.
pub fn auc_pairwise(scores: &[(String, f64)], golds: &[(String, Verdict)]) -> Result<f64> {
    let (pos, neg) = split_by_class(scores, golds)?;
    let mut wins2: u128 = 0;
    for p in &pos {
        for n in &neg {
            wins2 += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    Ok(wins2 as f64 / (2 * pos.len() * neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use Verdict::*;

    fn ids<T: Copy>(xs: &[T]) -> Vec<(String, T)> {
        xs.iter().enumerate().map(|(i, &x)| (format!("s{i}"), x)).collect()
    }

    #[test]
    fn confusion_orientation() {
        let golds = ids(&[Overfitting, Overfitting, Overfitting, Correct, Correct]);
        let preds = ids(&[Overfitting; 5]);
        let cm = confusion(&preds, &golds).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 3, fp: 2, fn_: 0, tn: 0 });
        assert_eq!(confusion(&[], &[]).unwrap(), ConfusionMatrix::default());
    }

    #[test]
    fn confusion_reports_symmetric_difference() {
        let golds = vec![("a".to_string(), Correct), ("b".to_string(), Correct)];
        let preds = vec![("a".to_string(), Correct), ("c".to_string(), Correct)];
        match confusion(&preds, &golds) {
            Err(Error::IdMismatch(d)) => assert_eq!(d, vec!["b".to_string(), "c".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn worked_metrics() {
        let m = metrics(&ConfusionMatrix { tp: 5, fp: 3, fn_: 2, tn: 10 }).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.precision, 0.625);
        assert_abs_diff_eq!(m.recall, 0.714286, epsilon = 1e-6);
        assert_abs_diff_eq!(m.f1, 0.666667, epsilon = 1e-6);

        let m = metrics(&ConfusionMatrix { tp: 0, fp: 0, fn_: 4, tn: 6 }).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 0.6));
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn auc_worked_examples() {
        let golds = ids(&[Overfitting, Overfitting, Correct, Correct]);
        let scores = ids(&[0.9, 0.4, 0.6, 0.1]);
        assert_eq!(auc(&scores, &golds).unwrap(), 0.75);
        assert_eq!(auc(&ids(&[0.3; 4]), &golds).unwrap(), 0.5);
        assert_eq!(auc(&ids(&[1.0, 0.9, 0.2, 0.1]), &golds).unwrap(), 1.0);
        assert!(matches!(
            auc(&ids(&[0.1, 0.2]), &ids(&[Correct, Correct])),
            Err(Error::UndefinedMetric(_))
        ));
    }
}
