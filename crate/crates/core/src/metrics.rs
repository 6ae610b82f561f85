//! Error-detection metrics. The positive class is a correct prediction,
//! i.e. a sample that should be retained.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::scorer::Prediction;

pub const DEFAULT_TPR_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample<T> {
    /// Higher means more likely correct.
    pub confidence: T,
    pub correct: bool,
}

fn counts<T>(samples: &[ScoredSample<T>]) -> (usize, usize) {
    let pos = samples.iter().filter(|s| s.correct).count();
    (pos, samples.len() - pos)
}

fn sorted_desc<T: Scalar>(samples: &[ScoredSample<T>]) -> Vec<ScoredSample<T>> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(Ordering::Equal));
    v
}

/// Cumulative `(tp, fp)` after each group of tied confidences, walking from
/// the highest confidence down.
fn tie_groups<T: Scalar>(samples: &[ScoredSample<T>]) -> Vec<(usize, usize)> {
    let sorted = sorted_desc(samples);
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, s) in sorted.iter().enumerate() {
        if s.correct {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = sorted
            .get(i + 1)
            .is_none_or(|next| next.confidence != s.confidence);
        if last_of_group {
            out.push((tp, fp));
        }
    }
    out
}

/// Mann-Whitney AuROC with average ranks for ties:
/// `P(conf_correct > conf_error) + P(tie) / 2`.
pub fn auroc<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<T> {
    let (pos, neg) = counts(samples);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassOnly);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.confidence.partial_cmp(&b.confidence).unwrap_or(Ordering::Equal));
    // ranks are 1-based; doubled to stay integral under averaging
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].confidence == sorted[i].confidence {
            j += 1;
        }
        let doubled_avg = (i + 1 + j + 1) as u128;
        let group_pos = sorted[i..=j].iter().filter(|s| s.correct).count() as u128;
        doubled_rank_sum += doubled_avg * group_pos;
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(T::lit(doubled_u as f64 / (2.0 * p as f64 * n as f64)))
}

/// Average precision: step-wise area under the precision-recall curve, one
/// threshold per distinct confidence.
pub fn aupr<T: Scalar>(samples: &[ScoredSample<T>]) -> Result<T> {
    let (pos, _) = counts(samples);
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut area = 0.0;
    let mut prev_tp = 0;
    for (tp, fp) in tie_groups(samples) {
        if tp > prev_tp {
            let recall_step = (tp - prev_tp) as f64 / pos as f64;
            area += recall_step * tp as f64 / (tp + fp) as f64;
        }
        prev_tp = tp;
    }
    Ok(T::lit(area))
}

/// Smallest false positive rate over thresholds whose true positive rate
/// reaches `tpr_target`; samples with `confidence >= threshold` are retained.
pub fn fpr_at_tpr<T: Scalar>(samples: &[ScoredSample<T>], tpr_target: T) -> Result<T> {
    let (pos, neg) = counts(samples);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassOnly);
    }
    let target = tpr_target.as_f64();
    if target <= 0.0 {
        // the +inf threshold retains nothing
        return Ok(T::zero());
    }
    // fp only grows as the threshold drops, so the first group reaching the
    // target is optimal
    let fpr = tie_groups(samples)
        .into_iter()
        .find(|&(tp, _)| tp as f64 / pos as f64 >= target)
        .map_or(1.0, |(_, fp)| fp as f64 / neg as f64);
    Ok(T::lit(fpr))
}

/// F1 of the retain-if-`1 - confidence <= tau` rule at every `tau`.
pub fn f1_sweep<T: Scalar>(samples: &[ScoredSample<T>], taus: &[T]) -> Vec<(T, T)> {
    let pos = samples.iter().filter(|s| s.correct).count();
    taus.iter()
        .map(|&tau| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for s in samples {
                if T::one() - s.confidence <= tau {
                    if s.correct {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            (tau, T::lit(f1_from_counts(tp, fp, pos - tp)))
        })
        .collect()
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// `{0.00, 0.01, ..., 1.00}` for `steps = 100`.
pub fn tau_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

pub fn accuracy(predictions: &[Prediction]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut correct = 0;
    for p in predictions {
        match p.correct {
            Some(true) => correct += 1,
            Some(false) => {}
            None => {
                return Err(Error::InvalidArgument(
                    "accuracy needs ground truth for every prediction".into(),
                ))
            }
        }
    }
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub method: String,
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    pub accuracy: f64,
    pub positives: usize,
    pub negatives: usize,
    pub f1_curve: Vec<(f64, f64)>,
}

impl EvaluationReport {
    /// Ranking metrics are NaN when the samples hold only one class.
    pub fn compute<T: Scalar>(
        method: &str,
        samples: &[ScoredSample<T>],
        accuracy: f64,
        taus: &[T],
    ) -> Self {
        let (positives, negatives) = counts(samples);
        let nan = f64::NAN;
        EvaluationReport {
            method: method.to_owned(),
            auroc: auroc(samples).map_or(nan, |v| v.as_f64()),
            aupr: aupr(samples).map_or(nan, |v| v.as_f64()),
            fpr95: fpr_at_tpr(samples, T::lit(DEFAULT_TPR_TARGET)).map_or(nan, |v| v.as_f64()),
            accuracy,
            positives,
            negatives,
            f1_curve: f1_sweep(samples, taus)
                .into_iter()
                .map(|(t, f)| (t.as_f64(), f.as_f64()))
                .collect(),
        }
    }
}

/// Method rows against AuROC / AuPR / FPR95 / Acc columns, in percent.
pub fn format_table(reports: &[EvaluationReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.len())
        .max()
        .unwrap_or(0)
        .max("Method".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
        "Method", "AuROC", "AuPR", "FPR95", "Acc"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 4 * 9));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}  {:>7.2}",
            r.method,
            100.0 * r.auroc,
            100.0 * r.aupr,
            100.0 * r.fpr95,
            100.0 * r.accuracy
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(confidence: f64, correct: bool) -> ScoredSample<f64> {
        ScoredSample { confidence, correct }
    }

    #[test]
    fn perfect_separation() {
        let v = vec![s(0.9, true), s(0.8, true), s(0.3, false), s(0.1, false)];
        assert_eq!(auroc(&v).unwrap(), 1.0);
        assert_eq!(aupr(&v).unwrap(), 1.0);
        assert_eq!(fpr_at_tpr(&v, 0.95).unwrap(), 0.0);
    }

    #[test]
    fn all_ties() {
        let v = vec![s(0.5, true), s(0.5, false), s(0.5, true), s(0.5, false)];
        assert_eq!(auroc(&v).unwrap(), 0.5);
        assert_eq!(fpr_at_tpr(&v, 0.95).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_ranked_last() {
        for n in 1..=5 {
            let mut v: Vec<_> = (0..n - 1).map(|i| s(1.0 - i as f64 * 0.1, false)).collect();
            v.push(s(0.0, true));
            assert!((aupr(&v).unwrap() - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn metric_errors() {
        let pos_only = vec![s(0.2, true), s(0.3, true)];
        assert!(matches!(auroc(&pos_only), Err(Error::SingleClassOnly)));
        assert!(matches!(fpr_at_tpr(&pos_only, 0.95), Err(Error::SingleClassOnly)));
        let neg_only = vec![s(0.2, false)];
        assert!(matches!(aupr(&neg_only), Err(Error::NoPositives)));
        assert!(matches!(accuracy(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn f1_edge_cases() {
        let all_good = vec![s(1.0, true); 5];
        for (_, f1) in f1_sweep(&all_good, &tau_grid(100)) {
            assert_eq!(f1, 1.0);
        }
        let v = vec![s(0.7, true), s(0.4, false)];
        assert_eq!(f1_sweep(&v, &[0.0]), vec![(0.0, 0.0)]);
        assert_eq!(tau_grid(100).len(), 101);
    }

    #[test]
    fn accuracy_counts_correct() {
        let p = |c| Prediction { predicted_class: 0, correct: Some(c) };
        assert_eq!(accuracy(&[p(true), p(true)]).unwrap(), 1.0);
        assert_eq!(accuracy(&[p(true), p(false)]).unwrap(), 0.5);
        let unknown = Prediction { predicted_class: 0, correct: None };
        assert!(accuracy(&[unknown]).is_err());
    }

    #[test]
    fn table_layout() {
        let r = EvaluationReport {
            method: "Ours".into(),
            auroc: 0.9,
            aupr: 0.8,
            fpr95: 0.25,
            accuracy: 0.5,
            positives: 1,
            negatives: 1,
            f1_curve: vec![],
        };
        let t = format_table(&[r]);
        assert!(t.lines().nth(2).unwrap().contains("90.00"));
        assert!(t.lines().nth(2).unwrap().contains("25.00"));
    }
}
