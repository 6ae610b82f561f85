//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use probembed::ScoredSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of (correct, error) pairs ranked correctly, ties counting half.
pub fn brute_auroc(s: &[ScoredSample<f64>]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for p in s.iter().filter(|x| x.correct) {
        for n in s.iter().filter(|x| !x.correct) {
            pairs += 1.0;
            if p.confidence > n.confidence {
                num += 1.0;
            } else if p.confidence == n.confidence {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn thresholds_desc(s: &[ScoredSample<f64>]) -> Vec<f64> {
    let mut t: Vec<f64> = s.iter().map(|x| x.confidence).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

/// `(tp, fp)` when retaining every sample with `confidence >= t`.
fn retained(s: &[ScoredSample<f64>], t: f64) -> (usize, usize) {
    let tp = s.iter().filter(|x| x.correct && x.confidence >= t).count();
    let fp = s.iter().filter(|x| !x.correct && x.confidence >= t).count();
    (tp, fp)
}

/// Sum over thresholds of `(recall gained) * precision`.
pub fn brute_aupr(s: &[ScoredSample<f64>]) -> f64 {
    let pos = s.iter().filter(|x| x.correct).count() as f64;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for t in thresholds_desc(s) {
        let (tp, fp) = retained(s, t);
        let recall = tp as f64 / pos;
        if tp > 0 {
            area += (recall - prev_recall) * tp as f64 / (tp + fp) as f64;
        }
        prev_recall = recall;
    }
    area
}

/// Minimum FPR over every threshold with TPR at or above `target`.
pub fn brute_fpr_at_tpr(s: &[ScoredSample<f64>], target: f64) -> f64 {
    let pos = s.iter().filter(|x| x.correct).count() as f64;
    let neg = s.len() as f64 - pos;
    let mut best = if target <= 0.0 { 0.0 } else { 1.0 };
    for t in thresholds_desc(s) {
        let (tp, fp) = retained(s, t);
        if tp as f64 / pos >= target {
            best = f64::min(best, fp as f64 / neg);
        }
    }
    best
}

/// Scored set with a random tie pattern: confidences are drawn from a pool
/// of `levels` values, or continuous when `levels == 0`.
pub fn random_scored(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredSample<f64>> {
    let levels = [0, 2, 3, 5, 10, 40][rng.random_range(0..6)];
    let pool: Vec<f64> = (0..levels.max(1)).map(|_| rng.random::<f64>()).collect();
    let p_correct = rng.random_range(0.2..0.9);
    let mut out: Vec<ScoredSample<f64>> = (0..n)
        .map(|_| {
            let confidence = if levels == 0 {
                rng.random::<f64>()
            } else {
                pool[rng.random_range(0..levels)]
            };
            ScoredSample {
                confidence,
                correct: rng.random_bool(p_correct),
            }
        })
        .collect();
    // both classes present
    out[0].correct = true;
    out[1].correct = false;
    out
}

/// `log N(z; mean, cov)` through an explicit inverse and LU determinant.
pub fn naive_log_pdf(mean: &DVector<f64>, cov: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    let k = mean.len() as f64;
    let inv = cov.clone().try_inverse().expect("invertible");
    let d = z - mean;
    let maha = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + maha)
}

/// Symmetric positive definite `A Aᵀ + eps I`.
pub fn random_spd(rng: &mut ChaCha8Rng, k: usize, eps: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(k, k) * eps
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
