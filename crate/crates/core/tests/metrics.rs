mod common;

use common::*;
use probembed::metrics::tau_grid;
use probembed::scorer::Prediction;
use probembed::{accuracy, aupr, auroc, f1_sweep, fpr_at_tpr, ScoredSample};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn sample(confidence: f64, correct: bool) -> ScoredSample<f64> {
    ScoredSample { confidence, correct }
}

#[test]
fn random_sets_match_brute_force() {
    let mut rng = seeded(10);
    for _ in 0..200 {
        let s = random_scored(&mut rng, 200);
        assert!((auroc(&s).unwrap() - brute_auroc(&s)).abs() <= 1e-12);
        assert!((aupr(&s).unwrap() - brute_aupr(&s)).abs() <= 1e-12);
        for target in [0.5, 0.9, 0.95, 1.0] {
            assert!((fpr_at_tpr(&s, target).unwrap() - brute_fpr_at_tpr(&s, target)).abs() <= 1e-12);
        }
    }
}

#[test]
fn degenerate_rankings() {
    let perfect = [sample(0.9, true), sample(0.8, true), sample(0.2, false), sample(0.1, false)];
    assert_eq!(auroc(&perfect).unwrap(), 1.0);
    assert_eq!(aupr(&perfect).unwrap(), 1.0);
    assert_eq!(fpr_at_tpr(&perfect, 0.95).unwrap(), 0.0);

    let flat = [sample(0.5, true), sample(0.5, false), sample(0.5, true), sample(0.5, false)];
    assert_eq!(auroc(&flat).unwrap(), 0.5);
    assert_eq!(fpr_at_tpr(&flat, 0.95).unwrap(), 1.0);
}

#[test]
fn single_positive_ranked_last() {
    // precision at the only recall step is 1/n
    for n in 2..=5 {
        let mut s: Vec<_> = (0..n - 1).map(|i| sample(1.0 - i as f64 * 0.1, false)).collect();
        s.push(sample(0.0, true));
        assert!((aupr(&s).unwrap() - 1.0 / n as f64).abs() < 1e-15);
    }
}

#[test]
fn f1_matches_confusion_counts() {
    let mut rng = seeded(11);
    let taus = tau_grid(100);
    for _ in 0..20 {
        let s = random_scored(&mut rng, 150);
        for (tau, f1) in f1_sweep(&s, &taus) {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for x in &s {
                let retain = 1.0 - x.confidence <= tau;
                match (retain, x.correct) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    (false, false) => {}
                }
            }
            let precision: f64 = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall: f64 = tp / (tp + fn_);
            let want = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            assert!((f1 - want).abs() < 1e-12, "tau {tau}: {f1} vs {want}");
        }
    }
}

#[test]
fn f1_edge_cases() {
    let all_certain = [sample(1.0, true), sample(1.0, true)];
    for (_, f1) in f1_sweep(&all_certain, &tau_grid(10)) {
        assert_eq!(f1, 1.0);
    }
    let unsure = [sample(0.7, true), sample(0.4, false)];
    assert_eq!(f1_sweep(&unsure, &[0.0])[0].1, 0.0);
}

#[test]
fn accuracy_recount_over_shuffles() {
    let mut rng = seeded(12);
    let mut preds: Vec<Prediction> = (0..300)
        .map(|i| Prediction {
            predicted_class: i % 7,
            correct: Some(i % 3 != 0),
        })
        .collect();
    let want = preds.iter().filter(|p| p.correct == Some(true)).count() as f64 / 300.0;
    for _ in 0..5 {
        preds.shuffle(&mut rng);
        assert_eq!(accuracy(&preds).unwrap(), want);
    }
    let two = [
        Prediction { predicted_class: 0, correct: Some(true) },
        Prediction { predicted_class: 1, correct: Some(false) },
    ];
    assert_eq!(accuracy(&two).unwrap(), 0.5);
}

fn scored_set() -> impl Strategy<Value = Vec<ScoredSample<f64>>> {
    // a small value pool forces ties
    (prop::collection::vec((0u8..12, any::<bool>()), 4..120)).prop_map(|v| {
        let mut s: Vec<_> = v
            .into_iter()
            .map(|(level, correct)| sample(level as f64 / 11.0, correct))
            .collect();
        s[0].correct = true;
        s[1].correct = false;
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn auroc_ignores_monotone_transforms(s in scored_set()) {
        let base = auroc(&s).unwrap();
        let squashed: Vec<_> = s.iter().map(|x| sample((3.0 * x.confidence).exp() - 7.0, x.correct)).collect();
        let cubed: Vec<_> = s.iter().map(|x| sample(x.confidence.powi(3), x.correct)).collect();
        prop_assert!((auroc(&squashed).unwrap() - base).abs() < 1e-12);
        prop_assert!((auroc(&cubed).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn auroc_flip_symmetry(s in scored_set()) {
        let flipped: Vec<_> = s.iter().map(|x| sample(-x.confidence, !x.correct)).collect();
        prop_assert!((auroc(&flipped).unwrap() - auroc(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fpr_nonincreasing_as_target_drops(s in scored_set()) {
        let mut prev = f64::INFINITY;
        for i in (0..=20).rev() {
            let v = fpr_at_tpr(&s, i as f64 / 20.0).unwrap();
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn ranking_metrics_ignore_order(s in scored_set(), seed in any::<u64>()) {
        let mut shuffled = s.clone();
        shuffled.shuffle(&mut seeded(seed));
        prop_assert_eq!(auroc(&s).unwrap(), auroc(&shuffled).unwrap());
        prop_assert!((aupr(&s).unwrap() - aupr(&shuffled).unwrap()).abs() < 1e-12);
        prop_assert_eq!(fpr_at_tpr(&s, 0.95).unwrap(), fpr_at_tpr(&shuffled, 0.95).unwrap());
    }
}
