mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use probembed::synthetic::{self, SeparableConfig};
use probembed::{
    build_dictionary, fit_class_gaussian, fit_pca, partition_by_class, ClassGaussian, CovarianceKind,
    EmbeddingMatrix, TRAIN_SPLIT,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn log_pdf_matches_dense_inverse() {
    let mut rng = seeded(20);
    for k in [1, 3, 16] {
        let cov = random_spd(&mut rng, k, 0.05);
        let mean = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
        let g = ClassGaussian::full(mean.clone(), cov.clone(), 10).unwrap();
        for _ in 0..50 {
            let z = DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0));
            let got = g.log_pdf(z.as_slice()).unwrap();
            assert!((got - naive_log_pdf(&mean, &cov, &z)).abs() < 1e-9);
        }
    }
}

#[test]
fn mode_is_at_the_mean() {
    let mut rng = seeded(21);
    for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect())
            .collect();
        let g = fit_class_gaussian(&EmbeddingMatrix::from_rows(&rows).unwrap(), kind).unwrap();
        let peak = g.log_pdf(g.mean().as_slice()).unwrap();
        for _ in 0..1000 {
            let z: Vec<f64> = g.mean().iter().map(|m| m + rng.random_range(-5.0..5.0)).collect();
            assert!(g.log_pdf(&z).unwrap() <= peak);
        }
    }
}

#[test]
fn full_and_diagonal_paths_agree_on_diagonal_covariance() {
    let mut rng = seeded(22);
    let k = 7;
    let vars = DVector::from_fn(k, |_, _| rng.random_range(0.1..3.0));
    let mean = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    let full = ClassGaussian::full(mean.clone(), DMatrix::from_diagonal(&vars), 5).unwrap();
    let diag = ClassGaussian::diagonal(mean, vars, 5).unwrap();
    for _ in 0..200 {
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
        assert!((full.log_pdf(&z).unwrap() - diag.log_pdf(&z).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn densities_integrate_to_one() {
    // midpoint rule over +-8 sd
    let g = ClassGaussian::diagonal(DVector::from_element(1, -1.0), DVector::from_element(1, 0.25), 2).unwrap();
    let n = 2000;
    let (lo, h) = (-1.0 - 8.0 * 0.5, 16.0 * 0.5 / n as f64);
    let mass: f64 = (0..n)
        .map(|i| g.log_pdf(&[lo + (i as f64 + 0.5) * h]).unwrap().exp() * h)
        .sum();
    assert!((mass - 1.0).abs() < 1e-3);

    let cov = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.0]);
    let g = ClassGaussian::full(DVector::zeros(2), cov, 3).unwrap();
    let (n, half) = (300, 8.0 * 2.0_f64.sqrt());
    let h = 2.0 * half / n as f64;
    let mut mass = 0.0;
    for i in 0..n {
        for j in 0..n {
            let z = [-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h];
            mass += g.log_pdf(&z).unwrap().exp() * h * h;
        }
    }
    assert!((mass - 1.0).abs() < 1e-3);
}

#[test]
fn singular_covariance_gets_a_ridge() {
    // rank one: every larger ridge must also factor
    let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let cov = &v * v.transpose();
    let g = ClassGaussian::full(DVector::zeros(3), cov.clone(), 2).unwrap();
    assert!(g.ridge() > 0.0);
    let mut eps = g.ridge();
    for _ in 0..8 {
        eps *= 10.0;
        let ridged = &cov + DMatrix::identity(3, 3) * eps;
        let h = ClassGaussian::full(DVector::zeros(3), ridged, 2).unwrap();
        assert!(h.log_pdf(&[0.1_f64, 0.2, 0.3]).unwrap().is_finite());
    }
}

#[test]
fn monte_carlo_fit_recovers_parameters() {
    let mut rng = seeded(23);
    let k = 8;
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.6..0.6));
    let sigma = &a * a.transpose() + DMatrix::identity(k, k) * 0.5;
    let l = sigma.clone().cholesky().unwrap().l();
    let mu = DVector::from_fn(k, |i, _| i as f64 - 3.0);
    let n = 50;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let e = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            (&mu + &l * e).iter().copied().collect()
        })
        .collect();
    let g = fit_class_gaussian(&EmbeddingMatrix::from_rows(&rows).unwrap(), CovarianceKind::Full).unwrap();
    for i in 0..k {
        let se = (sigma[(i, i)] / n as f64).sqrt();
        assert!((g.mean()[i] - mu[i]).abs() < 3.0 * se, "coordinate {i}");
    }
    let rel = (g.covariance_matrix() - &sigma).norm() / sigma.norm();
    assert!(rel < 0.5, "relative Frobenius error {rel}");
}

#[test]
fn dictionary_build_contract() {
    let bundle = synthetic::separable(&SeparableConfig {
        classes: 3,
        train_per_class: 100,
        test_per_class: 10,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let ds = &bundle.dataset;
    let features = ds.features::<f64>().unwrap();
    let train = ds.split(TRAIN_SPLIT).unwrap();
    let pca = fit_pca(&features.select_rows(train), 12).unwrap();

    let dict = build_dictionary(ds, &pca, CovarianceKind::Full, None, 0).unwrap();
    assert_eq!(dict.len(), 3);
    assert!(dict.iter().all(|(_, g)| g.sample_count() == 100));

    let a = build_dictionary(ds, &pca, CovarianceKind::Diagonal, Some(10), 9).unwrap();
    let b = build_dictionary(ds, &pca, CovarianceKind::Diagonal, Some(10), 9).unwrap();
    assert!(a.iter().all(|(_, g)| g.sample_count() == 10));
    assert_eq!(a.to_bytes(), b.to_bytes());

    // means mapped back to input space sit near the raw class means, up to
    // the part of the mean outside the retained subspace
    for p in partition_by_class(ds, TRAIN_SPLIT).unwrap().partitions {
        let raw = features.select_rows(&p.row_indices).to_dmatrix();
        let raw_mean = DVector::from_fn(raw.ncols(), |j, _| raw.column(j).mean());
        let back = pca.reconstruct(dict.get(p.class_index).unwrap().mean());
        let offset = &raw_mean - pca.global_mean();
        let residual = &offset - pca.basis() * (pca.basis().transpose() * &offset);
        assert!(((&raw_mean - back).norm() - residual.norm()).abs() < 1e-9);
    }
}
