//! Seeded synthetic datasets for tests and desk-scale runs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding_store::{EmbeddingMatrix, LabeledDataset, TEST_SPLIT, TRAIN_SPLIT};
use crate::error::Result;

/// Well-separated classes whose errors come from ambiguous test inputs.
///
/// Class `c` is an anisotropic Gaussian around a random unit centroid, with
/// one elongated axis pointing at the centroid of class `c + 1`. The text bank
/// holds the centroids. A `noise_fraction` of test rows are pushed along that
/// axis to just past the midpoint, so the cosine classifier assigns them to
/// the neighbouring class while they stay within their own class's spread.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableConfig {
    pub classes: usize,
    pub dims: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub noise_fraction: f64,
    /// Range of positions along the elongated axis for ambiguous rows, as
    /// fractions of the distance to the neighbouring centroid.
    pub noise_span: (f64, f64),
    /// Per-coordinate standard deviation of the isotropic part.
    pub isotropic_std: f64,
    /// Standard deviation along the elongated axis.
    pub axis_std: f64,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        SeparableConfig {
            classes: 5,
            dims: 32,
            train_per_class: 400,
            test_per_class: 200,
            noise_fraction: 0.1,
            noise_span: (0.5, 0.6),
            isotropic_std: 0.05,
            axis_std: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBundle {
    pub dataset: LabeledDataset,
    pub text_bank: EmbeddingMatrix<f32>,
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn to_rows_f32(rows: &[DVector<f64>]) -> Vec<Vec<f32>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| v as f32).collect())
        .collect()
}

pub fn separable(cfg: &SeparableConfig) -> Result<SyntheticBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (c, d) = (cfg.classes, cfg.dims);
    let centroids: Vec<DVector<f64>> = (0..c).map(|_| normal_vec(&mut rng, d).normalize()).collect();
    let axes: Vec<DVector<f64>> = (0..c)
        .map(|i| (&centroids[(i + 1) % c] - &centroids[i]).normalize())
        .collect();
    let gap: Vec<f64> = (0..c)
        .map(|i| (&centroids[(i + 1) % c] - &centroids[i]).norm())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut train = Vec::new();
    let mut test = Vec::new();

    let draw = |rng: &mut ChaCha8Rng, class: usize, along: Option<f64>| {
        let iso = normal_vec(rng, d) * cfg.isotropic_std;
        let t = match along {
            Some(t) => t,
            None => {
                let e: f64 = StandardNormal.sample(rng);
                e * cfg.axis_std
            }
        };
        &centroids[class] + &axes[class] * t + iso
    };

    for class in 0..c {
        for _ in 0..cfg.train_per_class {
            train.push(rows.len());
            rows.push(draw(&mut rng, class, None));
            labels.push(class as u32);
        }
        let noisy = (cfg.test_per_class as f64 * cfg.noise_fraction).round() as usize;
        for i in 0..cfg.test_per_class {
            let along = (i < noisy).then(|| rng.random_range(cfg.noise_span.0..cfg.noise_span.1) * gap[class]);
            test.push(rows.len());
            rows.push(draw(&mut rng, class, along));
            labels.push(class as u32);
        }
    }

    let embeddings = EmbeddingMatrix::from_rows(&to_rows_f32(&rows))?;
    let text_bank = EmbeddingMatrix::from_rows(&to_rows_f32(&centroids))?;
    let dataset = LabeledDataset::new(
        embeddings,
        labels,
        (0..c).map(|i| format!("class_{i}")).collect(),
        BTreeMap::from([(TRAIN_SPLIT.to_owned(), train), (TEST_SPLIT.to_owned(), test)]),
        true,
    )?;
    Ok(SyntheticBundle { dataset, text_bank })
}

/// Classes sharing a covariance with eigenvalues `1/i^2` in a random basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropicConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dims: usize,
    /// Standard deviation of the class-mean offsets.
    pub mean_spread: f64,
    pub seed: u64,
}

impl Default for AnisotropicConfig {
    fn default() -> Self {
        AnisotropicConfig {
            classes: 20,
            per_class: 200,
            dims: 512,
            mean_spread: 0.01,
            seed: 0,
        }
    }
}

/// All rows land in the `train` split; features are used unnormalized.
pub fn anisotropic(cfg: &AnisotropicConfig) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dims;
    let gauss: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let rotation = gauss.qr().q();
    let scales = DVector::from_fn(d, |i, _| 1.0 / (i + 1) as f64);

    let mut rows = Vec::with_capacity(cfg.classes * cfg.per_class);
    let mut labels = Vec::with_capacity(rows.capacity());
    for class in 0..cfg.classes {
        let mean = normal_vec(&mut rng, d) * cfg.mean_spread;
        for _ in 0..cfg.per_class {
            let e = normal_vec(&mut rng, d).component_mul(&scales);
            rows.push(&mean + &rotation * e);
            labels.push(class as u32);
        }
    }
    let all: Vec<usize> = (0..rows.len()).collect();
    LabeledDataset::new(
        EmbeddingMatrix::from_rows(&to_rows_f32(&rows))?,
        labels,
        (0..cfg.classes).map(|i| format!("class_{i}")).collect(),
        BTreeMap::from([(TRAIN_SPLIT.to_owned(), all)]),
        false,
    )
}
