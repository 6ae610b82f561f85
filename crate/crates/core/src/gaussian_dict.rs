//! Per-class Gaussians over projected features.
//!
//! Dictionary file layout (little-endian):
//!
//! ```text
//! "VLMD" | version u32 | kind u8 (0 = full, 1 = diagonal) | class count u64 |
//! per class: class_index u32 | sample_count u64 | mean (k f64) | covariance (k*k or k f64)
//! ```
//!
//! `k` is implied by the payload length. Factorizations are recomputed on load.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding_store::{partition_rows, EmbeddingMatrix, LabeledDataset, TRAIN_SPLIT};
use crate::error::{Error, Result};
use crate::format::{self, Reader, Writer, DICTIONARY_MAGIC};
use crate::num::Scalar;
use crate::projector::{centered, column_mean, PcaModel};

/// Floor for diagonal variances, in projected-space units.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Ridge strength relative to the mean variance `trace(Σ)/k`.
pub const RIDGE_SCALE: f64 = 1e-6;

const MAX_RIDGE_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Full,
    #[serde(rename = "diag")]
    Diagonal,
}

impl CovarianceKind {
    pub fn code(self) -> u8 {
        match self {
            CovarianceKind::Full => 0,
            CovarianceKind::Diagonal => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CovarianceKind::Full),
            1 => Some(CovarianceKind::Diagonal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CovarianceKind::Full => "full",
            CovarianceKind::Diagonal => "diag",
        }
    }
}

impl std::str::FromStr for CovarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CovarianceKind::Full),
            "diag" | "diagonal" => Ok(CovarianceKind::Diagonal),
            other => Err(Error::InvalidArgument(format!(
                "covariance kind must be `full` or `diag`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Covariance<T: Scalar> {
    Full {
        matrix: DMatrix<T>,
        /// Lower Cholesky factor of `matrix`.
        factor: DMatrix<T>,
    },
    Diagonal {
        variances: DVector<T>,
    },
}

/// Multivariate normal with a cached factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGaussian<T: Scalar> {
    mean: DVector<T>,
    covariance: Covariance<T>,
    log_det: T,
    sample_count: usize,
    ridge: T,
}

fn cholesky_factor<T: Scalar>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    l.diagonal()
        .iter()
        .all(|&p| p > T::zero() && p.is_finite())
        .then_some(l)
}

impl<T: Scalar> ClassGaussian<T> {
    /// Gaussian with a full covariance. `ridge_required` forces the ridge
    /// even if the plain factorization would succeed.
    fn full_with_policy(
        mean: DVector<T>,
        cov: DMatrix<T>,
        sample_count: usize,
        ridge_required: bool,
    ) -> Result<Self> {
        let k = mean.len();
        if cov.shape() != (k, k) {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                found: cov.len(),
            });
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("covariance has non-finite entries".into()));
        }
        let cov = (&cov + cov.transpose()) * T::lit(0.5);

        let mut matrix = cov.clone();
        let mut ridge = T::zero();
        let mut factor = if ridge_required {
            None
        } else {
            cholesky_factor(&cov)
        };
        if factor.is_none() {
            let mean_var = cov.trace() / T::lit(k as f64);
            let base = if mean_var > T::lit(VARIANCE_FLOOR) {
                mean_var
            } else {
                T::lit(VARIANCE_FLOOR)
            };
            ridge = base * T::lit(RIDGE_SCALE);
            for _ in 0..MAX_RIDGE_ATTEMPTS {
                matrix = &cov + DMatrix::identity(k, k) * ridge;
                factor = cholesky_factor(&matrix);
                if factor.is_some() {
                    break;
                }
                ridge *= T::lit(10.0);
            }
        }
        let factor = factor.ok_or_else(|| {
            Error::Factorization(format!("no positive pivots after ridge {ridge}"))
        })?;
        let log_det = factor
            .diagonal()
            .iter()
            .fold(T::zero(), |acc, &p| acc + p.ln())
            * T::lit(2.0);
        Ok(ClassGaussian {
            mean,
            covariance: Covariance::Full { matrix, factor },
            log_det,
            sample_count,
            ridge,
        })
    }

    /// Full-covariance Gaussian. A ridge is added only if factorization fails.
    pub fn full(mean: DVector<T>, cov: DMatrix<T>, sample_count: usize) -> Result<Self> {
        Self::full_with_policy(mean, cov, sample_count, false)
    }

    /// Diagonal Gaussian; variances are clamped to [`VARIANCE_FLOOR`].
    pub fn diagonal(mean: DVector<T>, variances: DVector<T>, sample_count: usize) -> Result<Self> {
        if variances.len() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: variances.len(),
            });
        }
        if variances.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("variance is not finite".into()));
        }
        let floor = T::lit(VARIANCE_FLOOR);
        let variances = variances.map(|v| if v < floor { floor } else { v });
        let log_det = variances.iter().fold(T::zero(), |acc, &v| acc + v.ln());
        Ok(ClassGaussian {
            mean,
            covariance: Covariance::Diagonal { variances },
            log_det,
            sample_count,
            ridge: T::zero(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn kind(&self) -> CovarianceKind {
        match self.covariance {
            Covariance::Full { .. } => CovarianceKind::Full,
            Covariance::Diagonal { .. } => CovarianceKind::Diagonal,
        }
    }

    /// Covariance as a dense matrix, including any ridge.
    pub fn covariance_matrix(&self) -> DMatrix<T> {
        match &self.covariance {
            Covariance::Full { matrix, .. } => matrix.clone(),
            Covariance::Diagonal { variances } => DMatrix::from_diagonal(variances),
        }
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Ridge added to the diagonal during fitting; zero if none was needed.
    pub fn ridge(&self) -> T {
        self.ridge
    }

    /// Squared Mahalanobis distance from the mean.
    pub fn mahalanobis_sq(&self, z: &[T]) -> Result<T> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        let diff = DVector::from_column_slice(z) - &self.mean;
        Ok(match &self.covariance {
            Covariance::Full { factor, .. } => {
                let y = factor
                    .solve_lower_triangular(&diff)
                    .ok_or_else(|| Error::Factorization("singular factor".into()))?;
                y.norm_squared()
            }
            Covariance::Diagonal { variances } => diff
                .iter()
                .zip(variances.iter())
                .fold(T::zero(), |acc, (&d, &v)| acc + d * d / v),
        })
    }

    /// `-0.5 * (k ln 2π + ln|Σ| + (z-μ)ᵀ Σ⁻¹ (z-μ))`
    pub fn log_pdf(&self, z: &[T]) -> Result<T> {
        let maha = self.mahalanobis_sq(z)?;
        let k = T::lit(self.dim() as f64);
        Ok(-(k * T::two_pi().ln() + self.log_det + maha) * T::lit(0.5))
    }
}

/// Fits mean and unbiased covariance to the rows of `projected`.
///
/// Full covariances receive a ridge of `1e-6 * trace(Σ)/k` when there are no
/// more samples than dimensions or when factorization fails.
pub fn fit_class_gaussian<T: Scalar>(
    projected: &EmbeddingMatrix<T>,
    kind: CovarianceKind,
) -> Result<ClassGaussian<T>> {
    let n = projected.rows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let x = projected.to_dmatrix();
    let mean = column_mean(&x);
    let xc = centered(&x, &mean);
    let denom = T::lit((n - 1) as f64);
    match kind {
        CovarianceKind::Full => {
            let cov = xc.tr_mul(&xc) / denom;
            let k = mean.len();
            ClassGaussian::full_with_policy(mean, cov, n, n <= k)
        }
        CovarianceKind::Diagonal => {
            let variances = DVector::from_iterator(
                xc.ncols(),
                xc.column_iter().map(|c| c.norm_squared() / denom),
            );
            ClassGaussian::diagonal(mean, variances, n)
        }
    }
}

/// Build parameters recorded alongside a dictionary.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DictionaryProvenance {
    pub max_per_class: Option<usize>,
    pub seed: u64,
    /// Classes whose full covariance needed a ridge, with the ridge used.
    pub regularized: BTreeMap<usize, f64>,
    /// Training classes left out for having fewer than two samples.
    pub excluded: Vec<usize>,
}

/// Class index → Gaussian, all of one covariance kind and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDictionary<T: Scalar> {
    entries: BTreeMap<usize, ClassGaussian<T>>,
    kind: CovarianceKind,
    dim: usize,
    pub provenance: DictionaryProvenance,
}

impl<T: Scalar> GaussianDictionary<T> {
    pub fn new(entries: BTreeMap<usize, ClassGaussian<T>>) -> Result<Self> {
        let first = entries.values().next().ok_or(Error::EmptyTrainSplit)?;
        let (kind, dim) = (first.kind(), first.dim());
        for g in entries.values() {
            if g.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.dim(),
                });
            }
            if g.kind() != kind {
                return Err(Error::InvalidArgument(
                    "dictionary entries mix covariance kinds".into(),
                ));
            }
        }
        let regularized = entries
            .iter()
            .filter(|(_, g)| g.ridge() > T::zero())
            .map(|(&c, g)| (c, g.ridge().as_f64()))
            .collect();
        Ok(GaussianDictionary {
            entries,
            kind,
            dim,
            provenance: DictionaryProvenance {
                regularized,
                ..Default::default()
            },
        })
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, class: usize) -> Result<&ClassGaussian<T>> {
        self.entries.get(&class).ok_or(Error::UnknownClass(class))
    }

    pub fn contains(&self, class: usize) -> bool {
        self.entries.contains_key(&class)
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ClassGaussian<T>)> + '_ {
        self.entries.iter().map(|(&c, g)| (c, g))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(DICTIONARY_MAGIC);
        w.u8(self.kind.code());
        w.u64(self.entries.len() as u64);
        for (&class, g) in &self.entries {
            w.u32(class as u32);
            w.u64(g.sample_count as u64);
            w.f64s(g.mean.iter().map(|v| v.as_f64()));
            match &g.covariance {
                Covariance::Full { matrix, .. } => w.f64s(matrix.iter().map(|v| v.as_f64())),
                Covariance::Diagonal { variances } => w.f64s(variances.iter().map(|v| v.as_f64())),
            }
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "dictionary file";
        let mut r = Reader::open(WHAT, bytes, DICTIONARY_MAGIC)?;
        let kind = r.u8()?;
        let kind = CovarianceKind::from_code(kind).ok_or_else(|| Error::Malformed {
            what: WHAT,
            detail: format!("unknown covariance kind {kind}"),
        })?;
        let count = r.count()?;
        let header = 4 + 4 + 1 + 8;
        let body = bytes.len().saturating_sub(header);
        if count == 0 || body % count != 0 {
            return Err(Error::Malformed {
                what: WHAT,
                detail: format!("{body} payload bytes for {count} classes"),
            });
        }
        let per_entry = body / count;
        let entry_size = |k: usize| match kind {
            CovarianceKind::Full => 12 + 8 * k + 8 * k * k,
            CovarianceKind::Diagonal => 12 + 16 * k,
        };
        let k = (1..)
            .take_while(|&k| entry_size(k) <= per_entry)
            .find(|&k| entry_size(k) == per_entry)
            .ok_or_else(|| Error::Malformed {
                what: WHAT,
                detail: format!("entry size {per_entry} matches no dimension"),
            })?;

        let lit = |v: &f64| T::lit(*v);
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let class = r.u32()? as usize;
            let sample_count = r.count()?;
            let mean = DVector::from_iterator(k, r.f64s(k)?.iter().map(lit));
            let g = match kind {
                CovarianceKind::Full => {
                    let cov = DMatrix::from_iterator(k, k, r.f64s(k * k)?.iter().map(lit));
                    ClassGaussian::full(mean, cov, sample_count)?
                }
                CovarianceKind::Diagonal => {
                    let var = DVector::from_iterator(k, r.f64s(k)?.iter().map(lit));
                    ClassGaussian::diagonal(mean, var, sample_count)?
                }
            };
            if entries.insert(class, g).is_some() {
                return Err(Error::Malformed {
                    what: WHAT,
                    detail: format!("class {class} appears twice"),
                });
            }
        }
        r.finish()?;
        Self::new(entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        format::write_atomic(path, &self.to_bytes())
    }
}

/// Deterministic subset of `rows` of size `max`, kept in ascending order.
pub(crate) fn subsample(rows: &[usize], max: usize, seed: u64, class: usize) -> Vec<usize> {
    if rows.len() <= max {
        return rows.to_vec();
    }
    let stream = seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, rows.len(), max)
        .into_iter()
        .map(|i| rows[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Projects and fits each `(key, rows)` group in parallel. Groups with fewer
/// than two rows come back as `Err(key)`.
pub(crate) fn fit_groups<T: Scalar>(
    features: &EmbeddingMatrix<T>,
    groups: &[(usize, Vec<usize>)],
    pca: &PcaModel<T>,
    kind: CovarianceKind,
) -> Result<(BTreeMap<usize, ClassGaussian<T>>, Vec<usize>)> {
    let fitted: Vec<Result<Option<ClassGaussian<T>>>> = groups
        .par_iter()
        .map(|(_, rows)| {
            if rows.len() < 2 {
                return Ok(None);
            }
            let projected = pca.project(&features.select_rows(rows))?;
            fit_class_gaussian(&projected, kind).map(Some)
        })
        .collect();
    let mut entries = BTreeMap::new();
    let mut excluded = Vec::new();
    for ((key, _), g) in groups.iter().zip(fitted) {
        match g? {
            Some(g) => {
                entries.insert(*key, g);
            }
            None => excluded.push(*key),
        }
    }
    Ok((entries, excluded))
}

/// One Gaussian per class of the train split, fit on projected features.
///
/// With `max_per_class`, larger classes are subsampled at random; the subset
/// depends only on `seed` and the class index.
pub fn build_dictionary<T: Scalar>(
    ds: &LabeledDataset,
    pca: &PcaModel<T>,
    kind: CovarianceKind,
    max_per_class: Option<usize>,
    seed: u64,
) -> Result<GaussianDictionary<T>> {
    let train = ds.split(TRAIN_SPLIT)?;
    if train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    if ds.dims() != pca.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: pca.input_dim(),
            found: ds.dims(),
        });
    }
    let features = ds.features::<T>()?;
    let groups: Vec<(usize, Vec<usize>)> = partition_rows(ds, train)
        .partitions
        .into_iter()
        .map(|p| {
            let rows = match max_per_class {
                Some(max) => subsample(&p.row_indices, max, seed, p.class_index),
                None => p.row_indices,
            };
            (p.class_index, rows)
        })
        .collect();
    let (entries, excluded) = fit_groups(&features, &groups, pca, kind)?;
    if entries.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let mut dict = GaussianDictionary::new(entries)?;
    dict.provenance.max_per_class = max_per_class;
    dict.provenance.seed = seed;
    dict.provenance.excluded = excluded;
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn square() -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn four_point_square() {
        let g = fit_class_gaussian(&square(), CovarianceKind::Full).unwrap();
        assert_eq!(g.mean().as_slice(), &[1.0, 1.0]);
        let cov = g.covariance_matrix();
        assert!((cov[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((cov[(1, 1)] - 4.0 / 3.0).abs() < 1e-15);
        assert!(cov[(0, 1)].abs() < 1e-15);
        assert_eq!(g.ridge(), 0.0);
        assert_eq!(g.sample_count(), 4);
    }

    #[test]
    fn single_row_is_too_few() {
        let one = EmbeddingMatrix::from_rows(&[vec![1.0_f64, 2.0]]).unwrap();
        for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
            assert!(matches!(
                fit_class_gaussian(&one, kind),
                Err(Error::TooFewSamples { needed: 2, got: 1 })
            ));
        }
    }

    #[test]
    fn standard_normal_values() {
        let g = ClassGaussian::diagonal(DVector::from_element(1, 0.0), DVector::from_element(1, 1.0), 2)
            .unwrap();
        assert!((g.log_pdf(&[0.0_f64]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);

        let g = ClassGaussian::full(DVector::zeros(2), DMatrix::identity(2, 2), 2).unwrap();
        let expected = -(2.0 * std::f64::consts::PI).ln() - 12.5;
        assert!((g.log_pdf(&[3.0, 4.0]).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(
            g.log_pdf(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn sample_starved_full_fit_gets_a_ridge() {
        // 3 samples in 4 dims: rank 2 covariance
        let m = EmbeddingMatrix::from_rows(&[
            vec![0.0_f64, 1.0, 0.0, 2.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.5, 0.5, 2.0, 1.0],
        ])
        .unwrap();
        let g = fit_class_gaussian(&m, CovarianceKind::Full).unwrap();
        assert!(g.ridge() > 0.0);
        assert!(g.log_det().is_finite());
        assert!(g.log_pdf(&[0.0, 0.0, 0.0, 0.0]).unwrap().is_finite());

        // identical rows: zero covariance still factorizes through the floor
        let dup = EmbeddingMatrix::from_rows(&vec![vec![1.0_f64, 2.0]; 3]).unwrap();
        let g = fit_class_gaussian(&dup, CovarianceKind::Full).unwrap();
        assert!(g.log_det().is_finite());
        let g = fit_class_gaussian(&dup, CovarianceKind::Diagonal).unwrap();
        assert!(g.log_det().is_finite());
    }

    #[test]
    fn larger_ridge_never_breaks_factorization() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0_f64, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let mut ridge = 1e-12;
        while ridge < 1e3 {
            let m = &cov + DMatrix::identity(3, 3) * ridge;
            assert!(cholesky_factor(&m).is_some(), "ridge {ridge}");
            ridge *= 10.0;
        }
    }

    #[test]
    fn monte_carlo_fit_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let k = 8;
        let mu: Vec<f64> = (0..k).map(|i| i as f64 * 0.5 - 2.0).collect();
        // Σ* = A Aᵀ for a fixed lower-triangular A
        let a = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                1.0 + 0.1 * i as f64
            } else if j < i {
                0.3
            } else {
                0.0
            }
        });
        let sigma = &a * a.transpose();
        let n = 50;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let e = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let x = &a * e;
                (0..k).map(|i| mu[i] + x[i]).collect()
            })
            .collect();
        let g = fit_class_gaussian(&EmbeddingMatrix::from_rows(&rows).unwrap(), CovarianceKind::Full)
            .unwrap();
        for i in 0..k {
            let se = (sigma[(i, i)] / n as f64).sqrt();
            assert!((g.mean()[i] - mu[i]).abs() < 3.0 * se, "coordinate {i}");
        }
        let rel = (g.covariance_matrix() - &sigma).norm() / sigma.norm();
        assert!(rel < 0.5, "relative Frobenius error {rel}");
    }

    #[test]
    fn dictionary_file_round_trip() {
        for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
            let g = fit_class_gaussian(&square(), kind).unwrap();
            let entries = BTreeMap::from([(0, g.clone()), (3, g)]);
            let dict = GaussianDictionary::new(entries).unwrap();
            let back = GaussianDictionary::<f64>::from_bytes(&dict.to_bytes()).unwrap();
            assert_eq!(back.kind(), kind);
            assert_eq!(back.dim(), 2);
            assert_eq!(back.classes().collect::<Vec<_>>(), vec![0, 3]);
            assert_eq!(back.to_bytes(), dict.to_bytes());
            assert!(matches!(back.get(1), Err(Error::UnknownClass(1))));
        }
    }

    #[test]
    fn subsample_is_deterministic_and_sized() {
        let rows: Vec<usize> = (100..200).collect();
        let a = subsample(&rows, 10, 7, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(a, subsample(&rows, 10, 7, 3));
        assert_ne!(a, subsample(&rows, 10, 8, 3));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample(&rows[..5], 10, 7, 3), rows[..5].to_vec());
    }
}
