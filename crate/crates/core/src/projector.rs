//! Global PCA basis and per-class covariance conditioning diagnostics.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::embedding_store::{ClassPartition, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::format::{self, Reader, Writer, PCA_MAGIC};
use crate::num::Scalar;

/// Relative floor applied to the smallest eigenvalue in condition numbers.
pub const CONDITION_FLOOR: f64 = 1e-12;

pub const DEFAULT_PCA_DIM: usize = 128;

/// Projection `z = basisᵀ (v - global_mean)` onto the top principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T: Scalar> {
    global_mean: DVector<T>,
    /// `d x k`, orthonormal columns.
    basis: DMatrix<T>,
    /// Nonincreasing, nonnegative.
    eigenvalues: DVector<T>,
}

pub(crate) fn column_mean<T: Scalar>(x: &DMatrix<T>) -> DVector<T> {
    let n = T::lit(x.nrows() as f64);
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn centered<T: Scalar>(x: &DMatrix<T>, mean: &DVector<T>) -> DMatrix<T> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

/// Eigenpairs sorted by descending eigenvalue.
fn sorted_eigen<T: Scalar>(sym: DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Flips each column so that its largest-magnitude entry is positive.
fn fix_signs<T: Scalar>(basis: &mut DMatrix<T>) {
    for mut col in basis.column_iter_mut() {
        let mut best = T::zero();
        for &v in col.iter() {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < T::zero() {
            col.neg_mut();
        }
    }
}

/// Fits PCA on all rows of `train` and keeps `k` components.
///
/// Uses the eigendecomposition of the `d x d` sample covariance (1/(n-1))
/// when `n >= d`, and the SVD of the centered data otherwise.
pub fn fit_pca<T: Scalar>(train: &EmbeddingMatrix<T>, k: usize) -> Result<PcaModel<T>> {
    let (n, d) = (train.rows(), train.dims());
    if n < 2 || d == 0 {
        return Err(Error::DegenerateInput(format!(
            "PCA needs at least 2 rows and 1 column, got {n} x {d}"
        )));
    }
    let max = d.min(n - 1);
    if k == 0 || k > max {
        return Err(Error::RankTooLow { k, max });
    }

    let x = train.to_dmatrix();
    let mean = column_mean(&x);
    let xc = centered(&x, &mean);
    let denom = T::lit((n - 1) as f64);

    let (values, mut basis) = if n >= d {
        let cov = (xc.transpose() * &xc) / denom;
        let (values, vectors) = sorted_eigen(cov);
        (values[..k].to_vec(), vectors.columns(0, k).into_owned())
    } else {
        let svd = xc.svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let values = order[..k]
            .iter()
            .map(|&i| svd.singular_values[i] * svd.singular_values[i] / denom)
            .collect();
        let cols: Vec<_> = order[..k]
            .iter()
            .map(|&i| v_t.row(i).transpose())
            .collect();
        (values, DMatrix::from_columns(&cols))
    };

    if values[0] <= T::zero() {
        return Err(Error::DegenerateInput(
            "training embeddings have zero variance".into(),
        ));
    }
    fix_signs(&mut basis);
    let eigenvalues = DVector::from_iterator(
        k,
        values
            .into_iter()
            .map(|v| if v < T::zero() { T::zero() } else { v }),
    );
    Ok(PcaModel {
        global_mean: mean,
        basis,
        eigenvalues,
    })
}

impl<T: Scalar> PcaModel<T> {
    pub fn from_parts(
        global_mean: DVector<T>,
        basis: DMatrix<T>,
        eigenvalues: DVector<T>,
    ) -> Result<Self> {
        let d = global_mean.len();
        if basis.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: basis.nrows(),
            });
        }
        if eigenvalues.len() != basis.ncols() {
            return Err(Error::DimensionMismatch {
                expected: basis.ncols(),
                found: eigenvalues.len(),
            });
        }
        Ok(PcaModel {
            global_mean,
            basis,
            eigenvalues,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn global_mean(&self) -> &DVector<T> {
        &self.global_mean
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn project_vector(&self, v: &[T]) -> Result<DVector<T>> {
        if v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: v.len(),
            });
        }
        let diff = DVector::from_column_slice(v) - &self.global_mean;
        Ok(self.basis.tr_mul(&diff))
    }

    pub fn project(&self, m: &EmbeddingMatrix<T>) -> Result<EmbeddingMatrix<T>> {
        if m.dims() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: m.dims(),
            });
        }
        let xc = centered(&m.to_dmatrix(), &self.global_mean);
        Ok(EmbeddingMatrix::from_dmatrix(&(xc * &self.basis)))
    }

    /// Maps a projected vector back to the input space.
    pub fn reconstruct(&self, z: &DVector<T>) -> DVector<T> {
        &self.basis * z + &self.global_mean
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(PCA_MAGIC);
        w.u64(self.input_dim() as u64);
        w.u64(self.output_dim() as u64);
        w.f64s(self.global_mean.iter().map(|v| v.as_f64()));
        // nalgebra storage is column-major already
        w.f64s(self.basis.as_slice().iter().map(|v| v.as_f64()));
        w.f64s(self.eigenvalues.iter().map(|v| v.as_f64()));
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open("PCA file", bytes, PCA_MAGIC)?;
        let d = r.count()?;
        let k = r.count()?;
        let mean = r.f64s(d)?;
        let basis = r.f64s(d.checked_mul(k).ok_or_else(|| Error::Malformed {
            what: "PCA file",
            detail: "basis size overflows".into(),
        })?)?;
        let eig = r.f64s(k)?;
        r.finish()?;
        let lit = |v: &f64| T::lit(*v);
        Self::from_parts(
            DVector::from_iterator(d, mean.iter().map(lit)),
            DMatrix::from_iterator(d, k, basis.iter().map(lit)),
            DVector::from_iterator(k, eig.iter().map(lit)),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        format::write_atomic(path, &self.to_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceTag {
    Raw,
    Projected,
}

impl SpaceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SpaceTag::Raw => "raw",
            SpaceTag::Projected => "projected",
        }
    }
}

/// Spectrum summary of one class covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCondition<T> {
    pub samples: usize,
    pub lambda_max: T,
    pub lambda_min: T,
    /// `log10(lambda_max / max(lambda_min, floor))`; infinite for a zero covariance.
    pub log10_condition: T,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<T> {
    pub space: SpaceTag,
    pub per_class: BTreeMap<usize, ClassCondition<T>>,
}

impl<T: Scalar> ConditionReport<T> {
    pub fn median_log_condition(&self) -> Option<T> {
        let mut v: Vec<T> = self.per_class.values().map(|c| c.log10_condition).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 {
            v[m]
        } else {
            (v[m - 1] + v[m]) / T::lit(2.0)
        })
    }
}

/// Condition number of the sample covariance (1/(n-1)) of `rows`.
///
/// With fewer than `d + 1` samples the covariance is singular, so only the
/// largest eigenvalue is computed, from the `n x n` Gram matrix.
pub fn class_condition<T: Scalar>(rows: &EmbeddingMatrix<T>) -> Result<ClassCondition<T>> {
    let (n, d) = (rows.rows(), rows.dims());
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let x = rows.to_dmatrix();
    let xc = centered(&x, &column_mean(&x));
    let denom = T::lit((n - 1) as f64);

    let (lambda_max, lambda_min) = if n - 1 < d {
        let gram = (&xc * xc.transpose()) / denom;
        let vals = gram.symmetric_eigenvalues();
        (vals.max(), T::zero())
    } else {
        let cov = (xc.transpose() * &xc) / denom;
        let vals = cov.symmetric_eigenvalues();
        (vals.max(), vals.min())
    };

    let lambda_min = if lambda_min < T::zero() {
        T::zero()
    } else {
        lambda_min
    };
    if lambda_max <= T::zero() {
        return Ok(ClassCondition {
            samples: n,
            lambda_max: T::zero(),
            lambda_min,
            log10_condition: T::lit(f64::INFINITY),
            rank_deficient: true,
        });
    }
    let floor = lambda_max * T::lit(CONDITION_FLOOR);
    let rank_deficient = lambda_min <= floor;
    let denom = if rank_deficient { floor } else { lambda_min };
    Ok(ClassCondition {
        samples: n,
        lambda_max,
        lambda_min,
        log10_condition: (lambda_max / denom).log10(),
        rank_deficient,
    })
}

/// Per-class condition numbers over `features`, which may be raw or projected.
pub fn condition_report<T: Scalar>(
    partitions: &[ClassPartition],
    features: &EmbeddingMatrix<T>,
    space: SpaceTag,
) -> Result<ConditionReport<T>> {
    let mut per_class = BTreeMap::new();
    for p in partitions {
        let rows = features.select_rows(&p.row_indices);
        per_class.insert(p.class_index, class_condition(&rows)?);
    }
    Ok(ConditionReport { space, per_class })
}
