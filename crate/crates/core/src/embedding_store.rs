//! Embedding matrices, labeled datasets and their on-disk layout.
//!
//! A dataset is a JSON manifest pointing at two binary sidecars:
//!
//! ```text
//! embeddings: "VLME" | version u32 | rows u64 | dims u64 | rows*dims f32, row-major
//! labels:     "VLML" | version u32 | rows u64 | rows u32
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::format::{self, Reader, Writer, EMBEDDING_MAGIC, LABEL_MAGIC};
use crate::num::Scalar;

pub const MANIFEST_VERSION: u32 = 1;
pub const TRAIN_SPLIT: &str = "train";
pub const TEST_SPLIT: &str = "test";

/// Row-major matrix of feature vectors, one embedding per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    rows: usize,
    dims: usize,
    data: Vec<T>,
    normalized: bool,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    /// Validates the shape and rejects non-finite entries.
    pub fn new(rows: usize, dims: usize, data: Vec<T>) -> Result<Self> {
        let expected = rows.checked_mul(dims).ok_or(Error::DimensionMismatch {
            expected: usize::MAX,
            found: data.len(),
        })?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: i / dims,
                col: i % dims,
            });
        }
        Ok(EmbeddingMatrix {
            rows,
            dims,
            data,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dims);
        for r in rows {
            if r.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dims, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Gathers the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> EmbeddingMatrix<T> {
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            rows: indices.len(),
            dims: self.dims,
            data,
            normalized: self.normalized,
        }
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            rows: self.rows,
            dims: self.dims,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
            normalized: self.normalized,
        }
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<T> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.dims, &self.data)
    }

    pub fn from_dmatrix(m: &nalgebra::DMatrix<T>) -> Self {
        let (rows, dims) = m.shape();
        let mut data = Vec::with_capacity(rows * dims);
        for r in 0..rows {
            data.extend(m.row(r).iter().copied());
        }
        EmbeddingMatrix {
            rows,
            dims,
            data,
            normalized: false,
        }
    }
}

impl EmbeddingMatrix<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(EMBEDDING_MAGIC);
        w.u64(self.rows as u64);
        w.u64(self.dims as u64);
        w.f32s(&self.data);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open("embedding file", bytes, EMBEDDING_MAGIC)?;
        let rows = r.count()?;
        let dims = r.count()?;
        let n = rows.checked_mul(dims).ok_or_else(|| Error::Malformed {
            what: "embedding file",
            detail: format!("{rows} x {dims} overflows"),
        })?;
        let data = r.f32s(n)?;
        r.finish()?;
        Self::new(rows, dims, data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&format::read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        format::write_atomic(path, &self.to_bytes())
    }
}

/// Scales every row to unit Euclidean norm. The norm and quotient are
/// computed in `f64`, so `f32` rows round once.
pub fn l2_normalize<T: Scalar>(m: &EmbeddingMatrix<T>) -> Result<EmbeddingMatrix<T>> {
    let mut data = Vec::with_capacity(m.data.len());
    for (i, row) in m.iter_rows().enumerate() {
        let norm = row.iter().fold(0.0, |acc, &v| acc + v.as_f64() * v.as_f64()).sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNormRow(i));
        }
        data.extend(row.iter().map(|&v| T::lit(v.as_f64() / norm)));
    }
    Ok(EmbeddingMatrix {
        rows: m.rows,
        dims: m.dims,
        data,
        normalized: true,
    })
}

pub fn encode_labels(labels: &[u32]) -> Vec<u8> {
    let mut w = Writer::with_header(LABEL_MAGIC);
    w.u64(labels.len() as u64);
    for &l in labels {
        w.u32(l);
    }
    w.into_bytes()
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    let mut r = Reader::open("label file", bytes, LABEL_MAGIC)?;
    let n = r.count()?;
    let labels = r.u32s(n)?;
    r.finish()?;
    Ok(labels)
}

/// Embeddings with class labels and named row subsets.
///
/// The float payload is kept exactly as stored; `normalize` records whether
/// consumers should L2-normalize rows before use (see [`LabeledDataset::features`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub embeddings: EmbeddingMatrix<f32>,
    pub labels: Vec<u32>,
    pub class_names: Vec<String>,
    pub splits: BTreeMap<String, Vec<usize>>,
    pub normalize: bool,
}

impl LabeledDataset {
    pub fn new(
        embeddings: EmbeddingMatrix<f32>,
        labels: Vec<u32>,
        class_names: Vec<String>,
        splits: BTreeMap<String, Vec<usize>>,
        normalize: bool,
    ) -> Result<Self> {
        let ds = LabeledDataset {
            embeddings,
            labels,
            class_names,
            splits,
            normalize,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.embeddings.rows();
        if rows == 0 {
            return Err(Error::EmptyDataset);
        }
        if self.labels.len() != rows {
            return Err(Error::LabelCountMismatch {
                labels: self.labels.len(),
                rows,
            });
        }
        let classes = self.class_names.len();
        for (row, &label) in self.labels.iter().enumerate() {
            if label as usize >= classes {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    classes,
                });
            }
        }
        for (name, indices) in &self.splits {
            let mut seen = BTreeSet::new();
            for &index in indices {
                if index >= rows || !seen.insert(index) {
                    return Err(Error::BadSplitIndex {
                        split: name.clone(),
                        index,
                        rows,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn dims(&self) -> usize {
        self.embeddings.dims()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, name: &str) -> Result<&[usize]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownSplit(name.to_owned()))
    }

    /// The working feature matrix: cast to `T` and L2-normalized if requested.
    pub fn features<T: Scalar>(&self) -> Result<EmbeddingMatrix<T>> {
        let m = self.embeddings.cast::<T>();
        if self.normalize {
            l2_normalize(&m)
        } else {
            Ok(m)
        }
    }

    pub fn labels_of(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.labels[r] as usize).collect()
    }
}

/// Rows of one class within a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    pub class_index: usize,
    pub row_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    pub partitions: Vec<ClassPartition>,
    /// Classes in `class_names` with no rows in the split.
    pub absent: Vec<usize>,
}

/// Groups a split's rows by label. Partitions are ordered by class index and
/// keep the split's row order.
pub fn partition_by_class(ds: &LabeledDataset, split: &str) -> Result<Partitioning> {
    let rows = ds.split(split)?;
    Ok(partition_rows(ds, rows))
}

pub(crate) fn partition_rows(ds: &LabeledDataset, rows: &[usize]) -> Partitioning {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for &r in rows {
        groups[ds.labels[r] as usize].push(r);
    }
    let mut partitions = Vec::new();
    let mut absent = Vec::new();
    for (class_index, row_indices) in groups.into_iter().enumerate() {
        if row_indices.is_empty() {
            absent.push(class_index);
        } else {
            partitions.push(ClassPartition {
                class_index,
                row_indices,
            });
        }
    }
    Partitioning { partitions, absent }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    embeddings: String,
    labels: String,
    class_names: Vec<String>,
    #[serde(default = "default_normalize")]
    normalize: bool,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    splits: serde_json::Map<String, Value>,
}

fn default_normalize() -> bool {
    true
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.parent().unwrap_or(Path::new("")).join(rel)
}

/// Reads and validates a dataset manifest and its sidecar files.
///
/// `splits` may list row indices inline (`{"train": [..]}`) or point at
/// JSON files holding an index array (`{"train_file": "train.json"}`).
pub fn load_dataset(manifest_path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion {
            what: "manifest",
            version: manifest.version,
        });
    }
    let embeddings = EmbeddingMatrix::read(&resolve(manifest_path, &manifest.embeddings))?;
    let labels = decode_labels(&format::read_file(&resolve(
        manifest_path,
        &manifest.labels,
    ))?)?;

    let mut splits = BTreeMap::new();
    for (key, value) in &manifest.splits {
        let (name, indices) = match key.strip_suffix("_file") {
            Some(name) => {
                let rel = value.as_str().ok_or_else(|| {
                    Error::Manifest(format!("split `{key}` must be a relative path"))
                })?;
                let path = resolve(manifest_path, rel);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                (name, serde_json::from_str::<Vec<usize>>(&text)?)
            }
            None => (
                key.as_str(),
                serde_json::from_value::<Vec<usize>>(value.clone())
                    .map_err(|e| Error::Manifest(format!("split `{key}`: {e}")))?,
            ),
        };
        if splits.insert(name.to_owned(), indices).is_some() {
            return Err(Error::Manifest(format!("split `{name}` given twice")));
        }
    }

    LabeledDataset::new(
        embeddings,
        labels,
        manifest.class_names,
        splits,
        manifest.normalize,
    )
}

/// Writes `<stem>.vlme`, `<stem>.vlml` and the manifest itself, with splits inline.
pub fn save_dataset(ds: &LabeledDataset, manifest_path: &Path) -> Result<()> {
    ds.validate()?;
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let emb_name = format!("{stem}.vlme");
    let lab_name = format!("{stem}.vlml");
    ds.embeddings.write(&resolve(manifest_path, &emb_name))?;
    format::write_atomic(
        &resolve(manifest_path, &lab_name),
        &encode_labels(&ds.labels),
    )?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        embeddings: emb_name,
        labels: lab_name,
        class_names: ds.class_names.clone(),
        normalize: ds.normalize,
        splits: ds
            .splits
            .iter()
            .map(|(k, v)| (k.clone(), Value::from(v.clone())))
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    format::write_atomic(manifest_path, &json)
}
