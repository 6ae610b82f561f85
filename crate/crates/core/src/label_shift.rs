//! Coarse query labels against a fine-grained dictionary.
//!
//! Each query class is matched to the `K` dictionary classes whose text
//! embeddings are most similar, and a superclass Gaussian is fit on the pooled
//! training rows of those classes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding_store::{l2_normalize, EmbeddingMatrix, LabeledDataset, TRAIN_SPLIT};
use crate::error::{Error, Result};
use crate::format;
use crate::gaussian_dict::{fit_groups, CovarianceKind, GaussianDictionary};
use crate::num::Scalar;
use crate::projector::PcaModel;

/// `round(n_retrieval / n_test)`, halves to even, at least 1.
pub fn select_k(n_retrieval: usize, n_test: usize) -> Result<usize> {
    if n_retrieval == 0 || n_test == 0 {
        return Err(Error::ZeroCount);
    }
    let (q, r) = (n_retrieval / n_test, n_retrieval % n_test);
    let k = match (2 * r).cmp(&n_test) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    };
    Ok(k.max(1))
}

/// Query class → the `k` retrieved dictionary classes, most similar first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperclassMap {
    pub k: usize,
    pub n_retrieval: usize,
    pub map: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct SuperclassMapFile {
    k: usize,
    map: BTreeMap<String, Vec<usize>>,
}

impl SuperclassMap {
    pub fn n_test(&self) -> usize {
        self.map.len()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let file = SuperclassMapFile {
            k: self.k,
            map: self
                .map
                .iter()
                .enumerate()
                .map(|(q, v)| (q.to_string(), v.clone()))
                .collect(),
        };
        let mut out = serde_json::to_vec_pretty(&file)?;
        out.push(b'\n');
        Ok(out)
    }

    /// Parses the JSON form. `n_retrieval` is not stored there, so it is set
    /// to one past the largest retrieved index.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: SuperclassMapFile = serde_json::from_slice(bytes)?;
        let mut map = vec![None; file.map.len()];
        for (key, classes) in file.map {
            let q: usize = key
                .parse()
                .map_err(|_| Error::Manifest(format!("superclass key `{key}` is not an index")))?;
            let slot = map
                .get_mut(q)
                .ok_or_else(|| Error::Manifest(format!("superclass keys skip index below {q}")))?;
            if classes.len() != file.k {
                return Err(Error::Manifest(format!(
                    "superclass {q} lists {} classes, expected {}",
                    classes.len(),
                    file.k
                )));
            }
            *slot = Some(classes);
        }
        let map: Vec<Vec<usize>> = map.into_iter().map(|m| m.unwrap_or_default()).collect();
        let n_retrieval = map.iter().flatten().max().map_or(0, |&m| m + 1);
        Ok(SuperclassMap {
            k: file.k,
            n_retrieval,
            map,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&format::read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        format::write_atomic(path, &self.to_json()?)
    }
}

/// Retrieves, for each query text embedding, the `K` most cosine-similar
/// dictionary text embeddings (lowest index on ties). `K` defaults to
/// [`select_k`] of the two class counts.
pub fn build_superclass_map<T: Scalar>(
    query_text: &EmbeddingMatrix<T>,
    dict_text: &EmbeddingMatrix<T>,
    k_override: Option<usize>,
) -> Result<SuperclassMap> {
    if query_text.dims() != dict_text.dims() {
        return Err(Error::DimensionMismatch {
            expected: dict_text.dims(),
            found: query_text.dims(),
        });
    }
    let n_retrieval = dict_text.rows();
    let k = match k_override {
        Some(0) => return Err(Error::ZeroCount),
        Some(k) => k,
        None => select_k(n_retrieval, query_text.rows())?,
    };
    if k > n_retrieval {
        return Err(Error::KTooLarge {
            k,
            available: n_retrieval,
        });
    }
    let queries = l2_normalize(query_text)?.to_dmatrix();
    let dict = l2_normalize(dict_text)?.to_dmatrix();
    let sims = &queries * dict.transpose();

    let map = sims
        .row_iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..n_retrieval).collect();
            order.sort_by(|&a, &b| {
                row[b]
                    .partial_cmp(&row[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            order.truncate(k);
            order
        })
        .collect();
    Ok(SuperclassMap {
        k,
        n_retrieval,
        map,
    })
}

/// Superclass Gaussians keyed by query class, each fit on the projected
/// training rows of its retrieved classes.
pub fn build_superclass_dictionary<T: Scalar>(
    map: &SuperclassMap,
    ds: &LabeledDataset,
    pca: &PcaModel<T>,
    kind: CovarianceKind,
) -> Result<GaussianDictionary<T>> {
    let train = ds.split(TRAIN_SPLIT)?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &r in train {
        by_class.entry(ds.labels[r] as usize).or_default().push(r);
    }
    let mut groups = Vec::with_capacity(map.map.len());
    for (query, retrieved) in map.map.iter().enumerate() {
        // sorted so that the fit does not depend on retrieval order
        let mut rows: Vec<usize> = retrieved
            .iter()
            .filter_map(|c| by_class.get(c))
            .flatten()
            .copied()
            .collect();
        rows.sort_unstable();
        rows.dedup();
        if rows.is_empty() {
            return Err(Error::EmptyPool(query));
        }
        groups.push((query, rows));
    }
    let features = ds.features::<T>()?;
    let (entries, excluded) = fit_groups(&features, &groups, pca, kind)?;
    if let Some(&q) = excluded.first() {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: groups[q].1.len(),
        });
    }
    GaussianDictionary::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_rounding() {
        assert_eq!(select_k(1000, 548).unwrap(), 2);
        assert_eq!(select_k(1000, 299).unwrap(), 3);
        assert_eq!(select_k(10, 10).unwrap(), 1);
        // halves go to even
        assert_eq!(select_k(5, 2).unwrap(), 2);
        assert_eq!(select_k(7, 2).unwrap(), 4);
        assert_eq!(select_k(1, 2).unwrap(), 1);
        assert_eq!(select_k(3, 10).unwrap(), 1);
        assert!(matches!(select_k(0, 3), Err(Error::ZeroCount)));
        assert!(matches!(select_k(3, 0), Err(Error::ZeroCount)));
    }

    #[test]
    fn identical_queries_retrieve_themselves() {
        let dict = EmbeddingMatrix::from_rows(&[
            vec![1.0_f64, 0.2, 0.0],
            vec![0.0, 1.0, 0.3],
            vec![0.1, 0.0, 1.0],
            vec![0.5, 0.5, 0.5],
        ])
        .unwrap();
        let query = dict.select_rows(&[2, 0]);
        let m = build_superclass_map(&query, &dict, Some(1)).unwrap();
        assert_eq!(m.map, vec![vec![2], vec![0]]);
    }

    #[test]
    fn orthogonal_axes() {
        let dict = EmbeddingMatrix::from_rows(&[
            vec![1.0_f64, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let query = EmbeddingMatrix::from_rows(&[vec![1.0_f64, 0.0, 0.0, 0.0]]).unwrap();
        let m = build_superclass_map(&query, &dict, Some(2)).unwrap();
        // classes 1..3 tie at zero, lowest index wins
        assert_eq!(m.map, vec![vec![0, 1]]);
        assert!(matches!(
            build_superclass_map(&query, &dict, Some(5)),
            Err(Error::KTooLarge { k: 5, available: 4 })
        ));
    }

    #[test]
    fn json_round_trip() {
        let m = SuperclassMap {
            k: 2,
            n_retrieval: 12,
            map: (0..11).map(|q| vec![q, q + 1]).collect(),
        };
        let back = SuperclassMap::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(SuperclassMap::from_json(br#"{"k": 2, "map": {"0": [1]}}"#).is_err());
    }
}
