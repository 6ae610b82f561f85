//! Zero-shot prediction, the fused uncertainty score and the baseline scores.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding_store::{l2_normalize, EmbeddingMatrix, LabeledDataset, TEST_SPLIT};
use crate::error::{Error, Result};
use crate::gaussian_dict::{CovarianceKind, GaussianDictionary};
use crate::num::{argmax, log_sum_exp, softmax, Scalar};
use crate::projector::PcaModel;

pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;
pub const DEFAULT_TAU: f64 = 0.5;
pub const MIN_CALIBRATION_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "Ours")]
    Ours,
    #[serde(rename = "Ours-D")]
    OursDiag,
    MaxCosine,
    MaxSoftmax,
    Entropy,
    TempScaling,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::MaxCosine,
        Method::MaxSoftmax,
        Method::Entropy,
        Method::TempScaling,
        Method::OursDiag,
        Method::Ours,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "Ours",
            Method::OursDiag => "Ours-D",
            Method::MaxCosine => "MaxCosine",
            Method::MaxSoftmax => "MaxSoftmax",
            Method::Entropy => "Entropy",
            Method::TempScaling => "TempScaling",
        }
    }

    pub fn fused(kind: CovarianceKind) -> Self {
        match kind {
            CovarianceKind::Full => Method::Ours,
            CovarianceKind::Diagonal => Method::OursDiag,
        }
    }

    pub fn is_fused(self) -> bool {
        matches!(self, Method::Ours | Method::OursDiag)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Unit-norm class text embeddings, one row per class.
#[derive(Debug, Clone)]
pub struct TextBank<T: Scalar> {
    rows: DMatrix<T>,
}

impl<T: Scalar> TextBank<T> {
    pub fn new(text: &EmbeddingMatrix<T>) -> Result<Self> {
        if text.rows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "text bank needs at least 2 classes, got {}",
                text.rows()
            )));
        }
        Ok(TextBank {
            rows: l2_normalize(text)?.to_dmatrix(),
        })
    }

    pub fn classes(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dims(&self) -> usize {
        self.rows.ncols()
    }

    /// Cosine similarity of `v` against every class.
    pub fn cosines(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: v.len(),
            });
        }
        let v = DVector::from_column_slice(v);
        let norm = v.norm();
        if norm <= T::zero() {
            return Err(Error::ZeroNormRow(0));
        }
        let one = T::one();
        Ok((&self.rows * (v / norm))
            .iter()
            .map(|&c| c.clamp(-one, one))
            .collect())
    }
}

/// Image-to-text similarities and their softmax at scale `logit_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityProfile<T> {
    pub cosines: Vec<T>,
    pub softmax: Vec<T>,
    pub logit_scale: T,
}

impl<T: Scalar> SimilarityProfile<T> {
    pub fn from_cosines(cosines: Vec<T>, logit_scale: T) -> Self {
        let softmax = softmax_at(&cosines, logit_scale);
        SimilarityProfile {
            cosines,
            softmax,
            logit_scale,
        }
    }

    pub fn p_max(&self) -> T {
        self.softmax
            .iter()
            .copied()
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.cosines).expect("profile has classes")
    }
}

fn softmax_at<T: Scalar>(cosines: &[T], scale: T) -> Vec<T> {
    let logits: Vec<T> = cosines.iter().map(|&c| c * scale).collect();
    softmax(&logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub predicted_class: usize,
    /// `None` when no ground truth is available.
    pub correct: Option<bool>,
}

impl Prediction {
    pub fn with_truth(self, true_class: usize) -> Self {
        Prediction {
            correct: Some(self.predicted_class == true_class),
            ..self
        }
    }
}

/// Cosine similarities to every class prompt, softmax at `logit_scale`, and
/// the argmax prediction (lowest index on ties).
pub fn classify<T: Scalar>(
    image_emb: &[T],
    text_bank: &TextBank<T>,
    logit_scale: T,
) -> Result<(SimilarityProfile<T>, Prediction)> {
    let profile = SimilarityProfile::from_cosines(text_bank.cosines(image_emb)?, logit_scale);
    let prediction = Prediction {
        predicted_class: profile.predicted_class(),
        correct: None,
    };
    Ok((profile, prediction))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntraClassScore<T> {
    /// Softmax over the queried classes' log-likelihoods, at the predicted class.
    pub s_d: T,
    /// Log-likelihood under the predicted class.
    pub log_likelihood: T,
}

/// Log-likelihood of `z` under the predicted class, normalized against all
/// `queried` classes.
pub fn intra_class_score<T: Scalar>(
    dict: &GaussianDictionary<T>,
    z: &[T],
    predicted: usize,
    queried: &[usize],
) -> Result<IntraClassScore<T>> {
    let mut lls = Vec::with_capacity(queried.len());
    let mut own = None;
    for &c in queried {
        let ll = dict.get(c)?.log_pdf(z)?;
        if c == predicted {
            own = Some(ll);
        }
        lls.push(ll);
    }
    let log_likelihood = own.ok_or_else(|| {
        Error::InvalidArgument(format!("predicted class {predicted} is not among the queried classes"))
    })?;
    // 1 / sum_j exp(ll_j - ll_own); overflow gives the correct limit of 0
    let s_d = T::one() / lls.iter().fold(T::zero(), |acc, &ll| acc + (ll - log_likelihood).exp());
    Ok(IntraClassScore { s_d, log_likelihood })
}

/// `1 - (p_max + s_d) / 2`
pub fn fused_uncertainty<T: Scalar>(p_max: T, s_d: T) -> T {
    T::one() - (p_max + s_d) / T::lit(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyScore<T> {
    pub method: Method,
    pub p_max: T,
    pub s_d: T,
    pub log_likelihood: T,
    pub s_unc: T,
}

impl<T: Scalar> UncertaintyScore<T> {
    pub fn fused(method: Method, profile: &SimilarityProfile<T>, intra: IntraClassScore<T>) -> Self {
        let p_max = profile.p_max();
        UncertaintyScore {
            method,
            p_max,
            s_d: intra.s_d,
            log_likelihood: intra.log_likelihood,
            s_unc: fused_uncertainty(p_max, intra.s_d),
        }
    }

    /// Higher means more likely correct.
    pub fn confidence(&self) -> T {
        T::one() - self.s_unc
    }

    pub fn rejects(&self, tau: T) -> bool {
        self.s_unc > tau
    }
}

pub fn entropy<T: Scalar>(p: &[T]) -> T {
    -p.iter()
        .filter(|&&x| x > T::zero())
        .fold(T::zero(), |acc, &x| acc + x * x.ln())
}

/// Baseline confidences, higher meaning more confident. `TempScaling` is
/// included only when a temperature is given.
pub fn baseline_scores<T: Scalar>(
    profile: &SimilarityProfile<T>,
    temperature: Option<T>,
) -> Vec<(Method, T)> {
    let max_cos = profile
        .cosines
        .iter()
        .copied()
        .fold(T::lit(f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
    let mut out = vec![
        (Method::MaxCosine, max_cos),
        (Method::MaxSoftmax, profile.p_max()),
        (Method::Entropy, -entropy(&profile.softmax)),
    ];
    if let Some(t) = temperature {
        let p = softmax_at(&profile.cosines, profile.logit_scale / t);
        let p_max = p.into_iter().fold(T::zero(), |a, b| if b > a { b } else { a });
        out.push((Method::TempScaling, p_max));
    }
    out
}

/// Mean negative log-likelihood of `labels` under `softmax(β·cos / T)`.
pub fn temperature_nll<T: Scalar>(
    profiles: &[SimilarityProfile<T>],
    labels: &[usize],
    temperature: T,
) -> T {
    let total = profiles
        .iter()
        .zip(labels)
        .fold(T::zero(), |acc, (p, &y)| {
            let scale = p.logit_scale / temperature;
            let logits: Vec<T> = p.cosines.iter().map(|&c| c * scale).collect();
            acc + log_sum_exp(&logits) - logits[y]
        });
    total / T::lit(profiles.len() as f64)
}

const LOG_T_RANGE: (f64, f64) = (-3.0, 3.0);
const LOG_T_TOLERANCE: f64 = 1e-4;

/// Temperature minimizing validation NLL, by golden-section search on
/// `ln T ∈ [-3, 3]`. Returns 1 when the NLL does not depend on `T`.
pub fn calibrate_temperature<T: Scalar>(
    val_profiles: &[SimilarityProfile<T>],
    val_labels: &[usize],
) -> Result<T> {
    if val_profiles.len() != val_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: val_profiles.len(),
            found: val_labels.len(),
        });
    }
    if val_profiles.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_CALIBRATION_SAMPLES,
            got: val_profiles.len(),
        });
    }
    for (p, &y) in val_profiles.iter().zip(val_labels) {
        if y >= p.cosines.len() {
            return Err(Error::UnknownClass(y));
        }
    }

    let nll = |log_t: f64| temperature_nll(val_profiles, val_labels, T::lit(log_t.exp())).as_f64();

    // logits constant within every profile make the NLL flat in T
    let flat = val_profiles
        .iter()
        .all(|p| p.cosines.iter().all(|&c| c == p.cosines[0]));
    if flat {
        return Ok(T::one());
    }

    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LOG_T_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (nll(c), nll(d));
    while b - a > LOG_T_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d);
        }
    }
    Ok(T::lit(((a + b) / 2.0).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig<T> {
    pub logit_scale: T,
    /// Temperature for the `TempScaling` baseline; omitted when `None`.
    pub temperature: Option<T>,
}

impl<T: Scalar> Default for ScoringConfig<T> {
    fn default() -> Self {
        ScoringConfig {
            logit_scale: T::lit(DEFAULT_LOGIT_SCALE),
            temperature: None,
        }
    }
}

/// Everything computed for one test row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleScores<T> {
    pub sample_index: usize,
    pub true_class: usize,
    pub predicted_class: usize,
    pub correct: bool,
    pub p_max: T,
    /// One entry per supplied dictionary.
    pub fused: Vec<UncertaintyScore<T>>,
    pub baselines: Vec<(Method, T)>,
}

impl<T: Scalar> SampleScores<T> {
    /// `(method, confidence)` for every method, fused ones as `1 - s_unc`.
    pub fn confidences(&self) -> impl Iterator<Item = (Method, T)> + '_ {
        self.baselines
            .iter()
            .copied()
            .chain(self.fused.iter().map(|u| (u.method, u.confidence())))
    }
}

/// Similarity profiles of `rows`, in order.
pub fn profiles_for_rows<T: Scalar>(
    features: &EmbeddingMatrix<T>,
    rows: &[usize],
    text_bank: &TextBank<T>,
    logit_scale: T,
) -> Result<Vec<SimilarityProfile<T>>> {
    rows.par_iter()
        .map(|&r| classify(features.row(r), text_bank, logit_scale).map(|(p, _)| p))
        .collect()
}

/// Scores every test row: prediction, fused score per dictionary and baselines.
///
/// All dictionaries must cover every text-bank class; the intra-class softmax
/// runs over that full class set.
pub fn score_dataset<T: Scalar>(
    ds: &LabeledDataset,
    text_bank: &TextBank<T>,
    pca: &PcaModel<T>,
    dictionaries: &[&GaussianDictionary<T>],
    config: &ScoringConfig<T>,
) -> Result<Vec<SampleScores<T>>> {
    if !(config.logit_scale > T::zero()) {
        return Err(Error::InvalidArgument("logit scale must be positive".into()));
    }
    let test = ds.split(TEST_SPLIT)?;
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    for found in [text_bank.dims(), pca.input_dim()] {
        if found != ds.dims() {
            return Err(Error::DimensionMismatch {
                expected: ds.dims(),
                found,
            });
        }
    }
    if text_bank.classes() != ds.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "text bank has {} classes but the dataset names {}",
            text_bank.classes(),
            ds.num_classes()
        )));
    }
    let queried: Vec<usize> = (0..text_bank.classes()).collect();
    for dict in dictionaries {
        if dict.dim() != pca.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: pca.output_dim(),
                found: dict.dim(),
            });
        }
        if let Some(&missing) = queried.iter().find(|&&c| !dict.contains(c)) {
            return Err(Error::UnknownClass(missing));
        }
    }

    let features = ds.features::<T>()?;
    test.par_iter()
        .map(|&row| {
            let v = features.row(row);
            let true_class = ds.labels[row] as usize;
            let (profile, prediction) = classify(v, text_bank, config.logit_scale)?;
            let z = pca.project_vector(v)?;
            let fused = dictionaries
                .iter()
                .map(|dict| {
                    let intra =
                        intra_class_score(dict, z.as_slice(), prediction.predicted_class, &queried)?;
                    Ok(UncertaintyScore::fused(
                        Method::fused(dict.kind()),
                        &profile,
                        intra,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleScores {
                sample_index: row,
                true_class,
                predicted_class: prediction.predicted_class,
                correct: prediction.predicted_class == true_class,
                p_max: profile.p_max(),
                fused,
                baselines: baseline_scores(&profile, config.temperature),
            })
        })
        .collect()
}
