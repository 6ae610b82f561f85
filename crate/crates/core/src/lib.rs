//! Post-hoc error detection for contrastive vision-language classifiers.
//!
//! Image embeddings are projected with a global PCA basis, each class gets a
//! Gaussian over its projected training features, and at test time the
//! softmax-normalized log-likelihood of the predicted class is averaged with
//! the image-text softmax confidence into one uncertainty score. Predictions
//! themselves are never changed.
//!
//! Model types are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix them to `f64`, which is what the command-line pipeline uses.

pub mod embedding_store;
pub mod error;
pub mod format;
pub mod gaussian_dict;
pub mod label_shift;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod projector;
pub mod scorer;
pub mod synthetic;

pub use embedding_store::{
    l2_normalize, load_dataset, partition_by_class, save_dataset, ClassPartition, EmbeddingMatrix,
    LabeledDataset, TEST_SPLIT, TRAIN_SPLIT,
};
pub use error::{Error, Result};
pub use gaussian_dict::{build_dictionary, fit_class_gaussian, ClassGaussian, CovarianceKind, GaussianDictionary};
pub use label_shift::{build_superclass_dictionary, build_superclass_map, select_k, SuperclassMap};
pub use metrics::{accuracy, aupr, auroc, f1_sweep, fpr_at_tpr, EvaluationReport, ScoredSample};
pub use num::Scalar;
pub use projector::{condition_report, fit_pca, ConditionReport, PcaModel, SpaceTag};
pub use scorer::{
    baseline_scores, calibrate_temperature, classify, fused_uncertainty, intra_class_score,
    score_dataset, Method, SampleScores, ScoringConfig, SimilarityProfile, TextBank, UncertaintyScore,
};

/// Default working precision.
pub type Real = f64;

pub type Matrix = EmbeddingMatrix<Real>;
pub type Pca = PcaModel<Real>;
pub type Gaussian = ClassGaussian<Real>;
pub type Dictionary = GaussianDictionary<Real>;
pub type Profile = SimilarityProfile<Real>;
pub type Bank = TextBank<Real>;

/// Single-precision variants.
pub type Pca32 = PcaModel<f32>;
pub type Dictionary32 = GaussianDictionary<f32>;
