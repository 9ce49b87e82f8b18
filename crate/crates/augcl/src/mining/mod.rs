//! Hard-negative mining: anchor-dependent binary partitions of the negatives,
//! an abstention-trained MLP that scores how uncertain each negative's
//! affinity label is, and the conversion of those scores into loss weights.

mod gambler;
mod kmeans;
mod partition;
mod uncertainty;

pub use gambler::{
    abstention_loss, gambler_infer, train_gambler, GamblerConfig, GamblerParams,
    REWARD_SEARCH_SPACE,
};
pub use kmeans::{kmeans2, KMeans2, KMeansConfig};
pub use partition::{partition_batch, partition_negatives, AffinityTriple, PartitionResult};
pub use uncertainty::{
    alt_uncertainty, build_uncertainty_matrix, train_affinity_classifier, weights_from_uncertainty,
    AffinityClassifier, AltMethod, UncertaintyMatrix, WeightMatrix, WeightPolicy,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("cannot cluster zero points")]
    EmptyPoints,
    #[error("need at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("sample {index} has label {label}, expected 0 or 1")]
    BadLabel { index: usize, label: usize },
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}, sample {sample}")]
    NonFiniteLoss {
        epoch: usize,
        minibatch: usize,
        sample: usize,
    },
    #[error("embedding width {got} does not match the trained input width {expected}")]
    ShapeDrift { expected: usize, got: usize },
    #[error("uncertainty mean is zero; fall back to uniform weights")]
    ZeroMeanUncertainty,
    #[error("method requires a trained affinity classifier")]
    MissingClassifier,
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, MiningError>;

/// Row-wise L2 normalization used before clustering and featurization; zero
/// rows stay zero.
pub(crate) fn normalize_rows(t: &crate::numerics::Tensor) -> crate::numerics::Tensor {
    let dim = t.last_dim();
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(dim) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    crate::numerics::Tensor::new(t.shape().to_vec(), data).expect("shape unchanged")
}

pub(crate) fn normalize_vec(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
