//! Uncertainty matrices, weight conversion, and the ablation estimators.

use std::str::FromStr;

use crate::encoder::EmbeddingBatch;
use crate::numerics::Tensor;

use super::gambler::{flatten_triples, mlp_dims, mlp_probs, train_masked_mlp, GamblerConfig};
use super::partition::{AffinityTriple, PartitionResult};
use super::{normalize_vec, GamblerParams, MiningError, Result};

/// N x (N-1) uncertainty scores; `column_map[i][c]` names the candidate index
/// that column `c` of row `i` refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMatrix {
    u: Tensor,
    column_map: Vec<Vec<usize>>,
}

impl UncertaintyMatrix {
    pub(crate) fn from_rows(u: Tensor, column_map: Vec<Vec<usize>>) -> Self {
        Self { u, column_map }
    }

    /// Build from `n` rows of `n - 1` scores, columns in ascending candidate
    /// order with the anchor skipped.
    pub fn from_scores(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(MiningError::TooFewCandidates(n.saturating_sub(1)));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n - 1 {
                return Err(MiningError::Mismatch(format!(
                    "row {i} has {} scores for {} candidates",
                    row.len(),
                    n - 1
                )));
            }
            if let Some(bad) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(MiningError::Mismatch(format!(
                    "row {i} score {bad} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            u: Tensor::from_rows(rows),
            column_map: standard_column_map(n),
        })
    }

    pub fn anchors(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn columns(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn value(&self, anchor: usize, column: usize) -> f64 {
        self.u.row(anchor)[column]
    }

    pub fn candidate(&self, anchor: usize, column: usize) -> usize {
        self.column_map[anchor][column]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.u
    }

    pub fn mean(&self) -> f64 {
        self.u.data().iter().sum::<f64>() / self.u.numel() as f64
    }
}

/// Default ascending-j-skipping-i column layout shared by every builder.
fn standard_column_map(n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i).collect())
        .collect()
}

/// Score every anchor/negative pair with the trained abstention model.
pub fn build_uncertainty_matrix(
    embeddings: &EmbeddingBatch,
    params: &GamblerParams,
) -> Result<UncertaintyMatrix> {
    let n = embeddings.batch_size();
    let d = embeddings.z_hat.last_dim();
    if n < 2 {
        return Err(MiningError::TooFewCandidates(n.saturating_sub(1)));
    }
    if 2 * d != params.input_dim() {
        return Err(MiningError::ShapeDrift {
            expected: params.input_dim(),
            got: 2 * d,
        });
    }

    let mut rows = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        let anchor = normalize_vec(embeddings.z_tilde.row(i));
        for j in 0..n {
            if j != i {
                let mut row = anchor.clone();
                row.extend(normalize_vec(embeddings.z_hat.row(j)));
                rows.push(row);
            }
        }
    }
    let probs = params.probs(&Tensor::from_rows(&rows))?;
    let u: Vec<f64> = (0..probs.shape()[0]).map(|s| probs.row(s)[2]).collect();
    Ok(UncertaintyMatrix {
        u: Tensor::new(vec![n, n - 1], u).expect("sized by construction"),
        column_map: standard_column_map(n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightPolicy {
    /// alpha = 1 / mean(U): the weights average to exactly 1.
    ReciprocalMean,
    Fixed(f64),
}

/// N x (N-1) hardness weights `w = alpha * u`, plus the alpha that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: Tensor,
    alpha: f64,
    column_map: Vec<Vec<usize>>,
}

impl WeightMatrix {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn value(&self, anchor: usize, column: usize) -> f64 {
        self.w.row(anchor)[column]
    }

    pub fn candidate(&self, anchor: usize, column: usize) -> usize {
        self.column_map[anchor][column]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.w
    }

    pub fn mean(&self) -> f64 {
        self.w.data().iter().sum::<f64>() / self.w.numel() as f64
    }

    /// Row of weights for one anchor, aligned with its column map.
    pub fn row(&self, anchor: usize) -> &[f64] {
        self.w.row(anchor)
    }

    /// Uniform all-ones weights: plain contrastive behavior.
    pub fn uniform(n: usize) -> Self {
        Self {
            w: Tensor::filled(&[n, n - 1], 1.0),
            alpha: 1.0,
            column_map: standard_column_map(n),
        }
    }
}

pub fn weights_from_uncertainty(
    u: &UncertaintyMatrix,
    policy: WeightPolicy,
) -> Result<WeightMatrix> {
    let alpha = match policy {
        WeightPolicy::ReciprocalMean => {
            let mean = u.mean();
            if mean <= 0.0 {
                return Err(MiningError::ZeroMeanUncertainty);
            }
            1.0 / mean
        }
        WeightPolicy::Fixed(alpha) => {
            if alpha <= 0.0 {
                return Err(MiningError::InvalidConfig(format!(
                    "alpha {alpha} must be positive"
                )));
            }
            alpha
        }
    };
    Ok(WeightMatrix {
        w: u.matrix().map(|x| alpha * x),
        alpha,
        column_map: u.column_map.clone(),
    })
}

/// Plain two-class affinity classifier used by the softmax-response and
/// entropy ablation estimators; same architecture and labels as the
/// abstention model, but trained with ordinary cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityClassifier {
    tensors: std::collections::BTreeMap<String, Tensor>,
    dims: Vec<usize>,
}

impl AffinityClassifier {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }
}

pub fn train_affinity_classifier(
    triples: &[AffinityTriple],
    cfg: &GamblerConfig,
    seed: u64,
) -> Result<AffinityClassifier> {
    cfg.validate()?;
    let (x, labels) = flatten_triples(triples)?;
    let dims = mlp_dims(x.last_dim(), cfg, 2);
    // cross-entropy via the same masked-log objective: select p_label alone
    let mut masks = Tensor::zeros(&[labels.len(), 2]);
    for (s, &label) in labels.iter().enumerate() {
        masks.data_mut()[s * 2 + label] = 1.0;
    }
    let tensors = train_masked_mlp(&x, &masks, &dims, cfg, seed)?;
    Ok(AffinityClassifier { tensors, dims })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltMethod {
    SoftmaxResponse,
    Entropy,
    Distance,
}

impl AltMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AltMethod::SoftmaxResponse => "softmax_response",
            AltMethod::Entropy => "entropy",
            AltMethod::Distance => "distance",
        }
    }
}

impl FromStr for AltMethod {
    type Err = MiningError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax_response" => Ok(AltMethod::SoftmaxResponse),
            "entropy" => Ok(AltMethod::Entropy),
            "distance" => Ok(AltMethod::Distance),
            other => Err(MiningError::InvalidConfig(format!(
                "unknown uncertainty method {other:?}"
            ))),
        }
    }
}

/// Ablation estimators of the uncertainty matrix.
///
/// `softmax_response`/`entropy` need the trained classifier; `distance` reads
/// each candidate's distances to its anchor's two centroids.
pub fn alt_uncertainty(
    method: AltMethod,
    embeddings: &EmbeddingBatch,
    partitions: &[PartitionResult],
    classifier: Option<&AffinityClassifier>,
) -> Result<UncertaintyMatrix> {
    let n = embeddings.batch_size();
    if n < 2 {
        return Err(MiningError::TooFewCandidates(n.saturating_sub(1)));
    }
    match method {
        AltMethod::Distance => {
            if partitions.len() != n {
                return Err(MiningError::Mismatch(format!(
                    "{} partitions for {n} anchors",
                    partitions.len()
                )));
            }
            let mut u = Vec::with_capacity(n * (n - 1));
            for (i, part) in partitions.iter().enumerate() {
                let _ = i;
                for j in 0..n {
                    if j != i {
                        let c = normalize_vec(embeddings.z_hat.row(j));
                        u.push(distance_uncertainty(&c, &part.centroids));
                    }
                }
            }
            Ok(UncertaintyMatrix {
                u: Tensor::new(vec![n, n - 1], u).expect("sized by construction"),
                column_map: standard_column_map(n),
            })
        }
        AltMethod::SoftmaxResponse | AltMethod::Entropy => {
            let clf = classifier.ok_or(MiningError::MissingClassifier)?;
            let d = embeddings.z_hat.last_dim();
            if 2 * d != clf.input_dim() {
                return Err(MiningError::ShapeDrift {
                    expected: clf.input_dim(),
                    got: 2 * d,
                });
            }
            let mut rows = Vec::with_capacity(n * (n - 1));
            for i in 0..n {
                let anchor = normalize_vec(embeddings.z_tilde.row(i));
                for j in 0..n {
                    if j != i {
                        let mut row = anchor.clone();
                        row.extend(normalize_vec(embeddings.z_hat.row(j)));
                        rows.push(row);
                    }
                }
            }
            let probs = mlp_probs(&clf.tensors, &clf.dims, &Tensor::from_rows(&rows))?;
            let u: Vec<f64> = (0..probs.shape()[0])
                .map(|s| {
                    let p = probs.row(s);
                    match method {
                        AltMethod::SoftmaxResponse => 2.0 * (1.0 - p[0].max(p[1])),
                        AltMethod::Entropy => binary_entropy(p[0], p[1]),
                        AltMethod::Distance => unreachable!(),
                    }
                })
                .collect();
            Ok(UncertaintyMatrix {
                u: Tensor::new(vec![n, n - 1], u).expect("sized by construction"),
                column_map: standard_column_map(n),
            })
        }
    }
}

/// `1 - |d1 - d2| / (d1 + d2)` over Euclidean centroid distances; a point with
/// no distance signal at all counts as maximally ambiguous.
fn distance_uncertainty(candidate: &[f64], centroids: &Tensor) -> f64 {
    let d1 = super::squared_distance(candidate, centroids.row(0)).sqrt();
    let d2 = super::squared_distance(candidate, centroids.row(1)).sqrt();
    if d1 + d2 == 0.0 {
        return 1.0;
    }
    1.0 - (d1 - d2).abs() / (d1 + d2)
}

/// Shannon entropy of (p, q) normalized to [0, 1] by ln 2.
fn binary_entropy(p: f64, q: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    (term(p) + term(q)) / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::super::gambler::train_gambler;
    use super::super::kmeans::KMeansConfig;
    use super::super::partition::partition_batch;
    use super::*;

    fn spread_embeddings(n: usize) -> EmbeddingBatch {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::PI;
                vec![t.cos(), t.sin()]
            })
            .collect();
        EmbeddingBatch {
            z_tilde: Tensor::from_rows(&rows),
            z_hat: Tensor::from_rows(&rows),
        }
    }

    fn quick_cfg() -> GamblerConfig {
        GamblerConfig {
            epochs: 2,
            hidden: 8,
            ..GamblerConfig::default()
        }
    }

    #[test]
    fn uncertainty_matrix_shape_and_range() {
        let emb = spread_embeddings(4);
        let (_, triples) = partition_batch(&emb, &KMeansConfig::new(0)).unwrap();
        let params = train_gambler(&triples, &quick_cfg(), 1).unwrap();
        let u = build_uncertainty_matrix(&emb, &params).unwrap();
        assert_eq!(u.anchors(), 4);
        assert_eq!(u.columns(), 3);
        for i in 0..4 {
            for c in 0..3 {
                let v = u.value(i, c);
                assert!((0.0..=1.0).contains(&v));
                assert_ne!(u.candidate(i, c), i);
            }
        }
    }

    #[test]
    fn identical_embeddings_give_uniform_uncertainty() {
        let rows = vec![vec![0.6, 0.8]; 5];
        let emb = EmbeddingBatch {
            z_tilde: Tensor::from_rows(&rows),
            z_hat: Tensor::from_rows(&rows),
        };
        let (_, triples) = partition_batch(&emb, &KMeansConfig::new(0)).unwrap();
        let params = train_gambler(&triples, &quick_cfg(), 1).unwrap();
        let u = build_uncertainty_matrix(&emb, &params).unwrap();
        let first = u.value(0, 0);
        for i in 0..u.anchors() {
            for c in 0..u.columns() {
                assert!((u.value(i, c) - first).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reciprocal_mean_weights_hand_example() {
        let u = UncertaintyMatrix {
            u: Tensor::from_rows(&[vec![0.2, 0.3], vec![0.1, 0.4]]),
            column_map: vec![vec![1, 2], vec![0, 2]],
        };
        let w = weights_from_uncertainty(&u, WeightPolicy::ReciprocalMean).unwrap();
        assert!((w.alpha() - 4.0).abs() < 1e-12);
        assert_eq!(w.row(0), &[0.8, 1.2]);
        assert_eq!(w.row(1), &[0.4, 1.6]);
    }

    #[test]
    fn weight_mean_is_one_under_reciprocal_policy() {
        let u = UncertaintyMatrix {
            u: Tensor::from_rows(&[vec![0.13, 0.77, 0.05], vec![0.9, 0.33, 0.21]]),
            column_map: vec![vec![1, 2, 3], vec![0, 2, 3]],
        };
        let w = weights_from_uncertainty(&u, WeightPolicy::ReciprocalMean).unwrap();
        assert!((w.mean() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn equal_uncertainties_reduce_to_uniform_weights() {
        let u = UncertaintyMatrix {
            u: Tensor::filled(&[3, 2], 0.4),
            column_map: standard_column_map(3),
        };
        let w = weights_from_uncertainty(&u, WeightPolicy::ReciprocalMean).unwrap();
        assert!(w.matrix().data().iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fixed_alpha_scales_directly() {
        let u = UncertaintyMatrix {
            u: Tensor::filled(&[2, 1], 0.5),
            column_map: standard_column_map(2),
        };
        let w = weights_from_uncertainty(&u, WeightPolicy::Fixed(3.0)).unwrap();
        assert_eq!(w.alpha(), 3.0);
        assert!(w.matrix().data().iter().all(|&x| (x - 1.5).abs() < 1e-12));
    }

    #[test]
    fn zero_mean_uncertainty_rejected() {
        let u = UncertaintyMatrix {
            u: Tensor::zeros(&[2, 1]),
            column_map: standard_column_map(2),
        };
        assert!(matches!(
            weights_from_uncertainty(&u, WeightPolicy::ReciprocalMean),
            Err(MiningError::ZeroMeanUncertainty)
        ));
    }

    #[test]
    fn distance_method_boundary_cases() {
        let centroids = Tensor::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]);
        // equidistant: u = 1
        assert!((distance_uncertainty(&[1.0, 0.0], &centroids) - 1.0).abs() < 1e-15);
        // sitting on a centroid: u = 0
        assert!((distance_uncertainty(&[0.0, 0.0], &centroids) - 0.0).abs() < 1e-15);
        // degenerate: candidate equals both identical centroids
        let same = Tensor::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(distance_uncertainty(&[1.0, 1.0], &same), 1.0);
    }

    #[test]
    fn confident_prediction_scores_zero_uncertainty() {
        assert_eq!(2.0 * (1.0 - 1.0f64.max(0.0)), 0.0);
        assert_eq!(binary_entropy(1.0, 0.0), 0.0);
        assert!((binary_entropy(0.5, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn alt_methods_produce_valid_matrices() {
        let emb = spread_embeddings(5);
        let (partitions, triples) = partition_batch(&emb, &KMeansConfig::new(3)).unwrap();
        let clf = train_affinity_classifier(&triples, &quick_cfg(), 2).unwrap();
        for method in [AltMethod::SoftmaxResponse, AltMethod::Entropy] {
            let u = alt_uncertainty(method, &emb, &partitions, Some(&clf)).unwrap();
            assert_eq!(u.anchors(), 5);
            assert!(u.matrix().data().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
        let u = alt_uncertainty(AltMethod::Distance, &emb, &partitions, None).unwrap();
        assert!(u.matrix().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn classifier_required_for_model_methods() {
        let emb = spread_embeddings(4);
        let (partitions, _) = partition_batch(&emb, &KMeansConfig::new(0)).unwrap();
        assert!(matches!(
            alt_uncertainty(AltMethod::Entropy, &emb, &partitions, None),
            Err(MiningError::MissingClassifier)
        ));
    }
}
