//! Anchor-dependent binary partition of the negative candidates.

use crate::encoder::EmbeddingBatch;
use crate::numerics::Tensor;

use super::kmeans::{kmeans2, KMeansConfig};
use super::{normalize_rows, normalize_vec, squared_distance, MiningError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    /// 1 marks the anchor-side group, 0 the far group; one entry per candidate.
    pub labels: Vec<usize>,
    /// 2 x D centroids in the normalized embedding space.
    pub centroids: Tensor,
    /// Which centroid the anchor is nearest to (ties toward 0).
    pub anchor_cluster: usize,
    pub degenerate: bool,
}

/// Cluster the L2-normalized candidates into two groups and label the group
/// whose centroid is nearest the (normalized) anchor with 1.
pub fn partition_negatives(
    anchor: &[f64],
    candidates: &Tensor,
    cfg: &KMeansConfig,
) -> Result<PartitionResult> {
    let m = candidates.shape()[0];
    if m < 2 {
        return Err(MiningError::TooFewCandidates(m));
    }
    if candidates.last_dim() != anchor.len() {
        return Err(MiningError::Mismatch(format!(
            "anchor dim {} vs candidate dim {}",
            anchor.len(),
            candidates.last_dim()
        )));
    }
    let normalized = normalize_rows(candidates);
    let clusters = kmeans2(&normalized, cfg)?;
    let anchor = normalize_vec(anchor);
    let d0 = squared_distance(&anchor, clusters.centroids.row(0));
    let d1 = squared_distance(&anchor, clusters.centroids.row(1));
    let anchor_cluster = usize::from(d1 < d0);
    let labels = clusters
        .assignments
        .iter()
        .map(|&a| usize::from(a == anchor_cluster))
        .collect();
    Ok(PartitionResult {
        labels,
        centroids: clusters.centroids,
        anchor_cluster,
        degenerate: clusters.degenerate,
    })
}

/// One anchor's training material: its embedding, its negative candidates, and
/// their partition labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityTriple {
    pub anchor: Vec<f64>,
    /// (N-1) x D raw candidate embeddings, ascending candidate index.
    pub candidates: Tensor,
    pub labels: Vec<usize>,
}

/// Partition every anchor of a batch against the opposite view's embeddings.
///
/// For anchor `i` the candidates are rows `j != i` of `z_hat`, in ascending
/// order of `j` — the same column convention the uncertainty matrix uses.
pub fn partition_batch(
    embeddings: &EmbeddingBatch,
    cfg: &KMeansConfig,
) -> Result<(Vec<PartitionResult>, Vec<AffinityTriple>)> {
    let n = embeddings.batch_size();
    if n < 3 {
        return Err(MiningError::TooFewCandidates(n.saturating_sub(1)));
    }
    let d = embeddings.z_hat.last_dim();
    let mut partitions = Vec::with_capacity(n);
    let mut triples = Vec::with_capacity(n);
    for i in 0..n {
        let anchor = embeddings.z_tilde.row(i).to_vec();
        let mut data = Vec::with_capacity((n - 1) * d);
        for j in 0..n {
            if j != i {
                data.extend_from_slice(embeddings.z_hat.row(j));
            }
        }
        let candidates = Tensor::new(vec![n - 1, d], data).expect("sized by construction");
        let partition = partition_negatives(&anchor, &candidates, cfg)?;
        triples.push(AffinityTriple {
            anchor,
            candidates,
            labels: partition.labels.clone(),
        });
        partitions.push(partition);
    }
    Ok((partitions, triples))
}
