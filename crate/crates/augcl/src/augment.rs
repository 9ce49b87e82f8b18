//! Stochastic graph augmentations for building contrastive views.
//!
//! Four transformations form the pool: node dropping, edge perturbation,
//! attribute masking, and random-walk subgraphs. A view pair is produced by
//! sampling two pool entries with replacement and applying them with
//! decorrelated sub-seeds, so one seed pins down the whole pair.

use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thiserror::Error;

use crate::data::{DataError, Graph};
use crate::numerics::Tensor;
use crate::seed::{derive, tag};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("cannot augment an empty graph")]
    EmptyGraph,
    #[error("augmentation pool is empty")]
    EmptyPool,
    #[error("ratio {0} outside [0, 1)")]
    InvalidRatio(f64),
    #[error("unknown augmentation kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Graph(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentationKind {
    NodeDrop,
    EdgePerturb,
    AttrMask,
    Subgraph,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 4] = [
        AugmentationKind::NodeDrop,
        AugmentationKind::EdgePerturb,
        AugmentationKind::AttrMask,
        AugmentationKind::Subgraph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationKind::NodeDrop => "node_drop",
            AugmentationKind::EdgePerturb => "edge_perturb",
            AugmentationKind::AttrMask => "attr_mask",
            AugmentationKind::Subgraph => "subgraph",
        }
    }
}

impl FromStr for AugmentationKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node_drop" => Ok(AugmentationKind::NodeDrop),
            "edge_perturb" => Ok(AugmentationKind::EdgePerturb),
            "attr_mask" => Ok(AugmentationKind::AttrMask),
            "subgraph" => Ok(AugmentationKind::Subgraph),
            other => Err(AugmentError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationSpec {
    kind: AugmentationKind,
    ratio: f64,
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(AugmentError::InvalidRatio(ratio));
        }
        Ok(Self { kind, ratio })
    }

    pub fn kind(&self) -> AugmentationKind {
        self.kind
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

/// All four kinds at the conventional default ratio.
pub fn default_pool() -> Vec<AugmentationSpec> {
    AugmentationKind::ALL
        .into_iter()
        .map(|kind| AugmentationSpec { kind, ratio: 0.2 })
        .collect()
}

/// Apply one augmentation. Deterministic in `(graph, spec, seed)`.
pub fn apply_augmentation(g: &Graph, spec: &AugmentationSpec, seed: u64) -> Result<Graph> {
    if g.node_count() == 0 {
        return Err(AugmentError::EmptyGraph);
    }
    if spec.ratio == 0.0 {
        return Ok(g.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match spec.kind {
        AugmentationKind::NodeDrop => node_drop(g, spec.ratio, &mut rng)?,
        AugmentationKind::EdgePerturb => edge_perturb(g, spec.ratio, &mut rng)?,
        AugmentationKind::AttrMask => attr_mask(g, spec.ratio, &mut rng)?,
        AugmentationKind::Subgraph => subgraph(g, spec.ratio, &mut rng)?,
    };
    Ok(out)
}

/// Draw the two spec choices for a view pair (with replacement).
pub fn sample_view_specs(
    pool: &[AugmentationSpec],
    seed: u64,
) -> Result<(AugmentationSpec, AugmentationSpec)> {
    if pool.is_empty() {
        return Err(AugmentError::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag("pick")]));
    let first = pool[rng.gen_range(0..pool.len())];
    let second = pool[rng.gen_range(0..pool.len())];
    Ok((first, second))
}

/// Produce the two contrastive views of a graph.
pub fn sample_two_views(
    g: &Graph,
    pool: &[AugmentationSpec],
    seed: u64,
) -> Result<(Graph, Graph)> {
    let (s1, s2) = sample_view_specs(pool, seed)?;
    let a = apply_augmentation(g, &s1, derive(seed, &[tag("view"), 0]))?;
    let b = apply_augmentation(g, &s2, derive(seed, &[tag("view"), 1]))?;
    Ok((a, b))
}

fn node_drop(g: &Graph, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let n = g.node_count();
    let k = ((ratio * n as f64).floor() as usize).min(n - 1);
    let mut dropped = vec![false; n];
    for i in index::sample(rng, n, k) {
        dropped[i] = true;
    }
    keep_nodes(g, &dropped)
}

fn subgraph(g: &Graph, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let n = g.node_count();
    let budget = ((1.0 - ratio) * n as f64).ceil() as usize;
    let adjacency = g.adjacency();
    let mut current = rng.gen_range(0..n);
    let mut visited = vec![false; n];
    visited[current] = true;
    for _ in 1..budget {
        let neighbors = &adjacency[current];
        if neighbors.is_empty() {
            break;
        }
        current = neighbors[rng.gen_range(0..neighbors.len())];
        visited[current] = true;
    }
    let dropped: Vec<bool> = visited.iter().map(|&v| !v).collect();
    keep_nodes(g, &dropped)
}

/// Induced subgraph on the nodes not marked dropped, re-indexed densely.
fn keep_nodes(g: &Graph, dropped: &[bool]) -> Result<Graph> {
    let mut remap = vec![usize::MAX; g.node_count()];
    let mut kept = 0usize;
    for (old, &gone) in dropped.iter().enumerate() {
        if !gone {
            remap[old] = kept;
            kept += 1;
        }
    }
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .filter(|&&(u, v)| !dropped[u] && !dropped[v])
        .map(|&(u, v)| (remap[u], remap[v]))
        .collect();
    let dim = g.node_features().shape()[1];
    let mut data = Vec::with_capacity(kept * dim);
    for (old, &gone) in dropped.iter().enumerate() {
        if !gone {
            data.extend_from_slice(g.node_features().row(old));
        }
    }
    let features = Tensor::new(vec![kept, dim], data).expect("sized by construction");
    Ok(Graph::new(kept, edges, features, g.label())?)
}

fn edge_perturb(g: &Graph, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let n = g.node_count();
    let m = g.edge_count();
    let r = (ratio * m as f64).floor() as usize;
    let mut removed = vec![false; m];
    for i in index::sample(rng, m, r) {
        removed[i] = true;
    }
    let mut edges: std::collections::BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed[*i])
        .map(|(_, &e)| e)
        .collect();

    // Add r fresh edges from the complement; rejection sampling first, exact
    // enumeration as the dense-graph fallback.
    let mut added = 0usize;
    let mut attempts = 0usize;
    let attempt_cap = 100 * r + 1000;
    while added < r && attempts < attempt_cap {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if edges.insert(e) {
            added += 1;
        }
    }
    if added < r {
        let mut complement = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if !edges.contains(&(u, v)) {
                    complement.push((u, v));
                }
            }
        }
        for i in index::sample(rng, complement.len(), r - added) {
            edges.insert(complement[i]);
        }
    }
    Ok(Graph::new(
        n,
        edges.into_iter().collect(),
        g.node_features().clone(),
        g.label(),
    )?)
}

fn attr_mask(g: &Graph, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let n = g.node_count();
    let k = (ratio * n as f64).floor() as usize;
    let dim = g.node_features().shape()[1];
    let mut features = g.node_features().clone();
    for i in index::sample(rng, n, k) {
        features.data_mut()[i * dim..(i + 1) * dim].fill(0.0);
    }
    Ok(Graph::new(
        n,
        g.edges().to_vec(),
        features,
        g.label(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> Graph {
        let features = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, 0.0],
        ]);
        Graph::new(4, vec![(0, 1), (1, 2), (2, 3)], features, Some(0)).unwrap()
    }

    #[test]
    fn zero_ratio_is_identity_for_every_kind() {
        let g = path4();
        for kind in AugmentationKind::ALL {
            let spec = AugmentationSpec::new(kind, 0.0).unwrap();
            assert_eq!(apply_augmentation(&g, &spec, 123).unwrap(), g);
        }
    }

    #[test]
    fn node_drop_removes_floor_of_ratio() {
        let g = path4();
        let spec = AugmentationSpec::new(AugmentationKind::NodeDrop, 0.5).unwrap();
        let out = apply_augmentation(&g, &spec, 9).unwrap();
        assert_eq!(out.node_count(), 2);
        assert_eq!(out.node_features().shape(), &[2, 2]);
    }

    #[test]
    fn node_drop_never_empties() {
        let features = Tensor::from_rows(&[vec![1.0]]);
        let g = Graph::new(1, vec![], features, None).unwrap();
        let spec = AugmentationSpec::new(AugmentationKind::NodeDrop, 0.99).unwrap();
        for seed in 0..20 {
            assert_eq!(apply_augmentation(&g, &spec, seed).unwrap().node_count(), 1);
        }
    }

    #[test]
    fn edge_perturb_preserves_edge_count() {
        let g = path4();
        let spec = AugmentationSpec::new(AugmentationKind::EdgePerturb, 0.6).unwrap();
        for seed in 0..50 {
            let out = apply_augmentation(&g, &spec, seed).unwrap();
            assert_eq!(out.edge_count(), g.edge_count());
        }
    }

    #[test]
    fn attr_mask_zeroes_rows_only() {
        let g = path4();
        let spec = AugmentationSpec::new(AugmentationKind::AttrMask, 0.5).unwrap();
        let out = apply_augmentation(&g, &spec, 3).unwrap();
        assert_eq!(out.edges(), g.edges());
        let zeroed = (0..4)
            .filter(|&r| out.node_features().row(r).iter().all(|&v| v == 0.0))
            .count();
        assert_eq!(zeroed, 2);
    }

    #[test]
    fn subgraph_keeps_walk_budget() {
        let g = path4();
        let spec = AugmentationSpec::new(AugmentationKind::Subgraph, 0.5).unwrap();
        for seed in 0..20 {
            let out = apply_augmentation(&g, &spec, seed).unwrap();
            assert!(out.node_count() >= 1 && out.node_count() <= 2);
        }
    }

    #[test]
    fn same_triple_same_output() {
        let g = path4();
        for kind in AugmentationKind::ALL {
            let spec = AugmentationSpec::new(kind, 0.5).unwrap();
            assert_eq!(
                apply_augmentation(&g, &spec, 77).unwrap(),
                apply_augmentation(&g, &spec, 77).unwrap()
            );
        }
    }

    #[test]
    fn identity_pool_gives_identical_views() {
        let g = path4();
        let pool = vec![AugmentationSpec::new(AugmentationKind::NodeDrop, 0.0).unwrap()];
        let (a, b) = sample_two_views(&g, &pool, 5).unwrap();
        assert_eq!(a, g);
        assert_eq!(b, g);
    }

    #[test]
    fn view_pair_is_deterministic() {
        let g = path4();
        let pool = default_pool();
        assert_eq!(
            sample_two_views(&g, &pool, 41).unwrap(),
            sample_two_views(&g, &pool, 41).unwrap()
        );
    }

    #[test]
    fn spec_draws_are_roughly_uniform() {
        let pool = default_pool();
        let mut counts = [0usize; 4];
        for seed in 0..1000u64 {
            let (first, _) = sample_view_specs(&pool, seed).unwrap();
            let slot = AugmentationKind::ALL
                .iter()
                .position(|&k| k == first.kind())
                .unwrap();
            counts[slot] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / 1000.0;
            assert!((freq - 0.25).abs() <= 0.05, "kind frequency {freq}");
        }
    }

    #[test]
    fn ratio_one_rejected() {
        assert!(matches!(
            AugmentationSpec::new(AugmentationKind::NodeDrop, 1.0),
            Err(AugmentError::InvalidRatio(_))
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in AugmentationKind::ALL {
            assert_eq!(kind.as_str().parse::<AugmentationKind>().unwrap(), kind);
        }
    }
}
