//! Graph data model, TU-format ingestion, batching, synthetic generation and
//! stratified splitting.

mod cache;
mod splits;
mod synth;
mod tu;

pub use splits::stratified_folds;
pub use synth::{gen_synthetic, SyntheticSpec};
pub use tu::{load_tu_dataset, parse_tu_dataset, parse_tu_dataset_with, write_tu_dataset};

use std::path::PathBuf;

use thiserror::Error;

use crate::numerics::Tensor;

/// Default width of the degree one-hot fallback featurization.
pub const DEGREE_FEATURE_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {detail}")]
    Parse {
        file: String,
        line: usize,
        detail: String,
    },
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid collection: {0}")]
    InvalidCollection(String),
    #[error("graph index {index} out of range for {len} graphs")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("cannot batch zero graphs")]
    EmptyBatch,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("cannot split {n} items into {k} folds")]
    BadFoldCount { k: usize, n: usize },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A single undirected graph with dense node features.
///
/// Edges are stored once in canonical `(lo, hi)` order; they are expanded to
/// both directions when a batch is built for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    node_features: Tensor,
    label: Option<usize>,
}

impl Graph {
    pub fn new(
        node_count: usize,
        mut edges: Vec<(usize, usize)>,
        node_features: Tensor,
        label: Option<usize>,
    ) -> Result<Self> {
        if node_features.shape().len() != 2 || node_features.shape()[0] != node_count {
            return Err(DataError::InvalidGraph(format!(
                "feature matrix {:?} does not match {node_count} nodes",
                node_features.shape()
            )));
        }
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(DataError::InvalidGraph(format!("self-loop at node {}", e.0)));
            }
            if e.0 >= node_count || e.1 >= node_count {
                return Err(DataError::InvalidGraph(format!(
                    "edge ({}, {}) out of range for {node_count} nodes",
                    e.0, e.1
                )));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        if edges.len() != before {
            return Err(DataError::InvalidGraph("duplicate undirected edge".into()));
        }
        Ok(Self {
            node_count,
            edges,
            node_features,
            label,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical undirected edge list, sorted, each edge once as `(lo, hi)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.node_count];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Neighbor lists, ascending within each node.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for n in adj.iter_mut() {
            n.sort_unstable();
        }
        adj
    }
}

/// A dataset of graphs sharing one feature space and label set.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphCollection {
    graphs: Vec<Graph>,
    feature_dim: usize,
    class_count: usize,
}

impl GraphCollection {
    pub fn new(graphs: Vec<Graph>, class_count: usize) -> Result<Self> {
        let feature_dim = match graphs.first() {
            Some(g) => g.node_features.shape()[1],
            None => return Err(DataError::InvalidCollection("no graphs".into())),
        };
        for (i, g) in graphs.iter().enumerate() {
            if g.node_features.shape()[1] != feature_dim {
                return Err(DataError::InvalidCollection(format!(
                    "graph {i} has feature dim {}, expected {feature_dim}",
                    g.node_features.shape()[1]
                )));
            }
            if let Some(label) = g.label {
                if label >= class_count {
                    return Err(DataError::InvalidCollection(format!(
                        "graph {i} has label {label}, class count is {class_count}"
                    )));
                }
            }
        }
        Ok(Self {
            graphs,
            feature_dim,
            class_count,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Labels of all graphs, in order; errors if any graph is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(i, g)| {
                g.label
                    .ok_or_else(|| DataError::InvalidCollection(format!("graph {i} is unlabeled")))
            })
            .collect()
    }
}

/// Disjoint union of several graphs, ready for the encoder.
///
/// Node indices are offset so each member occupies a contiguous block;
/// undirected edges appear in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    node_features: Tensor,
    edge_src: Vec<usize>,
    edge_dst: Vec<usize>,
    pooling_index: Vec<usize>,
    batch_size: usize,
    labels: Vec<Option<usize>>,
}

impl GraphBatch {
    pub fn from_graphs<'a, I>(graphs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Graph>,
    {
        let graphs: Vec<&Graph> = graphs.into_iter().collect();
        if graphs.is_empty() {
            return Err(DataError::EmptyBatch);
        }
        let feature_dim = graphs[0].node_features.shape()[1];
        let total_nodes: usize = graphs.iter().map(|g| g.node_count).sum();
        let total_arcs: usize = graphs.iter().map(|g| 2 * g.edges.len()).sum();

        let mut features = Vec::with_capacity(total_nodes * feature_dim);
        let mut edge_src = Vec::with_capacity(total_arcs);
        let mut edge_dst = Vec::with_capacity(total_arcs);
        let mut pooling_index = Vec::with_capacity(total_nodes);
        let mut labels = Vec::with_capacity(graphs.len());
        let mut offset = 0usize;
        for (gi, g) in graphs.iter().enumerate() {
            if g.node_features.shape()[1] != feature_dim {
                return Err(DataError::InvalidCollection(format!(
                    "batched graph {gi} has feature dim {}, expected {feature_dim}",
                    g.node_features.shape()[1]
                )));
            }
            features.extend_from_slice(g.node_features.data());
            for &(u, v) in &g.edges {
                edge_src.push(offset + u);
                edge_dst.push(offset + v);
                edge_src.push(offset + v);
                edge_dst.push(offset + u);
            }
            pooling_index.extend(std::iter::repeat(gi).take(g.node_count));
            labels.push(g.label);
            offset += g.node_count;
        }
        Ok(Self {
            node_features: Tensor::new(vec![total_nodes, feature_dim], features)
                .expect("feature buffer sized by construction"),
            edge_src,
            edge_dst,
            pooling_index,
            batch_size: graphs.len(),
            labels,
        })
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn edge_src(&self) -> &[usize] {
        &self.edge_src
    }

    pub fn edge_dst(&self) -> &[usize] {
        &self.edge_dst
    }

    pub fn pooling_index(&self) -> &[usize] {
        &self.pooling_index
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn total_nodes(&self) -> usize {
        self.pooling_index.len()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }
}

/// Batch selected members of a collection by index.
pub fn batch_graphs(collection: &GraphCollection, indices: &[usize]) -> Result<GraphBatch> {
    let mut members = Vec::with_capacity(indices.len());
    for &i in indices {
        let g = collection
            .graphs
            .get(i)
            .ok_or(DataError::IndexOutOfRange {
                index: i,
                len: collection.graphs.len(),
            })?;
        members.push(g);
    }
    GraphBatch::from_graphs(members)
}

/// One-hot degree featurization shared across a set of graphs.
///
/// Width is `min(max_degree + 1, cap)`; degrees at or above the cap share the
/// last slot.
pub(crate) fn degree_feature_tensors(degrees: &[Vec<usize>], cap: usize) -> (usize, Vec<Tensor>) {
    let max_degree = degrees
        .iter()
        .flat_map(|d| d.iter().copied())
        .max()
        .unwrap_or(0);
    let width = (max_degree + 1).min(cap.max(1));
    let tensors = degrees
        .iter()
        .map(|d| {
            let mut data = vec![0.0; d.len() * width];
            for (row, &deg) in d.iter().enumerate() {
                data[row * width + deg.min(width - 1)] = 1.0;
            }
            Tensor::new(vec![d.len(), width], data).expect("sized by construction")
        })
        .collect();
    (width, tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn triangle_and_edge() -> GraphCollection {
        let tri = Graph::new(
            3,
            vec![(0, 1), (1, 2), (0, 2)],
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]),
            Some(0),
        )
        .unwrap();
        let edge = Graph::new(
            2,
            vec![(0, 1)],
            Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            Some(1),
        )
        .unwrap();
        GraphCollection::new(vec![tri, edge], 2).unwrap()
    }

    #[test]
    fn graph_rejects_self_loop() {
        let r = Graph::new(2, vec![(1, 1)], Tensor::zeros(&[2, 1]), None);
        assert!(matches!(r, Err(DataError::InvalidGraph(_))));
    }

    #[test]
    fn graph_rejects_duplicate_edges_in_either_order() {
        let r = Graph::new(3, vec![(0, 1), (1, 0)], Tensor::zeros(&[3, 1]), None);
        assert!(matches!(r, Err(DataError::InvalidGraph(_))));
    }

    #[test]
    fn graph_canonicalizes_edge_order() {
        let g = Graph::new(3, vec![(2, 0), (1, 0)], Tensor::zeros(&[3, 1]), None).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
    }

    #[test]
    fn singleton_batch_pooling_index() {
        let g = Graph::new(1, vec![], Tensor::zeros(&[1, 4]), Some(0)).unwrap();
        let batch = GraphBatch::from_graphs([&g]).unwrap();
        assert_eq!(batch.pooling_index(), &[0]);
        assert_eq!(batch.batch_size(), 1);
    }

    #[test]
    fn fixture_batch_layout() {
        let c = triangle_and_edge();
        let batch = batch_graphs(&c, &[0, 1]).unwrap();
        assert_eq!(batch.total_nodes(), 5);
        assert_eq!(batch.pooling_index(), &[0, 0, 0, 1, 1]);
        // second graph's single edge lands at offset 3, both directions present
        assert!(batch
            .edge_src()
            .iter()
            .zip(batch.edge_dst())
            .any(|(&s, &d)| s == 3 && d == 4));
        assert!(batch
            .edge_src()
            .iter()
            .zip(batch.edge_dst())
            .any(|(&s, &d)| s == 4 && d == 3));
    }

    #[test]
    fn batch_is_deterministic() {
        let c = triangle_and_edge();
        let a = batch_graphs(&c, &[1, 0]).unwrap();
        let b = batch_graphs(&c, &[1, 0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_unmerge_recovers_features() {
        let c = triangle_and_edge();
        let batch = batch_graphs(&c, &[0, 1]).unwrap();
        let dim = c.feature_dim();
        for (gi, g) in c.graphs().iter().enumerate() {
            let rows: Vec<usize> = batch
                .pooling_index()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p == gi)
                .map(|(r, _)| r)
                .collect();
            assert_eq!(rows.len(), g.node_count());
            for (local, &global) in rows.iter().enumerate() {
                let got = &batch.node_features().data()[global * dim..(global + 1) * dim];
                assert_eq!(got, g.node_features().row(local));
            }
        }
    }

    #[test]
    fn out_of_range_index_rejected() {
        let c = triangle_and_edge();
        assert!(matches!(
            batch_graphs(&c, &[0, 7]),
            Err(DataError::IndexOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn degree_features_cap_shares_last_slot() {
        let (width, t) = degree_feature_tensors(&[vec![0, 1, 5, 9]], 4);
        assert_eq!(width, 4);
        assert_eq!(t[0].row(2), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(t[0].row(3), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(t[0].row(0), &[1.0, 0.0, 0.0, 0.0]);
    }
}
