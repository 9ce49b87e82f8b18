//! Synthetic planted-partition datasets.
//!
//! Class `c` draws graphs with `c + 1` equal blocks: node pairs inside a block
//! are connected with `intra_p`, pairs across blocks with `inter_p`. Class 0 is
//! therefore a plain Erdős–Rényi graph, and higher classes gain increasingly
//! modular structure — enough signal for a readout probe to separate them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seed::{derive, tag};

use super::{degree_feature_tensors, DataError, Graph, GraphCollection, Result, DEGREE_FEATURE_CAP};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub graphs_per_class: usize,
    /// Nodes per graph.
    pub nodes: usize,
    /// Edge probability inside a block.
    pub intra_p: f64,
    /// Edge probability across blocks.
    pub inter_p: f64,
}

impl SyntheticSpec {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.graphs_per_class == 0 {
            return Err(DataError::InvalidSpec("counts must be positive".into()));
        }
        if self.nodes < self.classes {
            return Err(DataError::InvalidSpec(format!(
                "{} nodes cannot host {} blocks",
                self.nodes, self.classes
            )));
        }
        for p in [self.intra_p, self.inter_p] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::InvalidSpec(format!("probability {p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<GraphCollection> {
    spec.validate()?;
    let n = spec.nodes;
    let mut edge_lists = Vec::with_capacity(spec.classes * spec.graphs_per_class);
    let mut labels = Vec::with_capacity(edge_lists.capacity());
    for class in 0..spec.classes {
        let blocks = class + 1;
        for g in 0..spec.graphs_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(
                seed,
                &[tag("synth"), class as u64, g as u64],
            ));
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    let p = if u * blocks / n == v * blocks / n {
                        spec.intra_p
                    } else {
                        spec.inter_p
                    };
                    if rng.gen::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            edge_lists.push(edges);
            labels.push(class);
        }
    }

    let degrees: Vec<Vec<usize>> = edge_lists
        .iter()
        .map(|edges| {
            let mut d = vec![0usize; n];
            for &(u, v) in edges {
                d[u] += 1;
                d[v] += 1;
            }
            d
        })
        .collect();
    let (_, features) = degree_feature_tensors(&degrees, DEGREE_FEATURE_CAP);

    let graphs = edge_lists
        .into_iter()
        .zip(features)
        .zip(&labels)
        .map(|((edges, feat), &label)| Graph::new(n, edges, feat, Some(label)))
        .collect::<Result<Vec<_>>>()?;
    GraphCollection::new(graphs, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_probabilities_give_cliques() {
        let spec = SyntheticSpec {
            classes: 1,
            graphs_per_class: 3,
            nodes: 8,
            intra_p: 1.0,
            inter_p: 0.0,
        };
        let c = gen_synthetic(&spec, 7).unwrap();
        for g in c.graphs() {
            assert_eq!(g.edge_count(), 8 * 7 / 2);
        }
    }

    #[test]
    fn same_seed_same_collection() {
        let spec = SyntheticSpec {
            classes: 2,
            graphs_per_class: 4,
            nodes: 12,
            intra_p: 0.6,
            inter_p: 0.1,
        };
        assert_eq!(gen_synthetic(&spec, 11).unwrap(), gen_synthetic(&spec, 11).unwrap());
        assert_ne!(gen_synthetic(&spec, 11).unwrap(), gen_synthetic(&spec, 12).unwrap());
    }

    #[test]
    fn class_counts_balanced() {
        let spec = SyntheticSpec {
            classes: 2,
            graphs_per_class: 10,
            nodes: 10,
            intra_p: 0.5,
            inter_p: 0.2,
        };
        let c = gen_synthetic(&spec, 3).unwrap();
        assert_eq!(c.len(), 20);
        let ones = c.graphs().iter().filter(|g| g.label() == Some(1)).count();
        assert_eq!(ones, 10);
    }

    #[test]
    fn edge_rate_matches_probability_within_three_sigma() {
        // single class, single block: every pair is Bernoulli(intra_p)
        let p = 0.3;
        let n = 20usize;
        let pairs_per_graph = n * (n - 1) / 2;
        let spec = SyntheticSpec {
            classes: 1,
            graphs_per_class: 1,
            nodes: n,
            intra_p: p,
            inter_p: 0.0,
        };
        let mut edges = 0usize;
        let seeds = 50u64;
        for s in 0..seeds {
            edges += gen_synthetic(&spec, s).unwrap().graphs()[0].edge_count();
        }
        let trials = (pairs_per_graph * seeds as usize) as f64;
        let p_hat = edges as f64 / trials;
        let sigma = (p * (1.0 - p) / trials).sqrt();
        assert!(
            (p_hat - p).abs() <= 3.0 * sigma,
            "p_hat {p_hat} vs p {p} (sigma {sigma})"
        );
    }

    #[test]
    fn invalid_probability_rejected() {
        let spec = SyntheticSpec {
            classes: 1,
            graphs_per_class: 1,
            nodes: 5,
            intra_p: 1.5,
            inter_p: 0.0,
        };
        assert!(matches!(
            gen_synthetic(&spec, 0),
            Err(DataError::InvalidSpec(_))
        ));
    }
}
