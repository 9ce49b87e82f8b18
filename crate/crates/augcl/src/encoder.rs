//! GIN message-passing encoder with readout pooling and a two-layer
//! projection head.
//!
//! Each layer computes `h_v <- relu(W((1+eps)h_v + sum of neighbor h_u) + b)`;
//! aggregation runs in O(E) by gathering source rows and segment-summing them
//! onto destinations. Both contrastive views share one parameter set inside a
//! single tape, so gradients from either view land on the same tensors.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thiserror::Error;

use crate::data::GraphBatch;
use crate::numerics::{
    read_checkpoint, write_checkpoint, ComputationGraph, NodeId, NumericsError, Tensor,
};
use crate::seed::{derive, tag};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("batch feature width {got} does not match encoder input width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("view batch sizes differ: {0} vs {1}")]
    BatchMismatch(usize, usize),
    #[error("checkpoint incompatible: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutMode {
    Sum,
    Mean,
}

impl ReadoutMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReadoutMode::Sum => "sum",
            ReadoutMode::Mean => "mean",
        }
    }
}

impl FromStr for ReadoutMode {
    type Err = EncoderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(ReadoutMode::Sum),
            "mean" => Ok(ReadoutMode::Mean),
            other => Err(EncoderError::Checkpoint(format!(
                "unknown readout mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub projection: usize,
    pub readout: ReadoutMode,
    /// Pool the concatenation of every layer's node embeddings instead of the
    /// last layer only.
    pub concat_layers: bool,
}

impl EncoderConfig {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            layers: 3,
            hidden: 32,
            projection: 32,
            readout: ReadoutMode::Sum,
            concat_layers: false,
        }
    }

    /// Width of the pooled graph embedding fed to the projection head and to
    /// downstream probes.
    pub fn readout_dim(&self) -> usize {
        if self.concat_layers {
            self.layers * self.hidden
        } else {
            self.hidden
        }
    }
}

/// Trainable encoder state: a named tensor per GIN layer weight/bias/epsilon
/// plus the projection head.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    config: EncoderConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl EncoderParams {
    /// Relu-feeding biases start slightly positive so a node whose features
    /// cancel out does not park every downstream unit exactly on the relu
    /// kink (where the loss stops being differentiable).
    const BIAS_INIT: f64 = 0.01;

    /// Seeded fan-scaled uniform init; epsilons start at zero.
    pub fn init(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag("encoder-init")]));
        let mut tensors = BTreeMap::new();
        let mut in_width = config.feature_dim;
        for l in 0..config.layers {
            tensors.insert(
                format!("gin.{l}.weight"),
                glorot(&mut rng, in_width, config.hidden),
            );
            tensors.insert(
                format!("gin.{l}.bias"),
                Tensor::filled(&[config.hidden], Self::BIAS_INIT),
            );
            tensors.insert(format!("gin.{l}.eps"), Tensor::scalar(0.0));
            in_width = config.hidden;
        }
        tensors.insert(
            "proj.0.weight".to_string(),
            glorot(&mut rng, config.readout_dim(), config.hidden),
        );
        tensors.insert(
            "proj.0.bias".to_string(),
            Tensor::filled(&[config.hidden], Self::BIAS_INIT),
        );
        tensors.insert(
            "proj.1.weight".to_string(),
            glorot(&mut rng, config.hidden, config.projection),
        );
        tensors.insert(
            "proj.1.bias".to_string(),
            Tensor::filled(&[config.projection], Self::BIAS_INIT),
        );
        Self { config, tensors }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.tensors
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.tensors)?;
        Ok(())
    }

    /// Load a checkpoint and validate it against `config`.
    pub fn load(path: &Path, config: EncoderConfig) -> Result<Self> {
        let tensors = read_checkpoint(path)?;
        let expected = Self::init(config, 0);
        if tensors.len() != expected.tensors.len() {
            return Err(EncoderError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.tensors.len(),
                tensors.len()
            )));
        }
        for (name, t) in &expected.tensors {
            let got = tensors
                .get(name)
                .ok_or_else(|| EncoderError::Checkpoint(format!("missing tensor {name}")))?;
            if got.shape() != t.shape() {
                return Err(EncoderError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Self { config, tensors })
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("sized by construction")
}

/// Tape holding both encoded views; the loss modules append to `graph`.
#[derive(Debug)]
pub struct EncodedViews {
    pub graph: ComputationGraph,
    /// Pre-projection readout of view 1, `N x readout_dim`.
    pub readout1: NodeId,
    pub readout2: NodeId,
    /// Projection-head output of view 1, `N x projection`.
    pub projected1: NodeId,
    pub projected2: NodeId,
    pub batch_size: usize,
}

impl EncodedViews {
    /// Snapshot the projected embeddings as plain tensors.
    pub fn embedding_batch(&self) -> EmbeddingBatch {
        EmbeddingBatch {
            z_tilde: self.graph.value(self.projected1).clone(),
            z_hat: self.graph.value(self.projected2).clone(),
        }
    }
}

/// Projected embeddings of the two views, row-aligned by source graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub z_tilde: Tensor,
    pub z_hat: Tensor,
}

impl EmbeddingBatch {
    pub fn batch_size(&self) -> usize {
        self.z_tilde.shape()[0]
    }
}

/// Encode two aligned view batches through one shared parameter set.
pub fn encode_views(
    params: &EncoderParams,
    view1: &GraphBatch,
    view2: &GraphBatch,
) -> Result<EncodedViews> {
    if view1.batch_size() != view2.batch_size() {
        return Err(EncoderError::BatchMismatch(
            view1.batch_size(),
            view2.batch_size(),
        ));
    }
    let mut graph = ComputationGraph::new();
    let pnodes = declare_parameters(&mut graph, params)?;
    let (readout1, projected1) = encode_one(&mut graph, params, &pnodes, view1, "view1")?;
    let (readout2, projected2) = encode_one(&mut graph, params, &pnodes, view2, "view2")?;
    Ok(EncodedViews {
        graph,
        readout1,
        readout2,
        projected1,
        projected2,
        batch_size: view1.batch_size(),
    })
}

/// Tape holding one encoded batch, for evaluation-time embedding.
#[derive(Debug)]
pub struct EncodedBatch {
    pub graph: ComputationGraph,
    pub readout: NodeId,
    pub projected: NodeId,
}

pub fn encode_batch(params: &EncoderParams, batch: &GraphBatch) -> Result<EncodedBatch> {
    let mut graph = ComputationGraph::new();
    let pnodes = declare_parameters(&mut graph, params)?;
    let (readout, projected) = encode_one(&mut graph, params, &pnodes, batch, "batch")?;
    Ok(EncodedBatch {
        graph,
        readout,
        projected,
    })
}

fn declare_parameters(
    graph: &mut ComputationGraph,
    params: &EncoderParams,
) -> Result<BTreeMap<String, NodeId>> {
    let mut nodes = BTreeMap::new();
    for (name, tensor) in params.tensors() {
        nodes.insert(name.clone(), graph.parameter(name, tensor.clone())?);
    }
    Ok(nodes)
}

fn encode_one(
    g: &mut ComputationGraph,
    params: &EncoderParams,
    pnodes: &BTreeMap<String, NodeId>,
    batch: &GraphBatch,
    prefix: &str,
) -> Result<(NodeId, NodeId)> {
    let config = params.config();
    let width = batch.node_features().shape()[1];
    if width != config.feature_dim {
        return Err(EncoderError::WidthMismatch {
            expected: config.feature_dim,
            got: width,
        });
    }
    let total_nodes = batch.total_nodes();

    let mut h = g.input(&format!("{prefix}.features"), batch.node_features().clone())?;
    let mut layer_outputs = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let messages = g.gather(h, batch.edge_src())?;
        let aggregated = g.segment_sum(messages, batch.edge_dst(), total_nodes)?;
        let scaled_self = g.mul(h, pnodes[&format!("gin.{l}.eps")])?;
        let with_self = g.add(h, scaled_self)?;
        let combined = g.add(with_self, aggregated)?;
        let lin = g.matmul(combined, pnodes[&format!("gin.{l}.weight")])?;
        let biased = g.add(lin, pnodes[&format!("gin.{l}.bias")])?;
        h = g.relu(biased);
        layer_outputs.push(h);
    }

    let node_repr = if config.concat_layers {
        let mut it = layer_outputs.into_iter();
        let first = it.next().expect("at least one layer");
        it.try_fold(first, |acc, next| g.concat(acc, next, 1))?
    } else {
        h
    };

    let mut pooled = g.segment_sum(node_repr, batch.pooling_index(), batch.batch_size())?;
    if config.readout == ReadoutMode::Mean {
        let mut counts = vec![0.0; batch.batch_size()];
        for &p in batch.pooling_index() {
            counts[p] += 1.0;
        }
        let inv = Tensor::new(
            vec![batch.batch_size(), 1],
            counts.iter().map(|&c| 1.0 / c).collect(),
        )
        .expect("sized by construction");
        let inv_node = g.constant(inv);
        pooled = g.mul(pooled, inv_node)?;
    }

    let p0 = g.matmul(pooled, pnodes["proj.0.weight"])?;
    let p0 = g.add(p0, pnodes["proj.0.bias"])?;
    let p0 = g.relu(p0);
    let p1 = g.matmul(p0, pnodes["proj.1.weight"])?;
    let projected = g.add(p1, pnodes["proj.1.bias"])?;
    Ok((pooled, projected))
}
