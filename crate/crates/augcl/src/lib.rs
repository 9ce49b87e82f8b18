//! Affinity-uncertainty hard negative mining for graph contrastive learning.
//!
//! The crate pretrains a GIN encoder with an InfoNCE objective, then switches to
//! an uncertainty-weighted variant: negatives in each minibatch are binary-partitioned
//! per anchor, an abstention-class estimator is trained on the partition labels, and
//! the resulting per-pair uncertainties become multiplicative weights on the negative
//! terms of the contrastive loss. Learned embeddings are scored with a linear probe
//! under stratified k-fold evaluation.
//!
//! Module map:
//! - [`numerics`]: dense f64 tensors, reverse-mode autodiff, SGD/Adam, checkpoints
//! - [`data`]: graph model, TU-format ingestion, batching, synthetic generators, folds
//! - [`augment`]: stochastic graph augmentations producing the two contrastive views
//! - [`encoder`]: GIN message passing, readout pooling, projection head
//! - [`mining`]: per-anchor binary partition, gambler uncertainty estimation, weights
//! - [`loss`]: InfoNCE, weighted InfoNCE, adaptive-margin triplet diagnostic
//! - [`pipeline`]: pretraining orchestration, mining phase, embedding export, probe
//! - [`cli`]: command-line surface

pub mod augment;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod loss;
pub mod mining;
pub mod numerics;
pub mod pipeline;
pub mod seed;
