//! The training loop: warmup epochs on the plain objective, a one-shot
//! mining phase at the switch epoch, weighted epochs after it.
//!
//! At the switch epoch the batch composition freezes — the weight matrices
//! are keyed by batch id, so the same graphs must meet again each epoch —
//! while views are still re-augmented every epoch. Baseline mode swaps the
//! mined weights for all-ones matrices and changes nothing else.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{sample_two_views, AugmentationSpec};
use crate::data::{batch_graphs, GraphBatch, GraphCollection};
use crate::encoder::{encode_batch, encode_views, EmbeddingBatch, EncoderParams};
use crate::loss::{augcl_loss_node, info_nce_node};
use crate::mining::{
    alt_uncertainty, build_uncertainty_matrix, partition_batch, train_affinity_classifier,
    train_gambler, AffinityClassifier, AffinityTriple, AltMethod, GamblerParams,
    PartitionResult, UncertaintyMatrix, WeightMatrix, WeightPolicy,
};
use crate::numerics::{Optimizer, Tensor};
use crate::seed::{derive, tag};

use super::config::{AlphaPolicy, ExperimentConfig};
use super::{PipelineError, Result};

/// One-pass cost instrumentation for the mining phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningCounters {
    /// Per-anchor partition invocations.
    pub partition_calls: usize,
    /// Uncertainty-model training runs.
    pub gambler_trainings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningSummary {
    pub alpha: f64,
    /// Pooled uncertainty statistics; absent when mining fell back to
    /// uniform weights and never produced scores.
    pub u_mean: Option<f64>,
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub degenerate_batches: usize,
    pub batch_count: usize,
    pub estimator: String,
    pub warning: Option<String>,
}

/// The trained uncertainty model, kept for weight refresh and inspection.
#[derive(Debug, Clone)]
pub enum EstimatorModel {
    Gambler(GamblerParams),
    Affinity(AffinityClassifier),
    /// Centroid distances need no trained model.
    Distance,
}

/// Frozen batches and their mined weights.
#[derive(Debug, Clone)]
pub struct WeightCache {
    /// Graph indices per batch; fixed from the switch epoch on.
    pub batches: Vec<Vec<usize>>,
    pub weights: Vec<WeightMatrix>,
    /// Empty when mining fell back to uniform weights.
    pub uncertainties: Vec<UncertaintyMatrix>,
    pub estimator: Option<EstimatorModel>,
}

impl WeightCache {
    fn uniform(batches: Vec<Vec<usize>>, batch_size: usize) -> Self {
        let weights = batches
            .iter()
            .map(|_| WeightMatrix::uniform(batch_size))
            .collect();
        Self {
            batches,
            weights,
            uncertainties: Vec::new(),
            estimator: None,
        }
    }
}

#[derive(Debug)]
pub struct PretrainOutcome {
    pub params: EncoderParams,
    pub cache: WeightCache,
    pub loss_curve: Vec<f64>,
    pub mining: Option<MiningSummary>,
    pub counters: MiningCounters,
}

/// Contrastive pretraining with the mining phase at the switch epoch.
pub fn pretrain(cfg: &ExperimentConfig, data: &GraphCollection) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let pool = cfg.augment.specs()?;
    let batch_size = cfg.train.batch_size;
    if data.len() < batch_size {
        return Err(PipelineError::InvalidConfig(format!(
            "batch size {batch_size} exceeds the {} available graphs",
            data.len()
        )));
    }

    let encoder_cfg = cfg.encoder.encoder_config(data.feature_dim());
    let mut params = EncoderParams::init(encoder_cfg, seed);
    let mut optimizer = Optimizer::adam(cfg.train.learning_rate);

    let mut loss_curve = Vec::with_capacity(cfg.train.epochs);
    let mut counters = MiningCounters::default();
    let mut mining_summary = None;
    let mut cache: Option<WeightCache> = None;

    for epoch in 1..=cfg.train.epochs {
        let batches = match &cache {
            Some(c) => c.batches.clone(),
            None => random_batches(data.len(), batch_size, derive(seed, &[tag("batches"), epoch as u64])),
        };

        let mut epoch_loss = 0.0;
        for (bid, indices) in batches.iter().enumerate() {
            let (v1, v2) = augment_batch(
                data,
                indices,
                &pool,
                derive(seed, &[tag("aug"), epoch as u64, bid as u64]),
            )?;
            let views = encode_views(&params, &v1, &v2)?;
            let (mut graph, p1, p2) = (views.graph, views.projected1, views.projected2);
            let loss = match &cache {
                Some(c) => augcl_loss_node(&mut graph, p1, p2, &c.weights[bid], &cfg.contrastive)?,
                None => info_nce_node(&mut graph, p1, p2, &cfg.contrastive)?,
            };
            epoch_loss += graph.value(loss).data()[0];
            let grads = graph.backward_grad(loss)?;
            optimizer.step(params.tensors_mut(), &grads)?;
        }
        loss_curve.push(epoch_loss / batches.len() as f64);

        if epoch == cfg.train.switch_epoch {
            cache = Some(if cfg.train.baseline {
                WeightCache::uniform(batches, batch_size)
            } else {
                let (c, summary) = mine_phase(&params, data, &batches, cfg, &mut counters)?;
                mining_summary = Some(summary);
                c
            });
        } else if epoch > cfg.train.switch_epoch && cfg.train.refresh_weights {
            if let Some(c) = cache.as_mut() {
                refresh_cache(&params, data, c, cfg, epoch, &mut counters)?;
            }
        }
    }

    Ok(PretrainOutcome {
        params,
        cache: cache.expect("switch epoch precedes the last epoch"),
        loss_curve,
        mining: mining_summary,
        counters,
    })
}

pub(crate) fn random_batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // the incomplete tail is dropped: weight matrices need one fixed shape
    indices
        .chunks_exact(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

fn augment_batch(
    data: &GraphCollection,
    indices: &[usize],
    pool: &[AugmentationSpec],
    seed: u64,
) -> Result<(GraphBatch, GraphBatch)> {
    let mut first = Vec::with_capacity(indices.len());
    let mut second = Vec::with_capacity(indices.len());
    for (pos, &gi) in indices.iter().enumerate() {
        let (a, b) = sample_two_views(&data.graphs()[gi], pool, derive(seed, &[pos as u64]))?;
        first.push(a);
        second.push(b);
    }
    Ok((
        GraphBatch::from_graphs(&first)?,
        GraphBatch::from_graphs(&second)?,
    ))
}

/// Encode a frozen batch with its fixed mining-time augmentation draw.
fn mine_embeddings(
    params: &EncoderParams,
    data: &GraphCollection,
    indices: &[usize],
    pool: &[AugmentationSpec],
    seed: u64,
    bid: usize,
) -> Result<EmbeddingBatch> {
    let (v1, v2) = augment_batch(data, indices, pool, derive(seed, &[tag("mine-aug"), bid as u64]))?;
    Ok(encode_views(params, &v1, &v2)?.embedding_batch())
}

/// The one-shot mining phase over the frozen batches.
///
/// Every batch is encoded once with a fixed augmentation draw, partitioned
/// per anchor, and all (anchor, candidate, affinity) triples are pooled; the
/// uncertainty model trains once on the pool, scores every batch, and the
/// scores become weights under the configured alpha policy.
pub fn mine_phase(
    params: &EncoderParams,
    data: &GraphCollection,
    batches: &[Vec<usize>],
    cfg: &ExperimentConfig,
    counters: &mut MiningCounters,
) -> Result<(WeightCache, MiningSummary)> {
    let seed = cfg.train.seed;
    let pool = cfg.augment.specs()?;

    let mut embeddings = Vec::with_capacity(batches.len());
    let mut partitions_per_batch = Vec::with_capacity(batches.len());
    let mut pooled_triples: Vec<AffinityTriple> = Vec::new();
    let mut degenerate_batches = 0;
    for (bid, indices) in batches.iter().enumerate() {
        let emb = mine_embeddings(params, data, indices, &pool, seed, bid)?;
        let kcfg = cfg
            .kmeans
            .with_seed(derive(seed, &[tag("mine-kmeans"), bid as u64]));
        let (partitions, triples) = partition_batch(&emb, &kcfg)?;
        counters.partition_calls += partitions.len();
        if partitions.iter().all(|p| p.degenerate) {
            degenerate_batches += 1;
        }
        pooled_triples.extend(triples);
        embeddings.push(emb);
        partitions_per_batch.push(partitions);
    }

    let fallback = |warning: String| {
        let summary = MiningSummary {
            alpha: 1.0,
            u_mean: None,
            u_min: None,
            u_max: None,
            degenerate_batches,
            batch_count: batches.len(),
            estimator: cfg.mining.estimator.as_str().to_string(),
            warning: Some(warning),
        };
        (
            WeightCache::uniform(batches.to_vec(), cfg.train.batch_size),
            summary,
        )
    };

    if degenerate_batches == batches.len() {
        // nothing to separate anywhere: continue as the plain objective
        return Ok(fallback(
            "every batch partitioned degenerately; keeping uniform weights".into(),
        ));
    }

    let estimator = match cfg.mining.estimator.alt_method() {
        None => {
            counters.gambler_trainings += 1;
            EstimatorModel::Gambler(train_gambler(
                &pooled_triples,
                &cfg.gambler,
                derive(seed, &[tag("estimator")]),
            )?)
        }
        Some(AltMethod::Distance) => EstimatorModel::Distance,
        Some(_) => {
            counters.gambler_trainings += 1;
            EstimatorModel::Affinity(train_affinity_classifier(
                &pooled_triples,
                &cfg.gambler,
                derive(seed, &[tag("estimator")]),
            )?)
        }
    };

    let mut uncertainties = Vec::with_capacity(batches.len());
    for (emb, partitions) in embeddings.iter().zip(&partitions_per_batch) {
        uncertainties.push(score_batch(&estimator, cfg, emb, partitions)?);
    }

    match apply_alpha_policy(&uncertainties, &cfg.mining.policy, cfg)? {
        Some((weights, alpha)) => {
            let pooled: Vec<f64> = uncertainties
                .iter()
                .flat_map(|u| u.matrix().data().iter().copied())
                .collect();
            let summary = MiningSummary {
                alpha,
                u_mean: Some(pooled.iter().sum::<f64>() / pooled.len() as f64),
                u_min: Some(pooled.iter().copied().fold(f64::INFINITY, f64::min)),
                u_max: Some(pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                degenerate_batches,
                batch_count: batches.len(),
                estimator: cfg.mining.estimator.as_str().to_string(),
                warning: None,
            };
            let cache = WeightCache {
                batches: batches.to_vec(),
                weights,
                uncertainties,
                estimator: Some(estimator),
            };
            Ok((cache, summary))
        }
        None => Ok(fallback(
            "pooled uncertainty mean is zero; keeping uniform weights".into(),
        )),
    }
}

/// Convert uncertainties to weights; None when the pooled mean vanishes.
fn apply_alpha_policy(
    uncertainties: &[UncertaintyMatrix],
    policy: &AlphaPolicy,
    cfg: &ExperimentConfig,
) -> Result<Option<(Vec<WeightMatrix>, f64)>> {
    let to_weights = |p: WeightPolicy| -> Result<Vec<WeightMatrix>> {
        uncertainties
            .iter()
            .map(|u| crate::mining::weights_from_uncertainty(u, p).map_err(Into::into))
            .collect()
    };
    match policy {
        AlphaPolicy::Fixed => {
            let alpha = cfg.mining.alpha;
            Ok(Some((to_weights(WeightPolicy::Fixed(alpha))?, alpha)))
        }
        AlphaPolicy::ReciprocalMean if cfg.mining.per_batch_alpha => {
            if uncertainties.iter().any(|u| u.mean() <= 0.0) {
                return Ok(None);
            }
            let weights = to_weights(WeightPolicy::ReciprocalMean)?;
            let alpha =
                weights.iter().map(WeightMatrix::alpha).sum::<f64>() / weights.len() as f64;
            Ok(Some((weights, alpha)))
        }
        AlphaPolicy::ReciprocalMean => {
            let (mut total, mut count) = (0.0, 0usize);
            for u in uncertainties {
                total += u.matrix().data().iter().sum::<f64>();
                count += u.matrix().numel();
            }
            let mean = total / count as f64;
            if mean <= 0.0 {
                return Ok(None);
            }
            let alpha = 1.0 / mean;
            Ok(Some((to_weights(WeightPolicy::Fixed(alpha))?, alpha)))
        }
    }
}

fn score_batch(
    estimator: &EstimatorModel,
    cfg: &ExperimentConfig,
    emb: &EmbeddingBatch,
    partitions: &[PartitionResult],
) -> Result<UncertaintyMatrix> {
    let u = match estimator {
        EstimatorModel::Gambler(params) => build_uncertainty_matrix(emb, params)?,
        EstimatorModel::Affinity(clf) => alt_uncertainty(
            cfg.mining
                .estimator
                .alt_method()
                .expect("affinity estimators map to an alt method"),
            emb,
            partitions,
            Some(clf),
        )?,
        EstimatorModel::Distance => alt_uncertainty(AltMethod::Distance, emb, partitions, None)?,
    };
    Ok(u)
}

/// Re-score the frozen batches with the already-trained estimator.
fn refresh_cache(
    params: &EncoderParams,
    data: &GraphCollection,
    cache: &mut WeightCache,
    cfg: &ExperimentConfig,
    epoch: usize,
    counters: &mut MiningCounters,
) -> Result<()> {
    let Some(estimator) = cache.estimator.clone() else {
        return Ok(()); // uniform fallback stays uniform
    };
    let seed = cfg.train.seed;
    let pool = cfg.augment.specs()?;
    let mut uncertainties = Vec::with_capacity(cache.batches.len());
    for (bid, indices) in cache.batches.iter().enumerate() {
        let emb = mine_embeddings(params, data, indices, &pool, seed, bid)?;
        let partitions = match estimator {
            // distances need fresh partitions; model estimators do not
            EstimatorModel::Distance => {
                let kcfg = cfg.kmeans.with_seed(derive(
                    seed,
                    &[tag("refresh-kmeans"), epoch as u64, bid as u64],
                ));
                let (partitions, _) = partition_batch(&emb, &kcfg)?;
                counters.partition_calls += partitions.len();
                partitions
            }
            _ => Vec::new(),
        };
        uncertainties.push(score_batch(&estimator, cfg, &emb, &partitions)?);
    }
    if let Some((weights, _)) = apply_alpha_policy(&uncertainties, &cfg.mining.policy, cfg)? {
        cache.weights = weights;
        cache.uncertainties = uncertainties;
    }
    Ok(())
}

/// Deterministic pre-projection embeddings for every graph, plus labels.
pub fn embed_all(
    params: &EncoderParams,
    data: &GraphCollection,
) -> Result<(Tensor, Vec<usize>)> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let batch = batch_graphs(data, &indices)?;
    let encoded = encode_batch(params, &batch)?;
    let embeddings = encoded.graph.value(encoded.readout).clone();
    let labels = data.labels()?;
    Ok((embeddings, labels))
}
