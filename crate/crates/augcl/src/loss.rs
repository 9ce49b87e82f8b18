//! Contrastive objectives — plain and hardness-weighted InfoNCE — plus the
//! adaptive-margin triplet diagnostic that explains what the weights do.
//!
//! The weighted loss scales each negative term by its mined hardness weight;
//! weights enter as constants, so no gradient flows back into the mining
//! model. Both objectives attach to an existing tape (`*_node`) for training
//! or evaluate a standalone batch to a scalar.

use thiserror::Error;

use crate::encoder::EmbeddingBatch;
use crate::mining::WeightMatrix;
use crate::numerics::{ComputationGraph, NodeId, NumericsError, Tensor};

pub type Result<T> = std::result::Result<T, LossError>;

/// Uncertainties below this are clamped before the margin's logarithm.
pub const MIN_UNCERTAINTY: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("temperature {0} is not positive")]
    InvalidTemperature(f64),
    #[error("contrastive loss needs at least 2 anchors, got {0}")]
    TooFewAnchors(usize),
    #[error("weight matrix is {got:?} but the batch needs {expected:?}")]
    WeightShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("negative weight {value} for anchor {anchor}, column {column}")]
    NegativeWeight {
        anchor: usize,
        column: usize,
        value: f64,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Also anchor from the second view and average the two directions.
    pub symmetric: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            symmetric: false,
        }
    }
}

impl ContrastiveConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        let cfg = Self {
            temperature,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(LossError::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

/// Cosine similarity; zero vectors have no direction and score 0.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Attach the plain contrastive objective to an existing tape.
pub fn info_nce_node(
    g: &mut ComputationGraph,
    z_tilde: NodeId,
    z_hat: NodeId,
    cfg: &ContrastiveConfig,
) -> Result<NodeId> {
    weighted_nce_node(g, z_tilde, z_hat, None, cfg)
}

/// Attach the weighted contrastive objective to an existing tape.
pub fn augcl_loss_node(
    g: &mut ComputationGraph,
    z_tilde: NodeId,
    z_hat: NodeId,
    weights: &WeightMatrix,
    cfg: &ContrastiveConfig,
) -> Result<NodeId> {
    weighted_nce_node(g, z_tilde, z_hat, Some(weights), cfg)
}

/// Evaluate the plain contrastive loss on a standalone batch.
pub fn info_nce(batch: &EmbeddingBatch, cfg: &ContrastiveConfig) -> Result<f64> {
    eval_loss(batch, None, cfg)
}

/// Evaluate the weighted contrastive loss on a standalone batch.
pub fn augcl_loss(
    batch: &EmbeddingBatch,
    weights: &WeightMatrix,
    cfg: &ContrastiveConfig,
) -> Result<f64> {
    eval_loss(batch, Some(weights), cfg)
}

fn eval_loss(
    batch: &EmbeddingBatch,
    weights: Option<&WeightMatrix>,
    cfg: &ContrastiveConfig,
) -> Result<f64> {
    let mut g = ComputationGraph::new();
    let zt = g.input("z_tilde", batch.z_tilde.clone())?;
    let zh = g.input("z_hat", batch.z_hat.clone())?;
    let loss = weighted_nce_node(&mut g, zt, zh, weights, cfg)?;
    Ok(g.value(loss).data()[0])
}

fn weighted_nce_node(
    g: &mut ComputationGraph,
    z_tilde: NodeId,
    z_hat: NodeId,
    weights: Option<&WeightMatrix>,
    cfg: &ContrastiveConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    let n = g.value(z_tilde).shape()[0];
    if n < 2 {
        return Err(LossError::TooFewAnchors(n));
    }
    let neg_mask = negative_scaling(n, weights)?;
    let dir1 = direction_loss(g, z_tilde, z_hat, &neg_mask, cfg.temperature)?;
    if !cfg.symmetric {
        return Ok(dir1);
    }
    // the (i, j) weight keeps its anchor role in the reversed direction
    let dir2 = direction_loss(g, z_hat, z_tilde, &neg_mask, cfg.temperature)?;
    let sum = g.add(dir1, dir2)?;
    let half = g.constant(Tensor::scalar(0.5));
    Ok(g.mul(sum, half)?)
}

/// N x N scaling of the exp-similarity terms: zero on the diagonal (the
/// positive is handled separately), w_ij — or 1 — elsewhere.
fn negative_scaling(n: usize, weights: Option<&WeightMatrix>) -> Result<Tensor> {
    let mut mask = Tensor::zeros(&[n, n]);
    match weights {
        None => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        mask.data_mut()[i * n + j] = 1.0;
                    }
                }
            }
        }
        Some(w) => {
            let shape = w.matrix().shape();
            if shape != [n, n - 1] {
                return Err(LossError::WeightShape {
                    expected: (n, n - 1),
                    got: (shape[0], shape[1]),
                });
            }
            for i in 0..n {
                for c in 0..n - 1 {
                    let value = w.value(i, c);
                    if value < 0.0 {
                        return Err(LossError::NegativeWeight {
                            anchor: i,
                            column: c,
                            value,
                        });
                    }
                    mask.data_mut()[i * n + w.candidate(i, c)] = value;
                }
            }
        }
    }
    Ok(mask)
}

/// One anchor direction of `-mean_i log(pos_i / (pos_i + sum_j w_ij neg_ij))`
/// over exp(cos/temperature) terms.
fn direction_loss(
    g: &mut ComputationGraph,
    anchors: NodeId,
    others: NodeId,
    neg_mask: &Tensor,
    temperature: f64,
) -> std::result::Result<NodeId, NumericsError> {
    let n = neg_mask.shape()[0];
    let a = g.normalize(anchors);
    let b = g.normalize(others);
    let bt = g.transpose(b)?;
    let sims = g.matmul(a, bt)?;
    let inv_t = g.constant(Tensor::scalar(1.0 / temperature));
    let scaled = g.mul(sims, inv_t)?;

    // subtract each row's max as a detached constant: the offset cancels in
    // the ratio, leaving values and gradients exact while exp stays in range
    let row_max: Vec<f64> = (0..n)
        .map(|i| {
            g.value(scaled).row(i).iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        })
        .collect();
    let shift = g.constant(
        Tensor::new(vec![n, 1], row_max.iter().map(|m| -m).collect()).expect("n rows"),
    );
    let shifted = g.add(scaled, shift)?;
    let e = g.exp(shifted);

    let eye = g.constant(identity(n));
    let ones = g.constant(Tensor::filled(&[n, 1], 1.0));
    let pos_terms = g.mul(e, eye)?;
    let pos = g.matmul(pos_terms, ones)?;
    let mask = g.constant(neg_mask.clone());
    let neg_terms = g.mul(e, mask)?;
    let neg = g.matmul(neg_terms, ones)?;
    let denom = g.add(pos, neg)?;

    let log_pos = g.log(pos)?;
    let log_denom = g.log(denom)?;
    let minus_one = g.constant(Tensor::scalar(-1.0));
    let neg_log_denom = g.mul(log_denom, minus_one)?;
    let per_anchor = g.add(log_pos, neg_log_denom)?;
    let mean = g.mean(per_anchor);
    g.mul(mean, minus_one)
}

fn identity(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        t.data_mut()[i * n + i] = 1.0;
    }
    t
}

/// Margin granted to a negative of uncertainty `u` under scale `alpha`:
/// `(temperature / 2) * ln(alpha * u)`, with `u` clamped away from zero.
pub fn adaptive_margin(u: f64, alpha: f64, cfg: &ContrastiveConfig) -> f64 {
    let u = u.clamp(MIN_UNCERTAINTY, 1.0);
    cfg.temperature / 2.0 * (alpha * u).ln()
}

/// Triplet-form view of the weighted objective.
#[derive(Debug, Clone)]
pub struct MarginDiagnostic {
    /// Per-pair margins, aligned with the weight matrix's column map.
    pub margins: Tensor,
    pub z_tilde_norm: Tensor,
    pub z_hat_norm: Tensor,
    /// `(1 / 2 temperature) * sum of (d_pos - d_neg + margin)` over all pairs.
    pub triplet_value: f64,
    /// Whether `d_pos < d_neg - margin` holds, per pair.
    pub inequality_holds: Vec<Vec<bool>>,
}

impl MarginDiagnostic {
    /// Fraction of pairs whose margin condition holds.
    pub fn satisfied_fraction(&self) -> f64 {
        let total: usize = self.inequality_holds.iter().map(Vec::len).sum();
        let hits: usize = self
            .inequality_holds
            .iter()
            .flatten()
            .filter(|&&h| h)
            .count();
        hits as f64 / total as f64
    }
}

/// Expand the weighted objective into its equivalent triplet comparison on
/// normalized embeddings, treating the projection as identity.
pub fn triplet_surrogate(
    batch: &EmbeddingBatch,
    weights: &WeightMatrix,
    cfg: &ContrastiveConfig,
) -> Result<MarginDiagnostic> {
    cfg.validate()?;
    let n = batch.batch_size();
    if n < 2 {
        return Err(LossError::TooFewAnchors(n));
    }
    let shape = weights.matrix().shape();
    if shape != [n, n - 1] {
        return Err(LossError::WeightShape {
            expected: (n, n - 1),
            got: (shape[0], shape[1]),
        });
    }

    let zt = crate::mining::normalize_rows(&batch.z_tilde);
    let zh = crate::mining::normalize_rows(&batch.z_hat);
    let mut margins = Tensor::zeros(&[n, n - 1]);
    let mut inequality_holds = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let d_pos = crate::mining::squared_distance(zt.row(i), zh.row(i)).sqrt();
        let mut row_holds = Vec::with_capacity(n - 1);
        for c in 0..n - 1 {
            let w = weights.value(i, c);
            if w < 0.0 {
                return Err(LossError::NegativeWeight {
                    anchor: i,
                    column: c,
                    value: w,
                });
            }
            let m = adaptive_margin(w / weights.alpha(), weights.alpha(), cfg);
            margins.data_mut()[i * (n - 1) + c] = m;
            let j = weights.candidate(i, c);
            let d_neg = crate::mining::squared_distance(zt.row(i), zh.row(j)).sqrt();
            total += d_pos - d_neg + m;
            row_holds.push(d_pos < d_neg - m);
        }
        inequality_holds.push(row_holds);
    }
    Ok(MarginDiagnostic {
        margins,
        z_tilde_norm: zt,
        z_hat_norm: zh,
        triplet_value: total / (2.0 * cfg.temperature),
        inequality_holds,
    })
}
