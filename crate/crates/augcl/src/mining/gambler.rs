//! Abstention-trained uncertainty model.
//!
//! A small MLP reads `[anchor ‖ candidate]` (both L2-normalized) and emits
//! three softmax outputs: the two affinity classes and an abstention slot. The
//! training objective per sample is `-log(p_label * o + u)` with reward
//! `o ∈ (1, 2]` — betting on the abstention slot caps the loss at `-log(u)`,
//! so samples the classifier cannot place end up with high `u`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{ComputationGraph, NumericsError, Tensor};
use crate::seed::{derive, tag};

use super::partition::AffinityTriple;
use super::{normalize_vec, MiningError, Result};

/// Reward values searched when tuning the abstention objective.
pub const REWARD_SEARCH_SPACE: [f64; 5] = [1.5, 1.6, 1.7, 1.8, 1.9];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamblerConfig {
    /// Abstention reward `o`; must lie in (1, 2] for a binary label space.
    pub reward: f64,
    pub epochs: usize,
    pub layers: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub minibatch: usize,
}

impl Default for GamblerConfig {
    fn default() -> Self {
        Self {
            reward: 1.8,
            epochs: 10,
            layers: 3,
            hidden: 128,
            learning_rate: 0.01,
            minibatch: 256,
        }
    }
}

impl GamblerConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.reward > 1.0 && self.reward <= 2.0) {
            return Err(MiningError::InvalidConfig(format!(
                "reward {} outside (1, 2]",
                self.reward
            )));
        }
        if self.epochs == 0 || self.layers == 0 || self.hidden == 0 || self.minibatch == 0 {
            return Err(MiningError::InvalidConfig(
                "epochs, layers, hidden and minibatch must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(MiningError::InvalidConfig("non-positive learning rate".into()));
        }
        Ok(())
    }
}

/// Trained abstention-model state.
#[derive(Debug, Clone, PartialEq)]
pub struct GamblerParams {
    tensors: BTreeMap<String, Tensor>,
    dims: Vec<usize>,
}

impl GamblerParams {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.tensors
    }

    /// Softmax outputs (p1, p2, u) for a matrix of feature rows.
    pub(super) fn probs(&self, x: &Tensor) -> Result<Tensor> {
        mlp_probs(&self.tensors, &self.dims, x)
    }
}

/// The per-sample objective: `-ln(p_label * reward + u)`.
pub fn abstention_loss(probs: (f64, f64, f64), label: usize, reward: f64) -> f64 {
    let p_label = if label == 0 { probs.0 } else { probs.1 };
    -(p_label * reward + probs.2).ln()
}

/// Train the abstention model once over every anchor's labeled candidates.
pub fn train_gambler(
    triples: &[AffinityTriple],
    cfg: &GamblerConfig,
    seed: u64,
) -> Result<GamblerParams> {
    cfg.validate()?;
    let (x, labels) = flatten_triples(triples)?;
    let dims = mlp_dims(x.last_dim(), cfg, 3);

    // mask rows turn the label into the objective: `reward` at the label
    // column plus 1 at the abstention column selects p_label*o + u under a
    // row-sum against the softmax outputs.
    let mut masks = Tensor::zeros(&[labels.len(), 3]);
    for (s, &label) in labels.iter().enumerate() {
        masks.data_mut()[s * 3 + label] = cfg.reward;
        masks.data_mut()[s * 3 + 2] = 1.0;
    }

    let tensors = train_masked_mlp(&x, &masks, &dims, cfg, seed)?;
    Ok(GamblerParams { tensors, dims })
}

/// Softmax outputs (p1, p2, u) for one anchor/candidate pair.
pub fn gambler_infer(
    params: &GamblerParams,
    anchor: &[f64],
    candidate: &[f64],
) -> Result<(f64, f64, f64)> {
    if anchor.len() + candidate.len() != params.input_dim() {
        return Err(MiningError::ShapeDrift {
            expected: params.input_dim(),
            got: anchor.len() + candidate.len(),
        });
    }
    let mut row = normalize_vec(anchor);
    row.extend(normalize_vec(candidate));
    let x = Tensor::new(vec![1, row.len()], row).expect("sized by construction");
    let p = params.probs(&x)?;
    Ok((p.data()[0], p.data()[1], p.data()[2]))
}

/// Stack every triple into normalized `[anchor ‖ candidate]` feature rows.
pub(super) fn flatten_triples(triples: &[AffinityTriple]) -> Result<(Tensor, Vec<usize>)> {
    if triples.is_empty() {
        return Err(MiningError::Mismatch("no training triples".into()));
    }
    let d = triples[0].anchor.len();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for t in triples {
        if t.anchor.len() != d || t.candidates.last_dim() != d {
            return Err(MiningError::Mismatch(
                "triples disagree on embedding width".into(),
            ));
        }
        if t.candidates.shape()[0] != t.labels.len() {
            return Err(MiningError::Mismatch(format!(
                "{} candidates but {} labels",
                t.candidates.shape()[0],
                t.labels.len()
            )));
        }
        let anchor = normalize_vec(&t.anchor);
        for (j, &label) in t.labels.iter().enumerate() {
            if label > 1 {
                return Err(MiningError::BadLabel {
                    index: labels.len(),
                    label,
                });
            }
            let mut row = anchor.clone();
            row.extend(normalize_vec(t.candidates.row(j)));
            rows.push(row);
            labels.push(label);
        }
    }
    Ok((Tensor::from_rows(&rows), labels))
}

pub(super) fn mlp_dims(input: usize, cfg: &GamblerConfig, outputs: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat(cfg.hidden).take(cfg.layers.saturating_sub(1)));
    dims.push(outputs);
    dims
}

fn init_mlp(dims: &[usize], seed: u64) -> BTreeMap<String, Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[tag("mlp-init")]));
    let mut tensors = BTreeMap::new();
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        tensors.insert(
            format!("mlp.{l}.weight"),
            Tensor::new(vec![fan_in, fan_out], data).expect("sized by construction"),
        );
        tensors.insert(format!("mlp.{l}.bias"), Tensor::zeros(&[fan_out]));
    }
    tensors
}

/// Loss tape for one minibatch size: `-mean(log(rowsum(softmax(mlp(x)) * mask)))`.
struct LossGraph {
    graph: ComputationGraph,
    loss: crate::numerics::NodeId,
    pre_log: crate::numerics::NodeId,
}

fn build_loss_graph(
    tensors: &BTreeMap<String, Tensor>,
    dims: &[usize],
    batch: usize,
) -> Result<LossGraph> {
    let outputs = *dims.last().unwrap();
    let mut g = ComputationGraph::new();
    let x = g.input("x", Tensor::zeros(&[batch, dims[0]]))?;
    // placeholder mask must carry positive mass: the tape evaluates eagerly
    // while it is being built, and log(rowsum(softmax * 0)) would fail here
    let mask = g.input("mask", Tensor::filled(&[batch, outputs], 1.0))?;
    let mut pnodes = BTreeMap::new();
    for (name, t) in tensors {
        pnodes.insert(name.clone(), g.parameter(name, t.clone())?);
    }
    let logits = mlp_forward(&mut g, &pnodes, dims, x)?;
    let probs = g.softmax(logits);
    let masked = g.mul(probs, mask)?;
    let ones = g.constant(Tensor::filled(&[outputs, 1], 1.0));
    let pre_log = g.matmul(masked, ones)?;
    let logs = g.log(pre_log)?;
    let mean = g.mean(logs);
    let neg = g.constant(Tensor::scalar(-1.0));
    let loss = g.mul(mean, neg)?;
    Ok(LossGraph { graph: g, loss, pre_log })
}

fn mlp_forward(
    g: &mut ComputationGraph,
    pnodes: &BTreeMap<String, crate::numerics::NodeId>,
    dims: &[usize],
    x: crate::numerics::NodeId,
) -> Result<crate::numerics::NodeId> {
    let mut h = x;
    for l in 0..dims.len() - 1 {
        h = g.matmul(h, pnodes[&format!("mlp.{l}.weight")])?;
        h = g.add(h, pnodes[&format!("mlp.{l}.bias")])?;
        if l + 1 < dims.len() - 1 {
            h = g.relu(h);
        }
    }
    Ok(h)
}

/// Minibatch SGD over the masked-log objective shared by the abstention model
/// and the plain affinity classifier.
pub(super) fn train_masked_mlp(
    x: &Tensor,
    masks: &Tensor,
    dims: &[usize],
    cfg: &GamblerConfig,
    seed: u64,
) -> Result<BTreeMap<String, Tensor>> {
    let samples = x.shape()[0];
    let mut tensors = init_mlp(dims, seed);
    let mut optimizer = crate::numerics::Optimizer::sgd(cfg.learning_rate);
    let mut graphs: BTreeMap<usize, LossGraph> = BTreeMap::new();
    let mut order: Vec<usize> = (0..samples).collect();

    for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive(seed, &[tag("gambler-epoch"), epoch as u64]));
        order.shuffle(&mut rng);
        for (mb, chunk) in order.chunks(cfg.minibatch).enumerate() {
            let xb = gather_rows(x, chunk);
            let mb_mask = gather_rows(masks, chunk);
            let lg = match graphs.get_mut(&chunk.len()) {
                Some(lg) => lg,
                None => {
                    let built = build_loss_graph(&tensors, dims, chunk.len())?;
                    graphs.entry(chunk.len()).or_insert(built)
                }
            };
            for (name, t) in &tensors {
                lg.graph.set_parameter(name, t.clone())?;
            }
            let mut inputs = BTreeMap::new();
            inputs.insert("x".to_string(), xb);
            inputs.insert("mask".to_string(), mb_mask);
            if let Err(e) = lg.graph.forward_eval(&inputs) {
                return Err(diagnose_loss_failure(e, lg, chunk, epoch, mb));
            }
            let grads = lg.graph.backward_grad(lg.loss)?;
            optimizer
                .step(&mut tensors, &grads)
                .map_err(map_nonfinite(lg, chunk, epoch, mb))?;
        }
    }
    Ok(tensors)
}

/// A log-domain failure means some sample's bet value underflowed; point at it.
fn diagnose_loss_failure(
    e: NumericsError,
    lg: &LossGraph,
    chunk: &[usize],
    epoch: usize,
    minibatch: usize,
) -> MiningError {
    if !matches!(e, NumericsError::LogDomain { .. }) {
        return MiningError::Numerics(e);
    }
    // the pre-log node was recomputed before the log failed
    let values = lg.graph.value(lg.pre_log).data();
    let local = values
        .iter()
        .position(|v| *v <= 0.0 || !v.is_finite())
        .unwrap_or(0);
    MiningError::NonFiniteLoss {
        epoch,
        minibatch,
        sample: chunk[local],
    }
}

fn map_nonfinite<'a>(
    lg: &'a LossGraph,
    chunk: &'a [usize],
    epoch: usize,
    minibatch: usize,
) -> impl Fn(NumericsError) -> MiningError + 'a {
    move |e| match e {
        NumericsError::NonFiniteGradient(_) => {
            let values = lg.graph.value(lg.pre_log).data();
            let local = values
                .iter()
                .position(|v| !v.is_finite())
                .unwrap_or(0);
            MiningError::NonFiniteLoss {
                epoch,
                minibatch,
                sample: chunk[local],
            }
        }
        other => MiningError::Numerics(other),
    }
}

fn gather_rows(t: &Tensor, rows: &[usize]) -> Tensor {
    let d = t.last_dim();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor::new(vec![rows.len(), d], data).expect("sized by construction")
}

pub(super) fn mlp_probs(
    tensors: &BTreeMap<String, Tensor>,
    dims: &[usize],
    x: &Tensor,
) -> Result<Tensor> {
    if x.last_dim() != dims[0] {
        return Err(MiningError::ShapeDrift {
            expected: dims[0],
            got: x.last_dim(),
        });
    }
    let mut g = ComputationGraph::new();
    let xn = g.input("x", x.clone())?;
    let mut pnodes = BTreeMap::new();
    for (name, t) in tensors {
        pnodes.insert(name.clone(), g.parameter(name, t.clone())?);
    }
    let logits = mlp_forward(&mut g, &pnodes, dims, xn)?;
    let probs = g.softmax(logits);
    Ok(g.value(probs).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeroed_params(input_dim: usize) -> GamblerParams {
        let cfg = GamblerConfig::default();
        let dims = mlp_dims(input_dim, &cfg, 3);
        let mut tensors = init_mlp(&dims, 0);
        for t in tensors.values_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        GamblerParams { tensors, dims }
    }

    fn toy_triples() -> Vec<AffinityTriple> {
        // anchors near (0,1); candidates split between the anchor side, the
        // far side, and a contested midpoint strip whose labels disagree, so
        // abstention is the only way to do well there
        let mut triples = Vec::new();
        for k in 0..6 {
            let t = k as f64 * 0.03;
            triples.push(AffinityTriple {
                anchor: vec![t, 1.0],
                candidates: Tensor::from_rows(&[
                    vec![0.1 + t, 0.9],
                    vec![1.0, 0.1 - t],
                    vec![0.9, 0.0],
                    vec![0.7, 0.7 + t],
                    vec![0.7 + t, 0.7],
                ]),
                labels: vec![1, 0, 0, 1, 0],
            });
        }
        triples
    }

    #[test]
    fn zero_logits_bet_uniformly() {
        let params = zeroed_params(4);
        let (p1, p2, u) = gambler_infer(&params, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((p1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((p2 - 1.0 / 3.0).abs() < 1e-12);
        assert!((u - 1.0 / 3.0).abs() < 1e-12);
        // per-sample objective at uniform outputs and o = 1.8
        let loss = abstention_loss((p1, p2, u), 0, 1.8);
        assert!((loss - 0.06899287148695143).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_bet_earns_negative_loss() {
        let loss = abstention_loss((1.0, 0.0, 0.0), 0, 1.8);
        assert!((loss - (-1.8f64.ln())).abs() < 1e-15);
        assert!(loss < 0.0);
    }

    #[test]
    fn full_abstention_costs_nothing() {
        let loss = abstention_loss((0.0, 1.0, 1.0), 0, 1.8);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn outputs_sum_to_one() {
        let cfg = GamblerConfig {
            epochs: 2,
            hidden: 8,
            ..GamblerConfig::default()
        };
        let params = train_gambler(&toy_triples(), &cfg, 3).unwrap();
        let (p1, p2, u) = gambler_infer(&params, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((p1 + p2 + u - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn identical_candidates_get_identical_uncertainty() {
        let cfg = GamblerConfig {
            epochs: 2,
            hidden: 8,
            ..GamblerConfig::default()
        };
        let params = train_gambler(&toy_triples(), &cfg, 5).unwrap();
        let a = gambler_infer(&params, &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let b = gambler_infer(&params, &[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = GamblerConfig {
            epochs: 2,
            hidden: 8,
            ..GamblerConfig::default()
        };
        let a = train_gambler(&toy_triples(), &cfg, 7).unwrap();
        let b = train_gambler(&toy_triples(), &cfg, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_separates_easy_and_hard_negatives() {
        // after training, a candidate sitting between the clusters should be
        // more uncertain than one at a cluster core; the whole toy set fits
        // in one minibatch, so each epoch is one full-batch step
        let cfg = GamblerConfig {
            epochs: 400,
            hidden: 16,
            learning_rate: 0.3,
            ..GamblerConfig::default()
        };
        let params = train_gambler(&toy_triples(), &cfg, 11).unwrap();
        let (.., u_core) = gambler_infer(&params, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        let (.., u_mid) = gambler_infer(&params, &[0.0, 1.0], &[0.7, 0.7]).unwrap();
        assert!(
            u_mid > u_core,
            "midpoint u {u_mid} not above core u {u_core}"
        );
    }

    #[test]
    fn bad_label_rejected() {
        let triples = vec![AffinityTriple {
            anchor: vec![0.0, 1.0],
            candidates: Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            labels: vec![0, 2],
        }];
        assert!(matches!(
            train_gambler(&triples, &GamblerConfig::default(), 0),
            Err(MiningError::BadLabel { index: 1, label: 2 })
        ));
    }

    #[test]
    fn reward_bounds_enforced() {
        for reward in [1.0, 2.5, 0.0] {
            let cfg = GamblerConfig {
                reward,
                ..GamblerConfig::default()
            };
            assert!(matches!(
                train_gambler(&toy_triples(), &cfg, 0),
                Err(MiningError::InvalidConfig(_))
            ));
        }
    }
}
