//! Frozen-representation evaluation: repeated stratified k-fold
//! cross-validation of an L2-regularized multinomial logistic probe, fit by
//! full-batch gradient descent on embeddings standardized from the training
//! folds alone.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::stratified_folds;
use crate::numerics::{ComputationGraph, Optimizer, Tensor};
use crate::seed::{derive, tag};

use super::config::ProbeConfig;
use super::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    /// One accuracy per fold, repeats concatenated in order.
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the folds.
    pub std: f64,
}

pub fn linear_probe_eval(
    embeddings: &Tensor,
    labels: &[usize],
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<ProbeOutcome> {
    if embeddings.shape().len() != 2 || embeddings.shape()[0] != labels.len() {
        return Err(PipelineError::InvalidConfig(format!(
            "{:?} embeddings for {} labels",
            embeddings.shape(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);

    let mut fold_accuracies = Vec::with_capacity(cfg.folds * cfg.repeats);
    for r in 0..cfg.repeats {
        let folds = stratified_folds(
            labels,
            cfg.folds,
            derive(seed, &[tag("probe"), r as u64]),
        )?;
        for (fold, test) in folds.iter().enumerate() {
            let held_out: BTreeSet<usize> = test.iter().copied().collect();
            let train: Vec<usize> = (0..labels.len())
                .filter(|i| !held_out.contains(i))
                .collect();
            fold_accuracies.push(fit_and_score(
                embeddings, labels, &train, test, classes, cfg, fold,
            )?);
        }
    }

    let mean = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    let var = fold_accuracies
        .iter()
        .map(|a| (a - mean).powi(2))
        .sum::<f64>()
        / fold_accuracies.len() as f64;
    Ok(ProbeOutcome {
        fold_accuracies,
        mean,
        std: var.sqrt(),
    })
}

fn fit_and_score(
    embeddings: &Tensor,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
    fold: usize,
) -> Result<f64> {
    let train_classes: BTreeSet<usize> = train.iter().map(|&i| labels[i]).collect();
    if train_classes.len() < 2 {
        return Err(PipelineError::SingleClassFold { fold });
    }

    let (mu, sigma) = standardize_stats(embeddings, train);
    let x_train = standardized_rows(embeddings, train, &mu, &sigma);
    let x_test = standardized_rows(embeddings, test, &mu, &sigma);
    let d = embeddings.last_dim();

    let mut onehot = Tensor::zeros(&[train.len(), classes]);
    for (s, &i) in train.iter().enumerate() {
        onehot.data_mut()[s * classes + labels[i]] = 1.0;
    }

    // objective: -mean(log p_label) + l2/2 * ||W||^2, by full-batch descent
    let mut tensors = BTreeMap::new();
    tensors.insert("probe.weight".to_string(), Tensor::zeros(&[d, classes]));
    tensors.insert("probe.bias".to_string(), Tensor::zeros(&[1, classes]));

    let mut g = ComputationGraph::new();
    let x = g.constant(x_train);
    let mask = g.constant(onehot);
    let w = g.parameter("probe.weight", tensors["probe.weight"].clone())?;
    let b = g.parameter("probe.bias", tensors["probe.bias"].clone())?;
    let xw = g.matmul(x, w)?;
    let logits = g.add(xw, b)?;
    let probs = g.softmax(logits);
    let masked = g.mul(probs, mask)?;
    let ones = g.constant(Tensor::filled(&[classes, 1], 1.0));
    let picked = g.matmul(masked, ones)?;
    let logs = g.log(picked)?;
    let ce_mean = g.mean(logs);
    let neg = g.constant(Tensor::scalar(-1.0));
    let ce = g.mul(ce_mean, neg)?;
    let wsq = g.mul(w, w)?;
    let wsq_mean = g.mean(wsq);
    let l2_scale = g.constant(Tensor::scalar(cfg.l2 * (d * classes) as f64 / 2.0));
    let penalty = g.mul(wsq_mean, l2_scale)?;
    let loss = g.add(ce, penalty)?;

    let mut optimizer = Optimizer::sgd(cfg.learning_rate);
    let mut prev = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        for (name, t) in &tensors {
            g.set_parameter(name, t.clone())?;
        }
        g.forward_eval(&BTreeMap::new())?;
        let value = g.value(loss).data()[0];
        if (prev - value).abs() < cfg.tolerance {
            break;
        }
        prev = value;
        let grads = g.backward_grad(loss)?;
        optimizer.step(&mut tensors, &grads)?;
    }

    let weight = &tensors["probe.weight"];
    let bias = &tensors["probe.bias"];
    let hits = test
        .iter()
        .enumerate()
        .filter(|&(s, &i)| predict(x_test.row(s), weight, bias, classes) == labels[i])
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// Per-feature mean and deviation over the training rows; zero deviation
/// maps to one so constant features pass through unscaled.
fn standardize_stats(embeddings: &Tensor, train: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = embeddings.last_dim();
    let mut mu = vec![0.0; d];
    for &i in train {
        for (m, v) in mu.iter_mut().zip(embeddings.row(i)) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= train.len() as f64;
    }
    let mut var = vec![0.0; d];
    for &i in train {
        for ((s, v), m) in var.iter_mut().zip(embeddings.row(i)).zip(&mu) {
            *s += (v - m).powi(2);
        }
    }
    let sigma = var
        .iter()
        .map(|s| {
            let sd = (s / train.len() as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mu, sigma)
}

fn standardized_rows(embeddings: &Tensor, rows: &[usize], mu: &[f64], sigma: &[f64]) -> Tensor {
    let d = embeddings.last_dim();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        for ((v, m), s) in embeddings.row(i).iter().zip(mu).zip(sigma) {
            data.push((v - m) / s);
        }
    }
    Tensor::new(vec![rows.len(), d], data).expect("sized by construction")
}

/// Argmax of the linear scores; ties resolve to the lower class index.
fn predict(row: &[f64], weight: &Tensor, bias: &Tensor, classes: usize) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for c in 0..classes {
        let score: f64 = row
            .iter()
            .enumerate()
            .map(|(f, v)| v * weight.data()[f * classes + c])
            .sum::<f64>()
            + bias.data()[c];
        if score > best_score {
            best_score = score;
            best = c;
        }
    }
    best
}
