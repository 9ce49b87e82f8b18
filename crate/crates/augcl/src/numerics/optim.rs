//! First-order optimizers over named parameter sets.

use std::collections::BTreeMap;

use super::{NumericsError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Stateful gradient-descent stepper; moment buffers are keyed per parameter.
#[derive(Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::adam(), lr)
    }

    /// Update `params` in place from `grads`. Gradients must be finite and
    /// shape-compatible; parameters without a gradient entry are left alone.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor>,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (name, g) in grads {
            if !g.is_finite() {
                return Err(NumericsError::NonFiniteGradient(name.clone()));
            }
            let p = params
                .get(name)
                .ok_or_else(|| NumericsError::UnknownInput(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(NumericsError::GradientShape {
                    name: name.clone(),
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (name, g) in grads {
                    let p = params.get_mut(name).unwrap();
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= self.lr * gv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (name, g) in grads {
                    let p = params.get_mut(name).unwrap();
                    let m = self
                        .m
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; g.numel()]);
                    let v = self
                        .v
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; g.numel()]);
                    for (k, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * gv;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * gv * gv;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *pv -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
