//! Tape-based reverse-mode automatic differentiation.
//!
//! Operations are recorded eagerly: adding a node computes its value from the
//! current values of its inputs, so builders can inspect intermediate results
//! (used e.g. for max-subtraction constants in the losses). `forward_eval`
//! rebinds input leaves and recomputes the whole tape in id order, which is what
//! the finite-difference suite exercises. `backward_grad` walks the tape in
//! reverse; each node pulls contributions from its consumers in ascending
//! node-id order, so accumulation order is fixed and runs are reproducible.

use std::collections::BTreeMap;

use super::tensor::{
    broadcast_of, matmul, normalize_last, reduce_broadcast, softmax_last, transpose, zip_broadcast,
    Broadcast,
};
use super::{NumericsError, Result, Tensor};

/// Handle to a node in a [`ComputationGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum OpKind {
    Input(String),
    Parameter(String),
    Constant,
    MatMul,
    Add(Broadcast),
    Mul(Broadcast),
    Relu,
    Log,
    Exp,
    Softmax,
    Normalize,
    Gather(Vec<usize>),
    SegmentSum { indices: Vec<usize>, segments: usize },
    Mean,
    Concat(usize),
    Transpose,
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Input(_) => "input",
            OpKind::Parameter(_) => "parameter",
            OpKind::Constant => "constant",
            OpKind::MatMul => "matmul",
            OpKind::Add(_) => "add",
            OpKind::Mul(_) => "mul",
            OpKind::Relu => "relu",
            OpKind::Log => "log",
            OpKind::Exp => "exp",
            OpKind::Softmax => "softmax",
            OpKind::Normalize => "normalize",
            OpKind::Gather(_) => "gather",
            OpKind::SegmentSum { .. } => "segment_sum",
            OpKind::Mean => "mean",
            OpKind::Concat(_) => "concat",
            OpKind::Transpose => "transpose",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    kind: OpKind,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Differentiable expression record over dense tensors.
///
/// Leaves are inputs (rebindable), parameters (trainable) and constants.
/// Nodes are topologically ordered by construction: every node's inputs
/// precede it on the tape.
#[derive(Debug, Default)]
pub struct ComputationGraph {
    nodes: Vec<Node>,
    inputs: BTreeMap<String, NodeId>,
    parameters: BTreeMap<String, NodeId>,
    outputs: BTreeMap<String, NodeId>,
}

impl ComputationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, kind: OpKind, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            kind,
            inputs,
            value,
        });
        id
    }

    fn check_name(&self, name: &str) -> Result<()> {
        if self.inputs.contains_key(name) || self.parameters.contains_key(name) {
            return Err(NumericsError::DuplicateName(name.to_string()));
        }
        Ok(())
    }

    /// Rebindable input leaf.
    pub fn input(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        self.check_name(name)?;
        let id = self.push(OpKind::Input(name.to_string()), vec![], value);
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    /// Trainable parameter leaf.
    pub fn parameter(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        self.check_name(name)?;
        let id = self.push(OpKind::Parameter(name.to_string()), vec![], value);
        self.parameters.insert(name.to_string(), id);
        Ok(id)
    }

    /// Fixed, non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(OpKind::Constant, vec![], value)
    }

    /// Name a node so `forward_eval` reports its value.
    pub fn mark_output(&mut self, name: &str, id: NodeId) {
        self.outputs.insert(name.to_string(), id);
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn parameter_ids(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.parameters.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Replace a parameter's value (shape must match) without rebuilding.
    pub fn set_parameter(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = *self
            .parameters
            .get(name)
            .ok_or_else(|| NumericsError::UnknownInput(name.to_string()))?;
        let current = &self.nodes[id.0].value;
        if current.shape() != value.shape() {
            return Err(NumericsError::InputShape {
                name: name.to_string(),
                expected: current.shape().to_vec(),
                got: value.shape().to_vec(),
            });
        }
        self.nodes[id.0].value = value;
        Ok(())
    }

    // ---- operations ------------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(NumericsError::ShapeMismatch {
                node: self.nodes.len(),
                op: "matmul",
                detail: format!("{:?} x {:?}", ta.shape(), tb.shape()),
            });
        }
        let value = matmul(ta, tb);
        Ok(self.push(OpKind::MatMul, vec![a, b], value))
    }

    fn binary(&mut self, op: &'static str, a: NodeId, b: NodeId) -> Result<(Broadcast, Tensor)> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mode = broadcast_of(ta, tb).ok_or_else(|| NumericsError::ShapeMismatch {
            node: self.nodes.len(),
            op,
            detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
        })?;
        let f: fn(f64, f64) -> f64 = match op {
            "add" => |x, y| x + y,
            _ => |x, y| x * y,
        };
        Ok((mode, zip_broadcast(ta, tb, mode, f)))
    }

    /// Elementwise sum; `b` may broadcast as a scalar, row, or column.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (mode, value) = self.binary("add", a, b)?;
        Ok(self.push(OpKind::Add(mode), vec![a, b], value))
    }

    /// Elementwise product; `b` may broadcast as a scalar, row, or column.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (mode, value) = self.binary("mul", a, b)?;
        Ok(self.push(OpKind::Mul(mode), vec![a, b], value))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.map(|v| v.max(0.0));
        self.push(OpKind::Relu, vec![a], value)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let node = self.nodes.len();
        if let Some(&bad) = self.nodes[a.0].value.data().iter().find(|v| **v <= 0.0) {
            return Err(NumericsError::LogDomain { node, value: bad });
        }
        let value = self.nodes[a.0].value.map(f64::ln);
        Ok(self.push(OpKind::Log, vec![a], value))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.map(f64::exp);
        self.push(OpKind::Exp, vec![a], value)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let value = softmax_last(&self.nodes[a.0].value);
        self.push(OpKind::Softmax, vec![a], value)
    }

    /// L2-normalize over the last axis; all-zero slices map to zero.
    pub fn normalize(&mut self, a: NodeId) -> NodeId {
        let value = normalize_last(&self.nodes[a.0].value);
        self.push(OpKind::Normalize, vec![a], value)
    }

    /// Select rows of a rank-2 tensor by index (rows may repeat).
    pub fn gather(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let ta = &self.nodes[a.0].value;
        if ta.shape().len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                node: self.nodes.len(),
                op: "gather",
                detail: format!("rank-2 expected, got {:?}", ta.shape()),
            });
        }
        let rows = ta.shape()[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(NumericsError::ShapeMismatch {
                node: self.nodes.len(),
                op: "gather",
                detail: format!("index {bad} out of range for {rows} rows"),
            });
        }
        let value = gather_rows(ta, indices);
        Ok(self.push(OpKind::Gather(indices.to_vec()), vec![a], value))
    }

    /// Scatter-add rows of a rank-2 tensor into `segments` buckets by index.
    pub fn segment_sum(&mut self, a: NodeId, indices: &[usize], segments: usize) -> Result<NodeId> {
        let ta = &self.nodes[a.0].value;
        if ta.shape().len() != 2 || ta.shape()[0] != indices.len() {
            return Err(NumericsError::ShapeMismatch {
                node: self.nodes.len(),
                op: "segment_sum",
                detail: format!("{:?} with {} indices", ta.shape(), indices.len()),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&s| s >= segments) {
            return Err(NumericsError::ShapeMismatch {
                node: self.nodes.len(),
                op: "segment_sum",
                detail: format!("segment id {bad} out of range for {segments} segments"),
            });
        }
        let value = segment_sum_rows(ta, indices, segments);
        Ok(self.push(
            OpKind::SegmentSum {
                indices: indices.to_vec(),
                segments,
            },
            vec![a],
            value,
        ))
    }

    /// Mean of all entries, as a scalar node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = &self.nodes[a.0].value;
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64);
        self.push(OpKind::Mean, vec![a], value)
    }

    /// Concatenate two rank-2 tensors along `axis` (0 or 1).
    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let ok = axis < 2
            && ta.shape().len() == 2
            && tb.shape().len() == 2
            && ta.shape()[1 - axis] == tb.shape()[1 - axis];
        if !ok {
            return Err(NumericsError::ShapeMismatch {
                node: self.nodes.len(),
                op: "concat",
                detail: format!("{:?} ++ {:?} along axis {axis}", ta.shape(), tb.shape()),
            });
        }
        let value = concat2(ta, tb, axis);
        Ok(self.push(OpKind::Concat(axis), vec![a, b], value))
    }

    /// Swap the two axes of a rank-2 tensor.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = &self.nodes[a.0].value;
        if ta.shape().len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                node: self.nodes.len(),
                op: "transpose",
                detail: format!("rank-2 expected, got {:?}", ta.shape()),
            });
        }
        let value = transpose(ta);
        Ok(self.push(OpKind::Transpose, vec![a], value))
    }

    // ---- evaluation ------------------------------------------------------

    /// Rebind input leaves and recompute every node in tape order.
    ///
    /// Pure: identical inputs produce bit-identical outputs. Returns the values
    /// of all nodes registered with [`mark_output`](Self::mark_output).
    pub fn forward_eval(
        &mut self,
        inputs: &BTreeMap<String, Tensor>,
    ) -> Result<BTreeMap<String, Tensor>> {
        for (name, value) in inputs {
            let id = *self
                .inputs
                .get(name)
                .ok_or_else(|| NumericsError::UnknownInput(name.clone()))?;
            let current = &self.nodes[id.0].value;
            if current.shape() != value.shape() {
                return Err(NumericsError::InputShape {
                    name: name.clone(),
                    expected: current.shape().to_vec(),
                    got: value.shape().to_vec(),
                });
            }
            self.nodes[id.0].value = value.clone();
        }
        for i in 0..self.nodes.len() {
            self.recompute(i)?;
        }
        Ok(self
            .outputs
            .iter()
            .map(|(name, id)| (name.clone(), self.nodes[id.0].value.clone()))
            .collect())
    }

    fn recompute(&mut self, i: usize) -> Result<()> {
        let value = {
            let node = &self.nodes[i];
            let arg = |k: usize| &self.nodes[node.inputs[k].0].value;
            match &node.kind {
                OpKind::Input(_) | OpKind::Parameter(_) | OpKind::Constant => return Ok(()),
                OpKind::MatMul => matmul(arg(0), arg(1)),
                OpKind::Add(mode) => zip_broadcast(arg(0), arg(1), *mode, |x, y| x + y),
                OpKind::Mul(mode) => zip_broadcast(arg(0), arg(1), *mode, |x, y| x * y),
                OpKind::Relu => arg(0).map(|v| v.max(0.0)),
                OpKind::Log => {
                    if let Some(&bad) = arg(0).data().iter().find(|v| **v <= 0.0) {
                        return Err(NumericsError::LogDomain {
                            node: i,
                            value: bad,
                        });
                    }
                    arg(0).map(f64::ln)
                }
                OpKind::Exp => arg(0).map(f64::exp),
                OpKind::Softmax => softmax_last(arg(0)),
                OpKind::Normalize => normalize_last(arg(0)),
                OpKind::Gather(idx) => gather_rows(arg(0), idx),
                OpKind::SegmentSum { indices, segments } => {
                    segment_sum_rows(arg(0), indices, *segments)
                }
                OpKind::Mean => {
                    Tensor::scalar(arg(0).data().iter().sum::<f64>() / arg(0).numel() as f64)
                }
                OpKind::Concat(axis) => concat2(arg(0), arg(1), *axis),
                OpKind::Transpose => transpose(arg(0)),
            }
        };
        self.nodes[i].value = value;
        Ok(())
    }

    /// Gradient of a scalar loss node with respect to every parameter.
    ///
    /// Parameters that do not influence the loss receive zero gradients, so an
    /// entry exists for every parameter. Contributions to each node are summed
    /// over its consumers in ascending node-id order.
    pub fn backward_grad(&self, loss: NodeId) -> Result<BTreeMap<String, Tensor>> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(NumericsError::NonScalarLoss {
                node: loss.0,
                shape: loss_value.shape().to_vec(),
            });
        }

        // consumers[i] = (consumer id, which input slot of the consumer), ascending.
        let mut consumers: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.nodes.len()];
        for (cid, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            for (slot, input) in node.inputs.iter().enumerate() {
                consumers[input.0].push((cid, slot));
            }
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(loss_value.shape().to_vec(), vec![1.0]).unwrap());

        for i in (0..loss.0).rev() {
            let mut acc: Option<Tensor> = None;
            for &(cid, slot) in &consumers[i] {
                let Some(upstream) = grads[cid].as_ref() else {
                    continue;
                };
                let contribution = self.vjp(cid, slot, upstream);
                acc = Some(match acc {
                    None => contribution,
                    Some(mut t) => {
                        for (d, s) in t.data_mut().iter_mut().zip(contribution.data()) {
                            *d += s;
                        }
                        t
                    }
                });
            }
            grads[i] = acc;
        }

        let mut out = BTreeMap::new();
        for (name, id) in &self.parameters {
            let g = match &grads[id.0] {
                Some(t) => t.clone(),
                None => Tensor::zeros(self.nodes[id.0].value.shape()),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    /// Gradient of `upstream` through node `cid` to its input at `slot`.
    fn vjp(&self, cid: usize, slot: usize, upstream: &Tensor) -> Tensor {
        let node = &self.nodes[cid];
        let arg = |k: usize| &self.nodes[node.inputs[k].0].value;
        match &node.kind {
            OpKind::Input(_) | OpKind::Parameter(_) | OpKind::Constant => unreachable!(),
            OpKind::MatMul => {
                if slot == 0 {
                    matmul(upstream, &transpose(arg(1)))
                } else {
                    matmul(&transpose(arg(0)), upstream)
                }
            }
            OpKind::Add(mode) => {
                if slot == 0 {
                    upstream.clone()
                } else {
                    reduce_broadcast(upstream, arg(1).shape(), *mode)
                }
            }
            OpKind::Mul(mode) => {
                if slot == 0 {
                    zip_broadcast(upstream, arg(1), *mode, |g, b| g * b)
                } else {
                    let full = zip_broadcast(upstream, arg(0), Broadcast::None, |g, a| g * a);
                    reduce_broadcast(&full, arg(1).shape(), *mode)
                }
            }
            OpKind::Relu => zip_broadcast(upstream, arg(0), Broadcast::None, |g, x| {
                if x > 0.0 {
                    g
                } else {
                    0.0
                }
            }),
            OpKind::Log => zip_broadcast(upstream, arg(0), Broadcast::None, |g, x| g / x),
            OpKind::Exp => zip_broadcast(upstream, &node.value, Broadcast::None, |g, y| g * y),
            OpKind::Softmax => {
                let p = &node.value;
                let n = p.last_dim();
                let rows = p.leading();
                let mut out = vec![0.0; p.numel()];
                for r in 0..rows {
                    let pr = &p.data()[r * n..(r + 1) * n];
                    let gr = &upstream.data()[r * n..(r + 1) * n];
                    let dot: f64 = pr.iter().zip(gr.iter()).map(|(&pv, &gv)| pv * gv).sum();
                    for k in 0..n {
                        out[r * n + k] = pr[k] * (gr[k] - dot);
                    }
                }
                Tensor::new(p.shape().to_vec(), out).unwrap()
            }
            OpKind::Normalize => {
                let x = arg(0);
                let y = &node.value;
                let n = x.last_dim();
                let rows = x.leading();
                let mut out = vec![0.0; x.numel()];
                for r in 0..rows {
                    let xr = &x.data()[r * n..(r + 1) * n];
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &upstream.data()[r * n..(r + 1) * n];
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue; // zero slice: zero gradient by contract
                    }
                    let dot: f64 = yr.iter().zip(gr.iter()).map(|(&yv, &gv)| yv * gv).sum();
                    for k in 0..n {
                        out[r * n + k] = (gr[k] - yr[k] * dot) / norm;
                    }
                }
                Tensor::new(x.shape().to_vec(), out).unwrap()
            }
            OpKind::Gather(indices) => {
                let x = arg(0);
                let cols = x.shape()[1];
                let mut out = vec![0.0; x.numel()];
                for (k, &src) in indices.iter().enumerate() {
                    for c in 0..cols {
                        out[src * cols + c] += upstream.data()[k * cols + c];
                    }
                }
                Tensor::new(x.shape().to_vec(), out).unwrap()
            }
            OpKind::SegmentSum { indices, .. } => {
                let x = arg(0);
                let cols = x.shape()[1];
                let mut out = vec![0.0; x.numel()];
                for (k, &seg) in indices.iter().enumerate() {
                    for c in 0..cols {
                        out[k * cols + c] = upstream.data()[seg * cols + c];
                    }
                }
                Tensor::new(x.shape().to_vec(), out).unwrap()
            }
            OpKind::Mean => {
                let x = arg(0);
                let g = upstream.data()[0] / x.numel() as f64;
                Tensor::filled(x.shape(), g)
            }
            OpKind::Concat(axis) => {
                let (ta, tb) = (arg(0), arg(1));
                split_grad(upstream, ta, tb, *axis, slot)
            }
            OpKind::Transpose => transpose(upstream),
        }
    }
}

fn gather_rows(a: &Tensor, indices: &[usize]) -> Tensor {
    let cols = a.shape()[1];
    let mut data = Vec::with_capacity(indices.len() * cols);
    for &i in indices {
        data.extend_from_slice(a.row(i));
    }
    Tensor::new(vec![indices.len(), cols], data).unwrap()
}

fn segment_sum_rows(a: &Tensor, indices: &[usize], segments: usize) -> Tensor {
    let cols = a.shape()[1];
    let mut out = vec![0.0; segments * cols];
    for (r, &seg) in indices.iter().enumerate() {
        let src = a.row(r);
        let dst = &mut out[seg * cols..(seg + 1) * cols];
        for (d, &s) in dst.iter_mut().zip(src.iter()) {
            *d += s;
        }
    }
    Tensor::new(vec![segments, cols], out).unwrap()
}

fn concat2(a: &Tensor, b: &Tensor, axis: usize) -> Tensor {
    if axis == 0 {
        let mut data = a.data().to_vec();
        data.extend_from_slice(b.data());
        Tensor::new(vec![a.shape()[0] + b.shape()[0], a.shape()[1]], data).unwrap()
    } else {
        let rows = a.shape()[0];
        let (ca, cb) = (a.shape()[1], b.shape()[1]);
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(a.row(r));
            data.extend_from_slice(b.row(r));
        }
        Tensor::new(vec![rows, ca + cb], data).unwrap()
    }
}

fn split_grad(g: &Tensor, a: &Tensor, b: &Tensor, axis: usize, slot: usize) -> Tensor {
    if axis == 0 {
        let rows_a = a.shape()[0];
        let cols = a.shape()[1];
        if slot == 0 {
            Tensor::new(a.shape().to_vec(), g.data()[..rows_a * cols].to_vec()).unwrap()
        } else {
            Tensor::new(b.shape().to_vec(), g.data()[rows_a * cols..].to_vec()).unwrap()
        }
    } else {
        let rows = a.shape()[0];
        let (ca, cb) = (a.shape()[1], b.shape()[1]);
        let (cols, offset) = if slot == 0 { (ca, 0) } else { (cb, ca) };
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let row = &g.data()[r * (ca + cb)..(r + 1) * (ca + cb)];
            data.extend_from_slice(&row[offset..offset + cols]);
        }
        Tensor::new(vec![rows, cols], data).unwrap()
    }
}
