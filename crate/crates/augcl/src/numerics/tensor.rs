//! Row-major dense f64 tensor.

use super::{NumericsError, Result};

/// Dense tensor of 64-bit floats.
///
/// `shape` may be empty, which denotes a scalar holding exactly one value.
/// Storage is row-major over `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Identity matrix of size n.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// 2-D tensor from nested rows. Panics if rows are ragged; test/fixture helper.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor {
            shape: vec![r, c],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Sole value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Number of rows when viewed as a stack of last-axis slices.
    pub fn leading(&self) -> usize {
        if self.shape.is_empty() {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    /// Size of the last axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// C = A @ B for rank-2 operands, shapes [m,k] x [k,n].
pub(super) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape[0], a.shape[1]);
    let n = b.shape[1];
    debug_assert_eq!(k, b.shape[0]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
}

/// A^T for rank-2 input.
pub(super) fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = (a.shape[0], a.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor {
        shape: vec![n, m],
        data: out,
    }
}

/// How one operand of a binary elementwise op is broadcast onto the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Broadcast {
    /// Shapes match elementwise.
    None,
    /// Right operand is a single value.
    Scalar,
    /// Right operand is a row vector applied to every row of a rank-2 left.
    Row,
    /// Right operand is a column vector ([m] or [m,1]) applied to every column.
    Col,
}

/// Decide how `b` broadcasts onto `a`, if at all.
pub(super) fn broadcast_of(a: &Tensor, b: &Tensor) -> Option<Broadcast> {
    if a.shape == b.shape {
        return Some(Broadcast::None);
    }
    if b.numel() == 1 {
        return Some(Broadcast::Scalar);
    }
    if a.shape.len() == 2 {
        let (m, n) = (a.shape[0], a.shape[1]);
        if b.shape == [n] || b.shape == [1, n] {
            return Some(Broadcast::Row);
        }
        if b.shape == [m, 1] || (b.shape == [m] && m != n) {
            return Some(Broadcast::Col);
        }
    }
    None
}

/// Apply `f` elementwise with `b` broadcast onto `a` per `mode`.
pub(super) fn zip_broadcast(
    a: &Tensor,
    b: &Tensor,
    mode: Broadcast,
    f: impl Fn(f64, f64) -> f64,
) -> Tensor {
    let data = match mode {
        Broadcast::None => a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect(),
        Broadcast::Scalar => {
            let y = b.data[0];
            a.data.iter().map(|&x| f(x, y)).collect()
        }
        Broadcast::Row => {
            let n = a.shape[1];
            a.data
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b.data[i % n]))
                .collect()
        }
        Broadcast::Col => {
            let n = a.shape[1];
            a.data
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b.data[i / n]))
                .collect()
        }
    };
    Tensor {
        shape: a.shape.clone(),
        data,
    }
}

/// Sum `g` (shaped like the broadcast output) back down to the shape of the
/// broadcast operand.
pub(super) fn reduce_broadcast(g: &Tensor, b_shape: &[usize], mode: Broadcast) -> Tensor {
    match mode {
        Broadcast::None => Tensor {
            shape: b_shape.to_vec(),
            data: g.data.clone(),
        },
        Broadcast::Scalar => {
            let s: f64 = g.data.iter().sum();
            Tensor {
                shape: b_shape.to_vec(),
                data: vec![s],
            }
        }
        Broadcast::Row => {
            let n = g.shape[1];
            let mut acc = vec![0.0; n];
            for (i, &v) in g.data.iter().enumerate() {
                acc[i % n] += v;
            }
            Tensor {
                shape: b_shape.to_vec(),
                data: acc,
            }
        }
        Broadcast::Col => {
            let n = g.shape[1];
            let m = g.shape[0];
            let mut acc = vec![0.0; m];
            for (i, &v) in g.data.iter().enumerate() {
                acc[i / n] += v;
            }
            Tensor {
                shape: b_shape.to_vec(),
                data: acc,
            }
        }
    }
}

/// Softmax over the last axis.
pub(super) fn softmax_last(a: &Tensor) -> Tensor {
    let n = a.last_dim();
    let rows = a.leading();
    let mut out = vec![0.0; a.numel()];
    for r in 0..rows {
        let src = &a.data[r * n..(r + 1) * n];
        let dst = &mut out[r * n..(r + 1) * n];
        let m = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, &s) in dst.iter_mut().zip(src.iter()) {
            *d = (s - m).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    Tensor {
        shape: a.shape.clone(),
        data: out,
    }
}

/// L2-normalize over the last axis; all-zero slices stay zero.
pub(super) fn normalize_last(a: &Tensor) -> Tensor {
    let n = a.last_dim();
    let rows = a.leading();
    let mut out = vec![0.0; a.numel()];
    for r in 0..rows {
        let src = &a.data[r * n..(r + 1) * n];
        let norm = src.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dst = &mut out[r * n..(r + 1) * n];
        if norm > 0.0 {
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = s / norm;
            }
        }
    }
    Tensor {
        shape: a.shape.clone(),
        data: out,
    }
}
