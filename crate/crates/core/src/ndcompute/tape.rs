//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! Every primitive records its inputs (and whatever it needs from the forward
//! pass) on the [`Tape`]. [`Tape::backward`] walks the record in exact reverse
//! order and accumulates gradients additively, so a node used along several
//! paths receives the sum of their contributions.

use crate::error::{Error, Result};

use super::tensor::{mm, mm_nt, mm_tn, Tensor};

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive kinds, used for fault injection and error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    MatMulNt,
    Add,
    AddRow,
    Mul,
    Scale,
    Relu,
    Gelu,
    Sigmoid,
    LayerNorm,
    Softmax,
    Embedding,
    Concat,
    Slice,
    Mean,
    Wce,
}

impl OpKind {
    pub const ALL: [OpKind; 17] = [
        OpKind::Leaf,
        OpKind::MatMul,
        OpKind::MatMulNt,
        OpKind::Add,
        OpKind::AddRow,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Relu,
        OpKind::Gelu,
        OpKind::Sigmoid,
        OpKind::LayerNorm,
        OpKind::Softmax,
        OpKind::Embedding,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::Mean,
        OpKind::Wce,
    ];

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::MatMulNt => "matmul_nt",
            OpKind::Add => "add",
            OpKind::AddRow => "add_row",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Relu => "relu",
            OpKind::Gelu => "gelu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Softmax => "softmax",
            OpKind::Embedding => "embedding",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
            OpKind::Mean => "mean",
            OpKind::Wce => "wce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Softmax(Var, Axis),
    Embedding {
        table: Var,
        indices: Vec<usize>,
    },
    Concat(Vec<Var>, Axis),
    Slice {
        x: Var,
        axis: Axis,
        start: usize,
    },
    Mean(Var),
    Wce {
        p: Var,
        labels: Vec<bool>,
        w0: f64,
        w1: f64,
        eps: f64,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatMulNt(..) => OpKind::MatMulNt,
            Op::Add(..) => OpKind::Add,
            Op::AddRow(..) => OpKind::AddRow,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Relu(_) => OpKind::Relu,
            Op::Gelu(_) => OpKind::Gelu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Softmax(..) => OpKind::Softmax,
            Op::Embedding { .. } => OpKind::Embedding,
            Op::Concat(..) => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Mean(_) => OpKind::Mean,
            Op::Wce { .. } => OpKind::Wce,
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    /// Full-precision copy of 1x1 reductions.
    wide: Option<f64>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    negated: Option<OpKind>,
}

#[inline]
fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    let u = C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

#[inline]
fn gelu_grad(x: f32) -> f32 {
    const C: f32 = 0.797_884_6;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Negate every backward contribution of `kind`. Mutation testing only.
    pub fn negate_backward(&mut self, kind: OpKind) {
        self.negated = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        self.push_wide(value, op, None)
    }

    fn push_wide(&mut self, value: Tensor, op: Op, wide: Option<f64>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(op.kind().name().into()));
        }
        self.nodes.push(Node { value, op, wide });
        Ok(Var(self.nodes.len() - 1))
    }

    /// First element of `v`, at `f64` precision when `v` is a tracked reduction.
    pub fn scalar(&self, v: Var) -> f64 {
        let node = &self.nodes[v.0];
        node.wide.unwrap_or(node.value.data()[0] as f64)
    }

    /// A 2-D input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        value.dims2()?;
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.dims(a)?;
        let (k2, c) = self.dims(b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{r}x{k} * {k2}x{c}")));
        }
        let out = mm(self.value(a).data(), self.value(b).data(), r, k, c);
        self.push(Tensor::from_vec(&[r, c], out)?, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.dims(a)?;
        let (c, k2) = self.dims(b)?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", format!("{r}x{k} * ({c}x{k2})^T")));
        }
        let out = mm_nt(self.value(a).data(), self.value(b).data(), r, k, c);
        self.push(Tensor::from_vec(&[r, c], out)?, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let wide = match (self.nodes[a.0].wide, self.nodes[b.0].wide) {
            (None, None) => None,
            _ => Some(self.scalar(a) + self.scalar(b)),
        };
        self.push_wide(Tensor::from_vec(&shape, out)?, Op::Add(a, b), wide)
    }

    /// Add a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims(a)?;
        if self.dims(row)? != (1, c) {
            return Err(Error::shape(
                "add_row",
                format!("{r}x{c} + {:?}", self.value(row).shape()),
            ));
        }
        let bias = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_mut(c) {
            for (o, b) in chunk.iter_mut().zip(bias) {
                *o += b;
            }
        }
        self.push(Tensor::from_vec(&[r, c], out)?, Op::AddRow(a, row))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_vec(&shape, out)?, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Result<Var> {
        let out = self.map(a, |x| x * factor);
        let wide = self.nodes[a.0].wide.map(|w| w * factor as f64);
        self.push_wide(out, Op::Scale(a, factor), wide)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Normalize each row to zero mean / unit variance, then apply
    /// `gamma * xhat + beta` with `1 x c` gamma and beta.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = self.dims(x)?;
        if self.dims(gamma)? != (1, c) || self.dims(beta)? != (1, c) {
            return Err(Error::shape("layer_norm", format!("affine params must be 1x{c}")));
        }
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f32>() / c as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / c as f32;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        self.push(
            Tensor::from_vec(&[r, c], out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let (r, c) = self.dims(x)?;
        let xs = self.value(x).data();
        let mut out = vec![0.0; r * c];
        let (outer, inner, stride_outer, stride_inner) = match axis {
            Axis::Cols => (r, c, c, 1),
            Axis::Rows => (c, r, 1, c),
        };
        for a in 0..outer {
            let idx = |b: usize| a * stride_outer + b * stride_inner;
            let max = (0..inner).map(|b| xs[idx(b)]).fold(f32::NEG_INFINITY, f32::max);
            let mut total = 0.0;
            for b in 0..inner {
                let e = (xs[idx(b)] - max).exp();
                out[idx(b)] = e;
                total += e;
            }
            for b in 0..inner {
                out[idx(b)] /= total;
            }
        }
        self.push(Tensor::from_vec(&[r, c], out)?, Op::Softmax(x, axis))
    }

    /// Gather rows of `table` by index.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, c) = self.dims(table)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("embedding", format!("index {bad} >= {rows} rows")));
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(t.row(i));
        }
        self.push(
            Tensor::from_vec(&[indices.len(), c], out)?,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
        )
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let (r0, c0) = self.dims(first)?;
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p)?;
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(Error::shape("concat", format!("{r}x{c} vs {r0}x{c0}")));
            }
            dims.push((r, c));
        }
        let (out, shape) = match axis {
            Axis::Rows => {
                let mut out = Vec::new();
                for &p in parts {
                    out.extend_from_slice(self.value(p).data());
                }
                let rows = dims.iter().map(|d| d.0).sum();
                (out, [rows, c0])
            }
            Axis::Cols => {
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut out = Vec::with_capacity(r0 * cols);
                for i in 0..r0 {
                    for &p in parts {
                        out.extend_from_slice(self.value(p).row(i));
                    }
                }
                (out, [r0, cols])
            }
        };
        self.push(Tensor::from_vec(&shape, out)?, Op::Concat(parts.to_vec(), axis))
    }

    /// Contiguous `len`-wide slice along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(x)?;
        let extent = if axis == Axis::Rows { r } else { c };
        if len == 0 || start + len > extent {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) outside extent {extent}", start + len),
            ));
        }
        let xs = self.value(x);
        let (out, shape) = match axis {
            Axis::Rows => (xs.data()[start * c..(start + len) * c].to_vec(), [len, c]),
            Axis::Cols => {
                let mut out = Vec::with_capacity(r * len);
                for i in 0..r {
                    out.extend_from_slice(&xs.row(i)[start..start + len]);
                }
                (out, [r, len])
            }
        };
        self.push(Tensor::from_vec(&shape, out)?, Op::Slice { x, axis, start })
    }

    /// Mean of all elements, as a `1 x 1` tensor.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x).data();
        let m = xs.iter().map(|&v| v as f64).sum::<f64>() / xs.len() as f64;
        self.push_wide(Tensor::scalar(m as f32), Op::Mean(x), Some(m))
    }

    /// Weighted binary cross-entropy of probabilities `p` against `labels`,
    /// averaged over all terms. Probabilities are clamped to `[eps, 1 - eps]`.
    pub fn wce(&mut self, p: Var, labels: &[bool], w0: f64, w1: f64, eps: f64) -> Result<Var> {
        let ps = self.value(p).data();
        if ps.len() != labels.len() {
            return Err(Error::shape(
                "wce",
                format!("{} probabilities vs {} labels", ps.len(), labels.len()),
            ));
        }
        let loss = super::wce_value(ps, labels, w0, w1, eps);
        if !loss.is_finite() {
            return Err(Error::Numeric("wce".into()));
        }
        self.push_wide(
            Tensor::scalar(loss as f32),
            Op::Wce {
                p,
                labels: labels.to_vec(),
                w0,
                w1,
                eps,
            },
            Some(loss),
        )
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn map(&self, a: Var, f: impl Fn(f32) -> f32) -> Tensor {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| f(x)).collect();
        Tensor::from_vec(v.shape(), data).expect("same shape")
    }

    /// Back-propagate from the `1 x 1` node `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, got {:?}", self.value(root).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let flip = self.negated == Some(node.op.kind());
            let mut contribs: Vec<(Var, Vec<f32>)> = Vec::new();
            let mut acc = |v: Var, delta: Vec<f32>| contribs.push((v, delta));

            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (r, k) = self.dims(*a)?;
                    let (_, c) = self.dims(*b)?;
                    // dA = dC B^T, dB = A^T dC
                    acc(*a, mm_nt(&g, self.value(*b).data(), r, c, k));
                    acc(*b, mm_tn(self.value(*a).data(), &g, r, k, c));
                }
                Op::MatMulNt(a, b) => {
                    let (r, k) = self.dims(*a)?;
                    let (c, _) = self.dims(*b)?;
                    // C = A B^T: dA = dC B, dB = dC^T A
                    acc(*a, mm(&g, self.value(*b).data(), r, c, k));
                    acc(*b, mm_tn(&g, self.value(*a).data(), r, c, k));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let (_, c) = self.dims(*a)?;
                    let mut db = vec![0.0; c];
                    for chunk in g.chunks(c) {
                        for (d, x) in db.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    acc(*a, g.clone());
                    acc(*row, db);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    acc(*a, g.iter().zip(bv).map(|(d, y)| d * y).collect());
                    acc(*b, g.iter().zip(av).map(|(d, x)| d * x).collect());
                }
                Op::Scale(a, f) => acc(*a, g.iter().map(|d| d * f).collect()),
                Op::Relu(a) => {
                    let xs = self.value(*a).data();
                    acc(
                        *a,
                        g.iter()
                            .zip(xs)
                            .map(|(d, &x)| if x > 0.0 { *d } else { 0.0 })
                            .collect(),
                    );
                }
                Op::Gelu(a) => {
                    let xs = self.value(*a).data();
                    acc(*a, g.iter().zip(xs).map(|(d, &x)| d * gelu_grad(x)).collect());
                }
                Op::Sigmoid(a) => {
                    let ys = node.value.data();
                    acc(*a, g.iter().zip(ys).map(|(d, &y)| d * y * (1.0 - y)).collect());
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (r, c) = self.dims(*x)?;
                    let gm = self.value(*gamma).data();
                    let mut dx = vec![0.0; r * c];
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for i in 0..r {
                        let gi = &g[i * c..(i + 1) * c];
                        let hi = &xhat[i * c..(i + 1) * c];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..c {
                            dgamma[j] += gi[j] * hi[j];
                            dbeta[j] += gi[j];
                            let dh = gi[j] * gm[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hi[j];
                        }
                        let scale = inv_std[i] / c as f32;
                        for j in 0..c {
                            let dh = gi[j] * gm[j];
                            dx[i * c + j] = scale * (c as f32 * dh - sum_dh - hi[j] * sum_dh_h);
                        }
                    }
                    acc(*x, dx);
                    acc(*gamma, dgamma);
                    acc(*beta, dbeta);
                }
                Op::Softmax(x, axis) => {
                    let (r, c) = self.dims(*x)?;
                    let ys = node.value.data();
                    let (outer, inner, so, si) = match axis {
                        Axis::Cols => (r, c, c, 1),
                        Axis::Rows => (c, r, 1, c),
                    };
                    let mut dx = vec![0.0; r * c];
                    for a in 0..outer {
                        let idx = |b: usize| a * so + b * si;
                        let dot: f32 = (0..inner).map(|b| g[idx(b)] * ys[idx(b)]).sum();
                        for b in 0..inner {
                            dx[idx(b)] = ys[idx(b)] * (g[idx(b)] - dot);
                        }
                    }
                    acc(*x, dx);
                }
                Op::Embedding { table, indices } => {
                    let (rows, c) = self.dims(*table)?;
                    let mut dt = vec![0.0; rows * c];
                    for (k, &i) in indices.iter().enumerate() {
                        for j in 0..c {
                            dt[i * c + j] += g[k * c + j];
                        }
                    }
                    acc(*table, dt);
                }
                Op::Concat(parts, axis) => {
                    let (rows, cols) = node.value.dims2()?;
                    match axis {
                        Axis::Rows => {
                            let mut at = 0;
                            for &p in parts {
                                let n = self.value(p).len();
                                acc(p, g[at..at + n].to_vec());
                                at += n;
                            }
                        }
                        Axis::Cols => {
                            let mut col = 0;
                            for &p in parts {
                                let (_, pc) = self.dims(p)?;
                                let mut d = Vec::with_capacity(rows * pc);
                                for i in 0..rows {
                                    d.extend_from_slice(&g[i * cols + col..i * cols + col + pc]);
                                }
                                acc(p, d);
                                col += pc;
                            }
                        }
                    }
                }
                Op::Slice { x, axis, start } => {
                    let (r, c) = self.dims(*x)?;
                    let (sr, sc) = node.value.dims2()?;
                    let mut dx = vec![0.0; r * c];
                    match axis {
                        Axis::Rows => dx[start * c..(start + sr) * c].copy_from_slice(&g),
                        Axis::Cols => {
                            for i in 0..r {
                                dx[i * c + start..i * c + start + sc]
                                    .copy_from_slice(&g[i * sc..(i + 1) * sc]);
                            }
                        }
                    }
                    acc(*x, dx);
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    acc(*x, vec![g[0] / n as f32; n]);
                }
                Op::Wce {
                    p,
                    labels,
                    w0,
                    w1,
                    eps,
                } => {
                    let ps = self.value(*p).data();
                    let b = labels.len() as f64;
                    let dp = ps
                        .iter()
                        .zip(labels)
                        .map(|(&pi, &y)| {
                            let pi = pi as f64;
                            if pi <= *eps || pi >= 1.0 - eps {
                                return 0.0;
                            }
                            let d = if y { -w1 / pi } else { w0 / (1.0 - pi) };
                            (g[0] as f64 * d / b) as f32
                        })
                        .collect();
                    acc(*p, dp);
                }
            }

            grads[idx] = Some(g);
            for (v, mut delta) in contribs {
                if flip {
                    delta.iter_mut().for_each(|d| *d = -*d);
                }
                match &mut grads[v.0] {
                    Some(existing) => {
                        for (e, d) in existing.iter_mut().zip(&delta) {
                            *e += d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            }
        }

        let mut out: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        for (node, g) in self.nodes.iter().zip(grads) {
            out.push(match g {
                Some(data) => Some(Tensor::from_vec(node.value.shape(), data)?),
                None => None,
            });
        }
        Ok(Gradients { grads: out })
    }
}
