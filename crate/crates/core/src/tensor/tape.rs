//! Operation tape for reverse-mode differentiation.
//!
//! Every differentiable operation appends a node holding its output value and
//! whatever it needs for the backward rule. `backward` walks the node list in
//! reverse exactly once, so gradient flow follows recording order.

use std::collections::HashMap;

use rand::Rng;

use super::kernels;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product for a user-supplied operation: receives the input
/// values, the output value and the upstream gradient, returns one gradient
/// buffer per input.
pub type VjpFn<T> = Box<dyn Fn(&[&Tensor<T>], &Tensor<T>, &[T]) -> Vec<Vec<T>>>;

enum Op<T: Scalar> {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Transpose { x: Var, rows: usize, cols: usize },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddBias { x: Var, bias: Var, cols: usize },
    Scale { x: Var, factor: T },
    Softmax { x: Var, outer: usize, n: usize, inner: usize },
    PadRows { x: Var, kept: usize, cols: usize },
    Narrow { x: Var, outer: usize, axis_in: usize, start: usize, len: usize, inner: usize },
    Concat { parts: Vec<(Var, usize)>, outer: usize, inner: usize, axis_out: usize },
    Reshape { x: Var },
    Dropout { x: Var, mask: Vec<T> },
    Sum { x: Var },
    Gelu { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, rows: usize, cols: usize, xhat: Vec<T>, inv_std: Vec<T> },
    CrossEntropy { logits: Var, gold: usize, weight: T, probs: Vec<T> },
    Custom { name: String, inputs: Vec<Var>, vjp: VjpFn<T> },
}

impl<T: Scalar> Op<T> {
    fn name(&self) -> &str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Transpose { .. } => "transpose",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::AddBias { .. } => "add_bias",
            Op::Scale { .. } => "scale",
            Op::Softmax { .. } => "softmax",
            Op::PadRows { .. } => "pad_to_length",
            Op::Narrow { .. } => "narrow",
            Op::Concat { .. } => "concat",
            Op::Reshape { .. } => "reshape",
            Op::Dropout { .. } => "dropout",
            Op::Sum { .. } => "sum",
            Op::Gelu { .. } => "gelu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Custom { name, .. } => name,
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations for one forward pass.
///
/// A tape may borrow a [`ParamStore`] so layers can pull their parameters in
/// by id; gradients for those parameters come back through [`Gradients`].
pub struct Tape<'p, T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    params: Option<&'p ParamStore<T>>,
    bound: HashMap<ParamId, Var>,
    done: bool,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: None,
            bound: HashMap::new(),
            done: false,
        }
    }

    pub fn with_params(params: &'p ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Name of the operation that produced `v`.
    pub fn op_name(&self, v: Var) -> &str {
        self.nodes[v.0].op.name()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut value = value;
        value.set_requires_grad(false);
        value.zero_grad();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Record an input. It is differentiated only if `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Record an input that is never differentiated.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Pull a parameter from the borrowed store. Repeated calls return the
    /// same variable.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(v) = self.bound.get(&id) {
            return Ok(*v);
        }
        let store = self
            .params
            .ok_or_else(|| Error::Config("tape has no parameter store".into()))?;
        let t = store.get(id).clone();
        let v = self.leaf(t);
        self.bound.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, k2, n) = match (sa, sb) {
            ([m, k], [k2, n]) => (*m, *k, *k2, *n),
            _ => {
                return Err(Error::Shape {
                    op: "matmul",
                    lhs: sa.to_vec(),
                    rhs: sb.to_vec(),
                })
            }
        };
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::MatMul { a, b, m, k, n }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        let data = kernels::transpose(self.value(x).data(), rows, cols);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![cols, rows], data)?, Op::Transpose { x, rows, cols }, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x + *y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Add { a, b }, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x * *y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul { a, b }, rg))
    }

    /// `x[..., j] + bias[j]` for every leading index.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.shape(x).last().copied().unwrap_or(1);
        if self.shape(bias) != [cols] {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| *v + b[i % cols])
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor::new(shape, data)?, Op::AddBias { x, bias, cols }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let data = self.value(x).data().iter().map(|v| *v * factor).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Scale { x, factor }, rg))
    }

    /// Split a shape into `(outer, n, inner)` around `axis`.
    fn around_axis(&self, op: &'static str, x: Var, axis: usize) -> Result<(usize, usize, usize)> {
        let shape = self.shape(x);
        if axis >= shape.len() {
            return Err(Error::Axis {
                op,
                axis,
                shape: shape.to_vec(),
            });
        }
        Ok((
            shape[..axis].iter().product(),
            shape[axis],
            shape[axis + 1..].iter().product(),
        ))
    }

    /// Softmax along `axis`, max-subtracted for stability.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = self.around_axis("softmax", x, axis)?;
        let data = kernels::softmax(self.value(x).data(), outer, n, inner);
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Softmax { x, outer, n, inner }, rg))
    }

    /// Zero-pad a `[t×d]` sequence at the tail to `target` rows. A longer
    /// sequence is an error unless `truncate` is set, in which case only the
    /// first `target` rows are kept.
    pub fn pad_to_length(&mut self, x: Var, target: usize, truncate: bool) -> Result<Var> {
        let (t, cols) = self.value(x).dims2()?;
        if t > target && !truncate {
            return Err(Error::LengthOverflow { len: t, target });
        }
        let kept = t.min(target);
        let mut data = vec![T::ZERO; target * cols];
        data[..kept * cols].copy_from_slice(&self.value(x).data()[..kept * cols]);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![target, cols], data)?, Op::PadRows { x, kept, cols }, rg))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (outer, axis_in, inner) = self.around_axis("narrow", x, axis)?;
        if start + len > axis_in {
            return Err(Error::Shape {
                op: "narrow",
                lhs: self.shape(x).to_vec(),
                rhs: vec![start, len],
            });
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_in + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape(x).to_vec();
        shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Narrow {
                x,
                outer,
                axis_in,
                start,
                len,
                inner,
            },
            rg,
        ))
    }

    /// Join tensors along `axis`; every other dimension must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::InvalidParameter("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Axis {
                op: "concat",
                axis,
                shape: base,
            });
        }
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            sizes.push(s[axis]);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let axis_out: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(outer * axis_out * inner);
        for o in 0..outer {
            for (&p, &sz) in parts.iter().zip(&sizes) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_out;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.iter().copied().zip(sizes).collect(),
                outer,
                inner,
                axis_out,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// Row-major flatten of a rank-2 tensor.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2().map_err(|_| Error::Rank {
            op: "flatten",
            expected: 2,
            shape: self.shape(x).to_vec(),
        })?;
        self.reshape(x, vec![r * c])
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; otherwise the
    /// input passes through unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if rng.random::<f64>() < p { T::ZERO } else { keep })
            .collect();
        let data = self.value(x).data().iter().zip(&mask).map(|(v, m)| *v * *m).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Dropout { x, mask }, rg))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(total), Op::Sum { x }, rg))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let data = self.value(x).data().iter().map(|v| kernels::gelu(*v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Gelu { x }, rg))
    }

    /// Per-row layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        for p in [gain, bias] {
            if self.shape(p) != [cols] {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: self.shape(x).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let n = T::from_f64(cols as f64);
        let eps = T::from_f64(eps);
        let mut xhat = vec![T::ZERO; rows * cols];
        let mut inv_std = vec![T::ZERO; rows];
        let mut out = vec![T::ZERO; rows * cols];
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
            let inv = T::ONE / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor::new(vec![rows, cols], out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                rows,
                cols,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// `-weight * log softmax(logits)[gold]` for a rank-1 logit vector.
    pub fn cross_entropy(&mut self, logits: Var, gold: usize, weight: T) -> Result<Var> {
        let z = self.value(logits);
        if z.rank() != 1 {
            return Err(Error::Rank {
                op: "cross_entropy",
                expected: 1,
                shape: z.shape().to_vec(),
            });
        }
        let classes = z.numel();
        if gold >= classes {
            return Err(Error::ClassIndex { index: gold, classes });
        }
        let probs = kernels::softmax(z.data(), 1, classes, 1);
        let max = z.data().iter().copied().fold(z.data()[0], T::max);
        let lse = max + z.data().iter().map(|v| (*v - max).exp()).sum::<T>().ln();
        let loss = -weight * (z.data()[gold] - lse);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                gold,
                weight,
                probs,
            },
            rg,
        ))
    }

    /// Record an operation whose value and backward rule come from the caller.
    pub fn custom(&mut self, name: impl Into<String>, inputs: &[Var], value: Tensor<T>, vjp: VjpFn<T>) -> Var {
        let rg = inputs.iter().any(|v| self.rg(*v));
        self.push(
            value,
            Op::Custom {
                name: name.into(),
                inputs: inputs.to_vec(),
                vjp,
            },
            rg,
        )
    }

    /// Reverse pass from a scalar loss.
    ///
    /// Each tape supports a single backward pass; calling it again fails.
    /// Gradients for bound parameters are returned, not written, so callers
    /// decide when to accumulate them (see [`ParamStore::accumulate`]).
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.done {
            return Err(Error::AlreadyBackpropagated);
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.rg(loss) {
            return Err(Error::UntrackedGraph);
        }
        self.done = true;

        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::ONE]);
        let mut visited = Vec::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            visited.push(i);
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let leaf_mask: Vec<bool> = self
            .nodes
            .iter()
            .map(|n| matches!(n.op, Op::Leaf) && n.requires_grad)
            .collect();
        let grads = grads
            .into_iter()
            .zip(&leaf_mask)
            .map(|(g, keep)| if *keep { g } else { None })
            .collect();
        Ok(Gradients {
            grads,
            shapes,
            bound: self.bound.iter().map(|(k, v)| (*k, *v)).collect(),
            visited,
        })
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, delta: Vec<T>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(buf) => buf.iter_mut().zip(delta).for_each(|(b, d)| *b += d),
                slot => *slot = Some(delta),
            }
        };
        let val = |v: Var| nodes[v.0].value.data();

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                // dA = dC · Bᵀ, dB = Aᵀ · dC
                acc(*a, kernels::matmul_bt(g, val(*b), *m, *n, *k));
                acc(*b, kernels::matmul_at(val(*a), g, *m, *k, *n));
            }
            Op::Transpose { x, rows, cols } => acc(*x, kernels::transpose(g, *cols, *rows)),
            Op::Add { a, b } => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Mul { a, b } => {
                acc(*a, g.iter().zip(val(*b)).map(|(d, y)| *d * *y).collect());
                acc(*b, g.iter().zip(val(*a)).map(|(d, x)| *d * *x).collect());
            }
            Op::AddBias { x, bias, cols } => {
                acc(*x, g.to_vec());
                let mut db = vec![T::ZERO; *cols];
                for (j, d) in g.iter().enumerate() {
                    db[j % cols] += *d;
                }
                acc(*bias, db);
            }
            Op::Scale { x, factor } => acc(*x, g.iter().map(|d| *d * *factor).collect()),
            Op::Softmax { x, outer, n, inner } => {
                let y = nodes[i].value.data();
                let mut dx = vec![T::ZERO; y.len()];
                for o in 0..*outer {
                    for q in 0..*inner {
                        let idx = |j: usize| (o * n + j) * inner + q;
                        let dot: T = (0..*n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..*n {
                            dx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::PadRows { x, kept, cols } => {
                let mut dx = vec![T::ZERO; nodes[x.0].value.numel()];
                dx[..kept * cols].copy_from_slice(&g[..kept * cols]);
                acc(*x, dx);
            }
            Op::Narrow {
                x,
                outer,
                axis_in,
                start,
                len,
                inner,
            } => {
                let mut dx = vec![T::ZERO; outer * axis_in * inner];
                for o in 0..*outer {
                    let dst = (o * axis_in + start) * inner;
                    let src = o * len * inner;
                    dx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                acc(*x, dx);
            }
            Op::Concat {
                parts,
                outer,
                inner,
                axis_out,
            } => {
                let mut offset = 0;
                for (p, sz) in parts {
                    let mut dp = Vec::with_capacity(outer * sz * inner);
                    for o in 0..*outer {
                        let base = (o * axis_out + offset) * inner;
                        dp.extend_from_slice(&g[base..base + sz * inner]);
                    }
                    acc(*p, dp);
                    offset += sz;
                }
            }
            Op::Reshape { x } => acc(*x, g.to_vec()),
            Op::Dropout { x, mask } => acc(*x, g.iter().zip(mask).map(|(d, m)| *d * *m).collect()),
            Op::Sum { x } => acc(*x, vec![g[0]; nodes[x.0].value.numel()]),
            Op::Gelu { x } => acc(
                *x,
                g.iter().zip(val(*x)).map(|(d, v)| *d * kernels::gelu_grad(*v)).collect(),
            ),
            Op::LayerNorm {
                x,
                gain,
                bias,
                rows,
                cols,
                xhat,
                inv_std,
            } => {
                let gv = val(*gain);
                let n = T::from_f64(*cols as f64);
                let mut dx = vec![T::ZERO; rows * cols];
                let mut dgain = vec![T::ZERO; *cols];
                let mut dbias = vec![T::ZERO; *cols];
                for r in 0..*rows {
                    let off = r * cols;
                    let mut sum_dh = T::ZERO;
                    let mut sum_dh_h = T::ZERO;
                    for c in 0..*cols {
                        let dy = g[off + c];
                        let h = xhat[off + c];
                        dgain[c] += dy * h;
                        dbias[c] += dy;
                        let dh = dy * gv[c];
                        sum_dh += dh;
                        sum_dh_h += dh * h;
                    }
                    for c in 0..*cols {
                        let dh = g[off + c] * gv[c];
                        dx[off + c] = inv_std[r] / n * (n * dh - sum_dh - xhat[off + c] * sum_dh_h);
                    }
                }
                acc(*x, dx);
                acc(*gain, dgain);
                acc(*bias, dbias);
            }
            Op::CrossEntropy {
                logits,
                gold,
                weight,
                probs,
            } => {
                let dz = probs
                    .iter()
                    .enumerate()
                    .map(|(c, p)| {
                        let onehot = if c == *gold { T::ONE } else { T::ZERO };
                        g[0] * *weight * (*p - onehot)
                    })
                    .collect();
                acc(*logits, dz);
            }
            Op::Custom { inputs, vjp, .. } => {
                let values: Vec<&Tensor<T>> = inputs.iter().map(|v| &nodes[v.0].value).collect();
                for (v, d) in inputs.iter().zip(vjp(&values, &nodes[i].value, g)) {
                    acc(*v, d);
                }
            }
        }
    }
}

/// Result of one backward pass.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    bound: Vec<(ParamId, Var)>,
    visited: Vec<usize>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to a tracked leaf.
    pub fn wrt(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Tensor::new(self.shapes[v.0].clone(), g.clone()).ok()
    }

    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        let (_, v) = self.bound.iter().find(|(p, _)| *p == id)?;
        self.grads[v.0].as_deref()
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.bound
            .iter()
            .filter_map(|(p, v)| self.grads[v.0].as_deref().map(|g| (*p, g)))
    }

    /// Tape indices of the operations visited, in visit order.
    pub fn visited(&self) -> &[usize] {
        &self.visited
    }
}
