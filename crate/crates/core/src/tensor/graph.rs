//! Tape of recorded operations and reverse-mode differentiation.
//!
//! Nodes are appended in execution order, so the tape is already a
//! topological order and `backward` is a single reverse sweep.

use std::sync::Arc;

use super::kernels::{self, Transpose};
use super::{numel, Real, Tensor};
use crate::error::{CectError, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        factor: T,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    Bmm {
        a: usize,
        b: usize,
        trans_b: bool,
    },
    Conv2d {
        x: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2d {
        x: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    Upsample {
        x: usize,
        factor: usize,
    },
    Relu {
        x: usize,
    },
    Gelu {
        x: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax {
        x: usize,
    },
    Reshape {
        x: usize,
    },
    Permute {
        x: usize,
        axes: Vec<usize>,
    },
    Roll {
        x: usize,
        axis: usize,
        shift: isize,
    },
    Narrow {
        x: usize,
        start: usize,
    },
    Gather {
        table: usize,
        index: Arc<Vec<usize>>,
    },
    MeanAxis {
        x: usize,
        axis: usize,
    },
    Sum {
        x: usize,
    },
    CrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
            Op::MatMul { .. } => "matmul",
            Op::Bmm { .. } => "bmm",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "transposed_conv2d",
            Op::Upsample { .. } => "upsample_nearest",
            Op::Relu { .. } => "relu",
            Op::Gelu { .. } => "gelu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Softmax { .. } => "softmax",
            Op::Reshape { .. } => "reshape",
            Op::Permute { .. } => "permute",
            Op::Roll { .. } => "roll",
            Op::Narrow { .. } => "narrow",
            Op::Gather { .. } => "gather",
            Op::MeanAxis { .. } => "mean_axis",
            Op::Sum { .. } => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Recorded computation. Create one per forward pass.
#[derive(Debug, Default)]
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> CectError {
    CectError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Fingerprint of which ReLU units are active. Two evaluations of the
    /// same graph structure share a fingerprint unless some ReLU input
    /// changed sign, i.e. unless a kink lies between them.
    pub fn relu_pattern(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for n in &self.nodes {
            if let Op::Relu { .. } = n.op {
                for chunk in n.value.data().chunks(64) {
                    let bits = chunk
                        .iter()
                        .enumerate()
                        .fold(0u64, |acc, (i, &v)| acc | (u64::from(v > T::zero()) << i));
                    h = (h ^ bits).wrapping_mul(0x0000_0100_0000_01b3);
                    h ^= h >> 29;
                }
            }
        }
        h
    }

    /// First node holding a NaN or infinity, if any.
    pub fn check_finite(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.value.is_finite() {
                return Err(CectError::NonFinite {
                    node: i,
                    op: n.op.name(),
                });
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Operations

    /// Elementwise sum with right-aligned broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let value = if sa == sb {
            let data = self
                .value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x + y)
                .collect();
            Tensor::from_parts(sa, data)
        } else {
            let out_shape = kernels::broadcast_shape(&sa, &sb).ok_or_else(|| mismatch("add", &sa, &sb))?;
            let ia = kernels::broadcast_index(&sa, &out_shape);
            let ib = kernels::broadcast_index(&sb, &out_shape);
            let (da, db) = (self.value(a).data(), self.value(b).data());
            let data = ia.iter().zip(&ib).map(|(&i, &j)| da[i] + db[j]).collect();
            Tensor::from_parts(out_shape, data)
        };
        Ok(self.push(value, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let v = self.value(a);
        let value = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|&x| x * factor).collect());
        Ok(self.push(value, Op::Scale { a: a.0, factor }, &[a.0]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// Batched `a[B,m,k]·b[B,k,n]`, or `a[B,m,k]·b[B,n,k]ᵀ` when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("bmm", &sa, &sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(mismatch("bmm", &sa, &sb));
        }
        let trans = if trans_b { Transpose::B } else { Transpose::None };
        let data = kernels::bmm(self.value(a).data(), self.value(b).data(), batch, m, k, n, trans);
        let value = Tensor::from_parts(vec![batch, m, n], data);
        Ok(self.push(
            value,
            Op::Bmm {
                a: a.0,
                b: b.0,
                trans_b,
            },
            &[a.0, b.0],
        ))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let value = kernels::conv2d(self.value(x), self.value(k), stride, pad)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x: x.0,
                k: k.0,
                stride,
                pad,
            },
            &[x.0, k.0],
        ))
    }

    pub fn conv_transpose2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let value = kernels::conv_transpose2d(self.value(x), self.value(k), stride, pad)?;
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                x: x.0,
                k: k.0,
                stride,
                pad,
            },
            &[x.0, k.0],
        ))
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let value = kernels::upsample_nearest(self.value(x), factor)?;
        Ok(self.push(value, Op::Upsample { x: x.0, factor }, &[x.0]))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let value = Tensor::from_parts(
            v.shape().to_vec(),
            v.data()
                .iter()
                .map(|&a| if a > T::zero() { a } else { T::zero() })
                .collect(),
        );
        Ok(self.push(value, Op::Relu { x: x.0 }, &[x.0]))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let value = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|&a| kernels::gelu(a)).collect());
        Ok(self.push(value, Op::Gelu { x: x.0 }, &[x.0]))
    }

    /// Layer norm over the last axis (population variance).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap_or(&0);
        if d == 0 {
            return Err(CectError::dim("layer_norm", "last extent is zero"));
        }
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(mismatch("layer_norm", &shape, self.shape(gain)));
        }
        let (y, xhat, rstd) = kernels::layer_norm(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            d,
            eps,
        );
        let value = Tensor::from_parts(shape, y);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                rstd,
            },
            &[x.0, gain.0, bias.0],
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().unwrap_or(&0);
        if n == 0 {
            return Err(CectError::dim("softmax", "last extent is zero"));
        }
        let value = Tensor::from_parts(shape, kernels::softmax(self.value(x).data(), n));
        Ok(self.push(value, Op::Softmax { x: x.0 }, &[x.0]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x: x.0 }, &[x.0]))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return Err(CectError::dim(
                "permute",
                format!("invalid axes {axes:?} for shape {shape:?}"),
            ));
        }
        let (data, out_shape) = kernels::permute(self.value(x).data(), &shape, axes);
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.push(
            value,
            Op::Permute {
                x: x.0,
                axes: axes.to_vec(),
            },
            &[x.0],
        ))
    }

    /// Cyclic shift along one axis (`out[(i + shift) mod n] = in[i]`).
    pub fn roll(&mut self, x: Var, axis: usize, shift: isize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(CectError::dim(
                "roll",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let value = Tensor::from_parts(shape.clone(), kernels::roll(self.value(x).data(), &shape, axis, shift));
        Ok(self.push(value, Op::Roll { x: x.0, axis, shift }, &[x.0]))
    }

    /// Slice `start..start+len` of the leading axis.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || start + len > shape[0] {
            return Err(CectError::dim("narrow", format!("{start}+{len} exceeds {shape:?}")));
        }
        let inner = numel(&shape[1..]);
        let data = self.value(x).data()[start * inner..(start + len) * inner].to_vec();
        let mut out_shape = shape;
        out_shape[0] = len;
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.push(value, Op::Narrow { x: x.0, start }, &[x.0]))
    }

    /// Row lookup: `out[i, :] = table[index[i], :]` for a rank-2 table.
    pub fn gather_rows(&mut self, table: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(CectError::dim("gather", format!("table must be rank 2, got {shape:?}")));
        }
        let cols = shape[1];
        if let Some(&bad) = index.iter().find(|&&i| i >= shape[0]) {
            return Err(CectError::dim(
                "gather",
                format!("index {bad} out of range {}", shape[0]),
            ));
        }
        let t = self.value(table).data();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(&t[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::from_parts(vec![index.len(), cols], data);
        Ok(self.push(value, Op::Gather { table: table.0, index }, &[table.0]))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(CectError::dim(
                "mean_axis",
                format!("axis {axis} invalid for {shape:?}"),
            ));
        }
        let (data, out_shape) = kernels::mean_axis(self.value(x).data(), &shape, axis);
        let value = Tensor::from_parts(out_shape, data);
        Ok(self.push(value, Op::MeanAxis { x: x.0, axis }, &[x.0]))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum { x: x.0 }, &[x.0]))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() || shape[0] == 0 {
            return Err(CectError::Contract(format!(
                "cross_entropy expects logits [N, C] with N = {} labels, got {shape:?}",
                labels.len()
            )));
        }
        let classes = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(CectError::Contract(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let x = self.value(logits).data();
        let probs = kernels::softmax(x, classes);
        let mut loss = T::zero();
        for (row, &label) in labels.iter().enumerate() {
            let r = &x[row * classes..(row + 1) * classes];
            let max = r.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + r.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            loss += lse - r[label];
        }
        loss /= T::of(labels.len() as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
            &[logits.0],
        ))
    }

    // -----------------------------------------------------------------------
    // Composite helpers

    /// `x[..., in]·w[in, out] + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d_in = *shape.last().ok_or_else(|| CectError::dim("linear", "scalar input"))?;
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || ws[0] != d_in {
            return Err(mismatch("linear", &shape, &ws));
        }
        let rows = numel(&shape) / d_in.max(1);
        let flat = self.reshape(x, &[rows, d_in])?;
        let mut y = self.matmul(flat, w)?;
        if let Some(b) = b {
            y = self.add(y, b)?;
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = ws[1];
        self.reshape(y, &out_shape)
    }

    // -----------------------------------------------------------------------
    // Backward

    /// Reverse sweep from a scalar `loss`; populates `grad` on every leaf that
    /// requires one. Gradients from an earlier call are replaced.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(CectError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let contributions = self.node_backward(id, &g)?;
            if matches!(self.nodes[id].op, Op::Leaf) {
                let shape = self.nodes[id].value.shape().to_vec();
                self.nodes[id].grad = Some(Tensor::from_parts(shape, g));
                continue;
            }
            for (input, gi) in contributions {
                if !self.nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.iter_mut().zip(gi).for_each(|(a, v)| *a += v),
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        Ok(())
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    fn node_backward(&self, id: usize, g: &[T]) -> Result<Vec<(usize, Vec<T>)>> {
        let node = &self.nodes[id];
        let val = |i: usize| &self.nodes[i].value;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                let os = node.value.shape();
                if self.rg(*a) {
                    out.push((*a, kernels::reduce_broadcast(g, val(*a).shape(), os)));
                }
                if self.rg(*b) {
                    out.push((*b, kernels::reduce_broadcast(g, val(*b).shape(), os)));
                }
            }
            Op::Scale { a, factor } => out.push((*a, g.iter().map(|&v| v * *factor).collect())),
            Op::MatMul { a, b } => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                if self.rg(*a) {
                    out.push((*a, kernels::gemm_nt(g, val(*b).data(), m, n, k)));
                }
                if self.rg(*b) {
                    out.push((*b, kernels::gemm_tn(val(*a).data(), g, k, m, n)));
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let sa = val(*a).shape();
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let n = node.value.shape()[2];
                let (ad, bd) = (val(*a).data(), val(*b).data());
                if *trans_b {
                    if self.rg(*a) {
                        out.push((*a, kernels::bmm(g, bd, batch, m, n, k, Transpose::None)));
                    }
                    if self.rg(*b) {
                        out.push((*b, kernels::bmm(g, ad, batch, n, m, k, Transpose::A)));
                    }
                } else {
                    if self.rg(*a) {
                        out.push((*a, kernels::bmm(g, bd, batch, m, n, k, Transpose::B)));
                    }
                    if self.rg(*b) {
                        out.push((*b, kernels::bmm(ad, g, batch, k, m, n, Transpose::A)));
                    }
                }
            }
            Op::Conv2d { x, k, stride, pad } => {
                let (dx, dk) = kernels::conv2d_backward(val(*x), val(*k), g, *stride, *pad, self.rg(*x), self.rg(*k))?;
                out.extend(dx.map(|d| (*x, d)));
                out.extend(dk.map(|d| (*k, d)));
            }
            Op::ConvTranspose2d { x, k, stride, pad } => {
                let (dx, dk) =
                    kernels::conv_transpose2d_backward(val(*x), val(*k), g, *stride, *pad, self.rg(*x), self.rg(*k))?;
                out.extend(dx.map(|d| (*x, d)));
                out.extend(dk.map(|d| (*k, d)));
            }
            Op::Upsample { x, factor } => {
                out.push((*x, kernels::upsample_nearest_backward(g, val(*x).shape(), *factor)));
            }
            Op::Relu { x } => {
                let xs = val(*x).data();
                out.push((
                    *x,
                    g.iter()
                        .zip(xs)
                        .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                        .collect(),
                ));
            }
            Op::Gelu { x } => {
                let xs = val(*x).data();
                out.push((
                    *x,
                    g.iter().zip(xs).map(|(&gv, &xv)| gv * kernels::gelu_grad(xv)).collect(),
                ));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = val(*gain).numel();
                let (dx, dg, db) = kernels::layer_norm_backward(g, xhat, rstd, val(*gain).data(), d);
                out.push((*x, dx));
                out.push((*gain, dg));
                out.push((*bias, db));
            }
            Op::Softmax { x } => {
                let n = *node.value.shape().last().unwrap();
                out.push((*x, kernels::softmax_backward(node.value.data(), g, n)));
            }
            Op::Reshape { x } => out.push((*x, g.to_vec())),
            Op::Permute { x, axes } => {
                let (d, _) = kernels::permute(g, node.value.shape(), &kernels::inverse_axes(axes));
                out.push((*x, d));
            }
            Op::Roll { x, axis, shift } => {
                out.push((*x, kernels::roll(g, node.value.shape(), *axis, -*shift)));
            }
            Op::Narrow { x, start } => {
                let xs = val(*x);
                let inner = numel(&xs.shape()[1..]);
                let mut d = vec![T::zero(); xs.numel()];
                d[start * inner..start * inner + g.len()].copy_from_slice(g);
                out.push((*x, d));
            }
            Op::Gather { table, index } => {
                let ts = val(*table).shape();
                let cols = ts[1];
                let mut d = vec![T::zero(); ts[0] * cols];
                for (row, &i) in index.iter().enumerate() {
                    for c in 0..cols {
                        d[i * cols + c] += g[row * cols + c];
                    }
                }
                out.push((*table, d));
            }
            Op::MeanAxis { x, axis } => {
                out.push((*x, kernels::mean_axis_backward(g, val(*x).shape(), *axis)));
            }
            Op::Sum { x } => out.push((*x, vec![g[0]; val(*x).numel()])),
            Op::CrossEntropy { logits, labels, probs } => {
                let classes = val(*logits).shape()[1];
                let scale = g[0] / T::of(labels.len() as f64);
                let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &l) in labels.iter().enumerate() {
                    d[row * classes + l] -= scale;
                }
                out.push((*logits, d));
            }
        }
        Ok(out)
    }
}
