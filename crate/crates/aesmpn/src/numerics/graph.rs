//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Tape`] is an append-only sequence of nodes; inputs always precede
//! the operations that consume them, so the node order is already a
//! topological order and `backward` is a single reverse sweep visiting
//! each node exactly once. A fresh tape is built per forward pass, which
//! keeps variable per-sample topology trivial to handle.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

pub type NodeId = usize;

/// SELU constants (standard published values).
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    MulElem,
    Scale(f64),
    Sigmoid,
    Tanh,
    Selu,
    Abs,
    Concat { axis: usize },
    ReduceSum { axis: Option<usize> },
    ReduceMean { axis: Option<usize> },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Gradients keyed by the node id of each trainable parameter leaf.
///
/// Every parameter registered on the tape has an entry; parameters the
/// loss does not depend on get exact zeros.
#[derive(Debug)]
pub struct GradMap {
    grads: Vec<(NodeId, Tensor)>,
}

impl GradMap {
    pub fn get(&self, param: NodeId) -> Option<&Tensor> {
        self.grads
            .iter()
            .find(|(id, _)| *id == param)
            .map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.grads.iter().map(|(id, g)| (*id, g))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Insert a constant leaf.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, vec![], value)
    }

    /// Insert a trainable leaf; its gradient appears in every `GradMap`.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        let id = self.push(Op::Leaf, vec![], value);
        self.params.push(id);
        id
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { op, inputs, value });
        id
    }

    fn checked(&mut self, op: Op, name: &'static str, inputs: Vec<NodeId>, value: Tensor) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        Ok(self.push(op, inputs, value))
    }

    // ---- binary ops ------------------------------------------------------

    /// Matrix product. Accepts `[m,k] x [k,n] -> [m,n]` and the
    /// matrix-vector case `[m,k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        let a_shape = av.shape();
        let b_shape = bv.shape();
        let dim_err = || Error::Dimension {
            op: "matmul",
            left: a_shape.to_vec(),
            right: b_shape.to_vec(),
        };
        if a_shape.len() != 2 {
            return Err(dim_err());
        }
        let (m, k) = (a_shape[0], a_shape[1]);
        let value = match b_shape.len() {
            1 => {
                if b_shape[0] != k {
                    return Err(dim_err());
                }
                let mut out = vec![0.0; m];
                let ad = av.data();
                let bd = bv.data();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(&ad[i * k..(i + 1) * k], bd);
                }
                Tensor::vector(out)
            }
            2 => {
                if b_shape[0] != k {
                    return Err(dim_err());
                }
                let n = b_shape[1];
                let mut out = vec![0.0; m * n];
                let ad = av.data();
                let bd = bv.data();
                for i in 0..m {
                    let row = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        let brow = &bd[p * n..(p + 1) * n];
                        for (o, bv) in row.iter_mut().zip(brow) {
                            *o += aip * bv;
                        }
                    }
                }
                Tensor::matrix(m, n, out)?
            }
            _ => return Err(dim_err()),
        };
        self.checked(Op::MatMul, "matmul", vec![a, b], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "add", Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "sub", Op::Sub, |x, y| x - y)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "mul_elem", Op::MulElem, |x, y| x * y)
    }

    /// Elementwise combine; `b` may also be a bias vector broadcast over
    /// the rows of a rank-2 `a`.
    fn elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let value = if av.shape() == bv.shape() {
            let data = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if av.shape().len() == 2 && bv.shape().len() == 1 && av.shape()[1] == bv.shape()[0] {
            let (m, n) = (av.shape()[0], av.shape()[1]);
            let mut data = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    data.push(f(av.data()[i * n + j], bv.data()[j]));
                }
            }
            Tensor::matrix(m, n, data)?
        } else {
            return Err(Error::Dimension {
                op: name,
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        };
        self.checked(op, name, vec![a, b], value)
    }

    /// Multiply by a compile-time-known scalar constant.
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let value = self.value(x).map(|v| v * c);
        self.checked(Op::Scale(c), "scale", vec![x], value)
    }

    // ---- unary ops -------------------------------------------------------

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(stable_sigmoid);
        self.checked(Op::Sigmoid, "sigmoid", vec![x], value)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(f64::tanh);
        self.checked(Op::Tanh, "tanh", vec![x], value)
    }

    pub fn selu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(selu_fn);
        self.checked(Op::Selu, "selu", vec![x], value)
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).map(f64::abs);
        self.checked(Op::Abs, "abs", vec![x], value)
    }

    // ---- shape ops -------------------------------------------------------

    /// Concatenate along `axis`. Rank-1 tensors concatenate along axis 0;
    /// rank-2 along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of empty list".into()));
        }
        let first = self.value(parts[0]).shape().to_vec();
        let rank = first.len();
        if rank == 0 || axis >= rank {
            return Err(Error::Contract(format!(
                "concat axis {axis} invalid for rank-{rank} tensors"
            )));
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let mut non_concat_ok = s.len() == rank;
            for d in 0..rank {
                if d != axis && s[d] != first[d] {
                    non_concat_ok = false;
                }
            }
            if !non_concat_ok {
                return Err(Error::Dimension {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let numel: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        if rank == 1 || axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
        } else {
            // rank 2, axis 1: interleave row fragments
            let rows = first[0];
            for i in 0..rows {
                for &p in parts {
                    let t = self.value(p);
                    let cols = t.shape()[1];
                    data.extend_from_slice(&t.data()[i * cols..(i + 1) * cols]);
                }
            }
        }
        let value = Tensor::new(out_shape, data)?;
        self.checked(Op::Concat { axis }, "concat", parts.to_vec(), value)
    }

    pub fn reduce_sum(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId> {
        let value = reduce(self.value(x), axis, false)?;
        self.checked(Op::ReduceSum { axis }, "reduce_sum", vec![x], value)
    }

    pub fn reduce_mean(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId> {
        let value = reduce(self.value(x), axis, true)?;
        self.checked(Op::ReduceMean { axis }, "reduce_mean", vec![x], value)
    }

    /// Order-canonical sum of same-shaped nodes: summands are sorted by
    /// the bit pattern of their cached values before folding, so the
    /// result is bit-identical under any permutation of `ids`.
    pub fn sum_canonical(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::Contract("sum_canonical of empty list".into()));
        }
        let mut keyed: Vec<(Vec<u64>, NodeId)> =
            ids.iter().map(|&id| (self.value(id).bits_key(), id)).collect();
        keyed.sort();
        let mut acc = keyed[0].1;
        for &(_, next) in &keyed[1..] {
            acc = self.add(acc, next)?;
        }
        Ok(acc)
    }

    // ---- reverse sweep ---------------------------------------------------

    /// Reverse-mode gradients of a scalar `loss` for every registered
    /// parameter. The tape is not mutated; repeated calls agree exactly.
    pub fn backward(&self, loss: NodeId) -> Result<GradMap> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            self.accumulate(node, &gout, &mut grads);
            grads[id] = Some(gout);
        }

        let collected = self
            .params
            .iter()
            .map(|&p| {
                let g = match &grads[p] {
                    Some(g) => Tensor::new(self.value(p).shape().to_vec(), g.clone())
                        .expect("gradient shape matches parameter"),
                    None => Tensor::zeros(self.value(p).shape()),
                };
                (p, g)
            })
            .collect();
        Ok(GradMap { grads: collected })
    }

    fn accumulate(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut bump = |id: NodeId, contrib: &dyn Fn(&mut [f64])| {
            let slot = grads[id].get_or_insert_with(|| vec![0.0; self.value(id).numel()]);
            contrib(slot);
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = self.value(a);
                let bv = self.value(b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = if bv.shape().len() == 1 { 1 } else { bv.shape()[1] };
                // dA += dC . B^T
                bump(a, &|ga: &mut [f64]| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gout[i * n + j] * bv.data()[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                // dB += A^T . dC
                bump(b, &|gb: &mut [f64]| {
                    for i in 0..m {
                        let arow = &av.data()[i * k..(i + 1) * k];
                        let grow = &gout[i * n..(i + 1) * n];
                        for (p, &apv) in arow.iter().enumerate() {
                            for (j, &g) in grow.iter().enumerate() {
                                gb[p * n + j] += apv * g;
                            }
                        }
                    }
                });
            }
            Op::Add | Op::Sub | Op::MulElem => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = self.value(a).clone();
                let bv = self.value(b).clone();
                let broadcast = av.shape() != bv.shape();
                let sign = if matches!(node.op, Op::Sub) { -1.0 } else { 1.0 };
                let is_mul = matches!(node.op, Op::MulElem);
                bump(a, &|ga: &mut [f64]| {
                    if is_mul {
                        if broadcast {
                            let n = bv.numel();
                            for (idx, g) in gout.iter().enumerate() {
                                ga[idx] += g * bv.data()[idx % n];
                            }
                        } else {
                            for ((ga, g), &b) in ga.iter_mut().zip(gout).zip(bv.data()) {
                                *ga += g * b;
                            }
                        }
                    } else {
                        for (ga, g) in ga.iter_mut().zip(gout) {
                            *ga += g;
                        }
                    }
                });
                bump(b, &|gb: &mut [f64]| {
                    if broadcast {
                        // bias vector over rows: gradient sums over rows
                        let n = bv.numel();
                        for (idx, g) in gout.iter().enumerate() {
                            let contrib = if is_mul { g * av.data()[idx] } else { *g };
                            gb[idx % n] += sign * contrib;
                        }
                    } else {
                        for (idx, (gb, g)) in gb.iter_mut().zip(gout).enumerate() {
                            let contrib = if is_mul { g * av.data()[idx] } else { *g };
                            *gb += sign * contrib;
                        }
                    }
                });
            }
            Op::Scale(c) => {
                bump(node.inputs[0], &|gx: &mut [f64]| {
                    for (gx, g) in gx.iter_mut().zip(gout) {
                        *gx += c * g;
                    }
                });
            }
            Op::Sigmoid => {
                let out = &node.value;
                bump(node.inputs[0], &|gx: &mut [f64]| {
                    for ((gx, g), &s) in gx.iter_mut().zip(gout).zip(out.data()) {
                        *gx += g * s * (1.0 - s);
                    }
                });
            }
            Op::Tanh => {
                let out = &node.value;
                bump(node.inputs[0], &|gx: &mut [f64]| {
                    for ((gx, g), &t) in gx.iter_mut().zip(gout).zip(out.data()) {
                        *gx += g * (1.0 - t * t);
                    }
                });
            }
            Op::Selu => {
                let xin = self.value(node.inputs[0]).clone();
                bump(node.inputs[0], &|gx: &mut [f64]| {
                    for ((gx, g), &x) in gx.iter_mut().zip(gout).zip(xin.data()) {
                        let d = if x > 0.0 {
                            SELU_LAMBDA
                        } else {
                            SELU_LAMBDA * SELU_ALPHA * x.exp()
                        };
                        *gx += g * d;
                    }
                });
            }
            Op::Abs => {
                let xin = self.value(node.inputs[0]).clone();
                bump(node.inputs[0], &|gx: &mut [f64]| {
                    for ((gx, g), &x) in gx.iter_mut().zip(gout).zip(xin.data()) {
                        *gx += g * sign(x);
                    }
                });
            }
            Op::Concat { axis } => {
                let rank = self.value(node.inputs[0]).shape().len();
                if rank == 1 || axis == 0 {
                    let mut offset = 0;
                    for &p in &node.inputs {
                        let n = self.value(p).numel();
                        let piece = &gout[offset..offset + n];
                        bump(p, &|gp: &mut [f64]| {
                            for (gp, g) in gp.iter_mut().zip(piece) {
                                *gp += g;
                            }
                        });
                        offset += n;
                    }
                } else {
                    // rank 2, axis 1
                    let rows = self.value(node.inputs[0]).shape()[0];
                    let total_cols: usize =
                        node.inputs.iter().map(|&p| self.value(p).shape()[1]).sum();
                    let mut col_offset = 0;
                    for &p in &node.inputs {
                        let cols = self.value(p).shape()[1];
                        let off = col_offset;
                        bump(p, &|gp: &mut [f64]| {
                            for i in 0..rows {
                                for j in 0..cols {
                                    gp[i * cols + j] += gout[i * total_cols + off + j];
                                }
                            }
                        });
                        col_offset += cols;
                    }
                }
            }
            Op::ReduceSum { axis } | Op::ReduceMean { axis } => {
                let xin = self.value(node.inputs[0]).clone();
                let mean = matches!(node.op, Op::ReduceMean { .. });
                let (rows, cols) = xin.rows_cols();
                bump(node.inputs[0], &|gx: &mut [f64]| {
                    match (xin.shape().len(), axis) {
                        (_, None) | (1, Some(0)) => {
                            let factor = if mean { 1.0 / xin.numel() as f64 } else { 1.0 };
                            for gx in gx.iter_mut() {
                                *gx += gout[0] * factor;
                            }
                        }
                        (2, Some(0)) => {
                            let factor = if mean { 1.0 / rows as f64 } else { 1.0 };
                            for i in 0..rows {
                                for j in 0..cols {
                                    gx[i * cols + j] += gout[j] * factor;
                                }
                            }
                        }
                        (2, Some(1)) => {
                            let factor = if mean { 1.0 / cols as f64 } else { 1.0 };
                            for i in 0..rows {
                                for j in 0..cols {
                                    gx[i * cols + j] += gout[i] * factor;
                                }
                            }
                        }
                        _ => unreachable!("axis validated at forward time"),
                    }
                });
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Branch-wise sigmoid; never overflows for large |x|.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn selu_fn(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

fn reduce(x: &Tensor, axis: Option<usize>, mean: bool) -> Result<Tensor> {
    let rank = x.shape().len();
    if let Some(ax) = axis {
        if ax >= rank {
            return Err(Error::Contract(format!(
                "reduce axis {ax} out of range for shape {:?}",
                x.shape()
            )));
        }
    }
    let out = match (rank, axis) {
        (_, None) | (1, Some(0)) => {
            let s: f64 = x.data().iter().sum();
            let v = if mean { s / x.numel() as f64 } else { s };
            Tensor::scalar(v)
        }
        (2, Some(0)) => {
            let (rows, cols) = x.rows_cols();
            let mut out = vec![0.0; cols];
            for i in 0..rows {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += x.data()[i * cols + j];
                }
            }
            if mean {
                for o in &mut out {
                    *o /= rows as f64;
                }
            }
            Tensor::vector(out)
        }
        (2, Some(1)) => {
            let (rows, cols) = x.rows_cols();
            let mut out = vec![0.0; rows];
            for (i, o) in out.iter_mut().enumerate() {
                *o = x.data()[i * cols..(i + 1) * cols].iter().sum();
                if mean {
                    *o /= cols as f64;
                }
            }
            Tensor::vector(out)
        }
        _ => {
            return Err(Error::Contract(format!(
                "reduce unsupported for shape {:?} axis {:?}",
                x.shape(),
                axis
            )))
        }
    };
    Ok(out)
}
