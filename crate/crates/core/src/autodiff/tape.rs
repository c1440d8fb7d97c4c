use std::cell::RefCell;
use std::rc::Rc;

use super::tensor::{axis_extents, Tensor};
use crate::error::{Error, Result};

/// Define-by-run record of tensor operations.
///
/// A tape is rebuilt for every forward pass. Nodes are appended in
/// evaluation order, so every node's inputs precede it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Softplus,
}

impl UnaryKind {
    fn name(self) -> &'static str {
        match self {
            UnaryKind::Relu => "relu",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Exp => "exp",
            UnaryKind::Log => "log",
            UnaryKind::Softplus => "softplus",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryKind::Relu => x.max(0.0),
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::Tanh => x.tanh(),
            UnaryKind::Exp => x.exp(),
            UnaryKind::Log => x.ln(),
            UnaryKind::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// Local derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryKind::Sigmoid => y * (1.0 - y),
            UnaryKind::Tanh => 1.0 - y * y,
            UnaryKind::Exp => y,
            UnaryKind::Log => 1.0 / x,
            UnaryKind::Softplus => sigmoid(x),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Binary(BinaryKind, usize, usize),
    Scale(usize, f64),
    Unary(UnaryKind, usize),
    Softmax(usize, usize),
    LogSumExp(usize, usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
    L2Norm(usize, usize),
    Concat(Vec<usize>, usize),
    Slice {
        input: usize,
        axis: usize,
        start: usize,
    },
    WithoutDiagonal(usize),
    RowAttention {
        q: usize,
        k: usize,
        v: usize,
        scale: f64,
    },
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Binary(_, a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Unary(_, a)
            | Op::Softmax(a, _)
            | Op::LogSumExp(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumAxis(a, _)
            | Op::L2Norm(a, _)
            | Op::WithoutDiagonal(a) => vec![*a],
            Op::Slice { input, .. } => vec![*input],
            Op::Concat(inputs, _) => inputs.clone(),
            Op::RowAttention { q, k, v, .. } => vec![*q, *k, *v],
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

/// Gradients of a scalar root with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`; all zeros when the root does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        self.get_id(var.id)
    }

    pub fn get_id(&self, id: usize) -> Tensor {
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id]),
        }
    }

    /// Moves the gradient out, avoiding a copy.
    pub fn take(&mut self, var: Var<'_>) -> Tensor {
        match self.grads[var.id].take() {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[var.id]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a trainable leaf whose gradient is tracked.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push_node(Rc::new(value), Op::Leaf, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(Rc::new(value), Op::Leaf, false)
    }

    fn push_node(&self, value: Rc<Tensor>, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push_checked(&self, name: &'static str, value: Tensor, op: Op) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.inputs().iter().any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push_node(Rc::new(value), op, requires_grad))
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?
            .value();
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::shape("concat", format!("axis {axis} out of range")));
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        for v in &values {
            let ok = v.rank() == rank
                && (0..rank).all(|d| d == axis || v.shape()[d] == first.shape()[d]);
            if !ok {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} vs {:?} on axis {axis}", first.shape(), v.shape()),
                ));
            }
        }
        let total: usize = values.iter().map(|v| v.shape()[axis]).sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let (outer, _, inner) = axis_extents(&shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let len = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let ids = parts.iter().map(|p| p.id).collect();
        self.push_checked("concat", Tensor::from_parts(shape, data), Op::Concat(ids, axis))
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(root.tape, self) {
            return Err(Error::ForeignRoot);
        }
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if root_value.numel() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.id] = Some(Tensor::ones(root_value.shape()));
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, contribution) in backprop(&nodes, node, &g) {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
                            *a += c;
                        }
                    }
                    slot => *slot = Some(contribution),
                }
            }
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn value(self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let data = matmul_nn(a.data(), b.data(), m, k, n);
        self.tape.push_checked(
            "matmul",
            Tensor::from_parts(vec![m, n], data),
            Op::MatMul(self.id, rhs.id),
        )
    }

    /// Transpose of a rank-2 tensor.
    pub fn t(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 2 {
            return Err(Error::shape("transpose", format!("{:?}", a.shape())));
        }
        let data = transpose(a.data(), a.shape()[0], a.shape()[1]);
        self.tape.push_checked(
            "transpose",
            Tensor::from_parts(vec![a.shape()[1], a.shape()[0]], data),
            Op::Transpose(self.id),
        )
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Add, rhs)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Sub, rhs)
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Mul, rhs)
    }

    pub fn div(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryKind::Div, rhs)
    }

    /// Elementwise op; `rhs` broadcasts over its size-1 dimensions, or
    /// entirely when it holds a single value.
    fn binary(self, kind: BinaryKind, rhs: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let map = broadcast_map(a.shape(), b.shape())
            .ok_or_else(|| Error::shape(name, format!("{:?} vs {:?}", a.shape(), b.shape())))?;
        let bd = b.data();
        let data: Vec<f64> = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bd[map.index(i)];
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        self.tape.push_checked(
            name,
            Tensor::from_parts(a.shape().to_vec(), data),
            Op::Binary(kind, self.id, rhs.id),
        )
    }

    /// Multiplication by a constant.
    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        let out = self.value().map(|v| v * c);
        self.tape.push_checked("scale", out, Op::Scale(self.id, c))
    }

    fn unary(self, kind: UnaryKind) -> Result<Var<'t>> {
        let out = self.value().map(|v| kind.apply(v));
        self.tape.push_checked(kind.name(), out, Op::Unary(kind, self.id))
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Relu)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Tanh)
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Log)
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Softplus)
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let a = self.value();
        check_axis("softmax", &a, axis)?;
        let (outer, len, inner) = axis_extents(a.shape(), axis);
        let mut out = vec![0.0; a.numel()];
        let x = a.data();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        self.tape.push_checked(
            "softmax",
            Tensor::from_parts(a.shape().to_vec(), out),
            Op::Softmax(self.id, axis),
        )
    }

    /// Stable `ln Σ exp` along `axis`; the reduced axis is kept with size 1.
    pub fn logsumexp(self, axis: usize) -> Result<Var<'t>> {
        let a = self.value();
        check_axis("logsumexp", &a, axis)?;
        let (outer, len, inner) = axis_extents(a.shape(), axis);
        let x = a.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = (0..len).map(|j| (x[idx(j)] - max).exp()).sum();
                out[o * inner + i] = max + total.ln();
            }
        }
        let mut shape = a.shape().to_vec();
        shape[axis] = 1;
        self.tape.push_checked(
            "logsumexp",
            Tensor::from_parts(shape, out),
            Op::LogSumExp(self.id, axis),
        )
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(self) -> Result<Var<'t>> {
        let total = self.value().data().iter().sum();
        self.tape
            .push_checked("sum", Tensor::scalar(total), Op::Sum(self.id))
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let a = self.value();
        let mean = a.data().iter().sum::<f64>() / a.numel() as f64;
        self.tape
            .push_checked("mean", Tensor::scalar(mean), Op::Mean(self.id))
    }

    /// Sum along `axis`, keeping it with size 1.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let a = self.value();
        check_axis("sum_axis", &a, axis)?;
        let (outer, len, inner) = axis_extents(a.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += a.data()[(o * len + j) * inner + i];
                }
            }
        }
        let mut shape = a.shape().to_vec();
        shape[axis] = 1;
        self.tape.push_checked(
            "sum_axis",
            Tensor::from_parts(shape, out),
            Op::SumAxis(self.id, axis),
        )
    }

    /// Euclidean norm along `axis`, keeping it with size 1.
    pub fn l2_norm(self, axis: usize) -> Result<Var<'t>> {
        let a = self.value();
        check_axis("l2_norm", &a, axis)?;
        let (outer, len, inner) = axis_extents(a.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    let v = a.data()[(o * len + j) * inner + i];
                    out[o * inner + i] += v * v;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        let mut shape = a.shape().to_vec();
        shape[axis] = 1;
        self.tape.push_checked(
            "l2_norm",
            Tensor::from_parts(shape, out),
            Op::L2Norm(self.id, axis),
        )
    }

    /// Contiguous range `start..start + len` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        check_axis("slice", &a, axis)?;
        if len == 0 || start + len > a.shape()[axis] {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} on axis of {}", start + len, a.shape()[axis]),
            ));
        }
        let (outer, full, inner) = axis_extents(a.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&a.data()[base..base + len * inner]);
        }
        let mut shape = a.shape().to_vec();
        shape[axis] = len;
        self.tape.push_checked(
            "slice",
            Tensor::from_parts(shape, data),
            Op::Slice {
                input: self.id,
                axis,
                start,
            },
        )
    }

    /// Drops the diagonal of an `n × n` matrix, giving `n × (n − 1)`.
    /// Row `i` keeps columns `0..i` then `i+1..n`, in order.
    pub fn without_diagonal(self) -> Result<Var<'t>> {
        let a = self.value();
        let n = a.rows();
        if a.rank() != 2 || a.shape()[1] != n || n < 2 {
            return Err(Error::shape("without_diagonal", format!("{:?}", a.shape())));
        }
        let mut data = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            let row = a.row(i);
            data.extend_from_slice(&row[..i]);
            data.extend_from_slice(&row[i + 1..]);
        }
        self.tape.push_checked(
            "without_diagonal",
            Tensor::from_parts(vec![n, n - 1], data),
            Op::WithoutDiagonal(self.id),
        )
    }

    /// Per-row attention where each of the `d` coordinates is a token:
    /// `out[b,i] = Σ_j softmax_j(scale · q[b,i] · k[b,j]) · v[b,j]`.
    /// Rows never interact, so results do not depend on batch composition.
    pub fn row_attention(self, k: Var<'t>, v: Var<'t>, scale: f64) -> Result<Var<'t>> {
        let (qv, kv, vv) = (self.value(), k.value(), v.value());
        if qv.rank() != 2 || qv.shape() != kv.shape() || qv.shape() != vv.shape() {
            return Err(Error::shape(
                "row_attention",
                format!("{:?}, {:?}, {:?}", qv.shape(), kv.shape(), vv.shape()),
            ));
        }
        let (b, d) = (qv.shape()[0], qv.shape()[1]);
        let mut out = vec![0.0; b * d];
        let mut weights = vec![0.0; d];
        for r in 0..b {
            let (q, kk, vvr) = (qv.row(r), kv.row(r), vv.row(r));
            for i in 0..d {
                attention_weights(q[i], kk, scale, &mut weights);
                out[r * d + i] = weights.iter().zip(vvr).map(|(w, x)| w * x).sum();
            }
        }
        self.tape.push_checked(
            "row_attention",
            Tensor::from_parts(vec![b, d], out),
            Op::RowAttention {
                q: self.id,
                k: k.id,
                v: v.id,
                scale,
            },
        )
    }
}

fn attention_weights(q: f64, keys: &[f64], scale: f64, out: &mut [f64]) {
    let max = keys
        .iter()
        .map(|&k| scale * q * k)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &k) in out.iter_mut().zip(keys) {
        *o = (scale * q * k - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<()> {
    if axis >= t.rank() {
        Err(Error::shape(op, format!("axis {axis} invalid for {:?}", t.shape())))
    } else {
        Ok(())
    }
}

/// Maps flat indices of the output (lhs) shape onto the broadcast rhs.
enum BroadcastMap {
    Same,
    Single,
    Strided { out_shape: Vec<usize>, rhs_strides: Vec<usize> },
}

impl BroadcastMap {
    fn index(&self, flat: usize) -> usize {
        match self {
            BroadcastMap::Same => flat,
            BroadcastMap::Single => 0,
            BroadcastMap::Strided {
                out_shape,
                rhs_strides,
            } => {
                let mut rem = flat;
                let mut idx = 0;
                for d in (0..out_shape.len()).rev() {
                    let coord = rem % out_shape[d];
                    rem /= out_shape[d];
                    idx += coord * rhs_strides[d];
                }
                idx
            }
        }
    }
}

fn broadcast_map(lhs: &[usize], rhs: &[usize]) -> Option<BroadcastMap> {
    if lhs == rhs {
        return Some(BroadcastMap::Same);
    }
    if rhs.iter().product::<usize>() == 1 {
        return Some(BroadcastMap::Single);
    }
    if lhs.len() != rhs.len() || lhs.iter().zip(rhs).any(|(&l, &r)| r != l && r != 1) {
        return None;
    }
    let mut strides = vec![0; rhs.len()];
    let mut acc = 1;
    for d in (0..rhs.len()).rev() {
        strides[d] = if rhs[d] == 1 { 0 } else { acc };
        acc *= rhs[d];
    }
    Some(BroadcastMap::Strided {
        out_shape: lhs.to_vec(),
        rhs_strides: strides,
    })
}

/// Sums a full-shape gradient down onto the broadcast rhs shape.
fn reduce_to(grad: &[f64], map: &BroadcastMap, rhs_shape: &[usize]) -> Tensor {
    let mut out = vec![0.0; rhs_shape.iter().product()];
    for (i, g) in grad.iter().enumerate() {
        out[map.index(i)] += g;
    }
    Tensor::from_parts(rhs_shape.to_vec(), out)
}

fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Gradient contributions of `node` to each of its inputs.
fn backprop(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |id: usize| &nodes[id].value;
    let gd = g.data();
    match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            let mut out = Vec::new();
            if nodes[*a].requires_grad {
                let bt = transpose(bv.data(), k, n);
                let da = matmul_nn(gd, &bt, m, n, k);
                out.push((*a, Tensor::from_parts(vec![m, k], da)));
            }
            if nodes[*b].requires_grad {
                let at = transpose(av.data(), m, k);
                let db = matmul_nn(&at, gd, k, m, n);
                out.push((*b, Tensor::from_parts(vec![k, n], db)));
            }
            out
        }
        Op::Transpose(a) => {
            let s = g.shape();
            vec![(
                *a,
                Tensor::from_parts(vec![s[1], s[0]], transpose(gd, s[0], s[1])),
            )]
        }
        Op::Binary(kind, a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let map = broadcast_map(av.shape(), bv.shape()).expect("checked in forward");
            let bd = bv.data();
            let ad = av.data();
            let (ga, gb): (Vec<f64>, Vec<f64>) = match kind {
                BinaryKind::Add => (gd.to_vec(), gd.to_vec()),
                BinaryKind::Sub => (gd.to_vec(), gd.iter().map(|x| -x).collect()),
                BinaryKind::Mul => (
                    gd.iter()
                        .enumerate()
                        .map(|(i, x)| x * bd[map.index(i)])
                        .collect(),
                    gd.iter().zip(ad).map(|(x, y)| x * y).collect(),
                ),
                BinaryKind::Div => (
                    gd.iter()
                        .enumerate()
                        .map(|(i, x)| x / bd[map.index(i)])
                        .collect(),
                    gd.iter()
                        .zip(node.value.data())
                        .enumerate()
                        .map(|(i, (x, out))| -x * out / bd[map.index(i)])
                        .collect(),
                ),
            };
            vec![
                (*a, Tensor::from_parts(av.shape().to_vec(), ga)),
                (*b, reduce_to(&gb, &map, bv.shape())),
            ]
        }
        Op::Scale(a, c) => vec![(*a, g.map(|x| x * c))],
        Op::Unary(kind, a) => {
            let x = val(*a).data();
            let y = node.value.data();
            let data = gd
                .iter()
                .zip(x.iter().zip(y))
                .map(|(gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                .collect();
            vec![(*a, Tensor::from_parts(g.shape().to_vec(), data))]
        }
        Op::Softmax(a, axis) => {
            let y = node.value.data();
            let (outer, len, inner) = axis_extents(g.shape(), *axis);
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |j: usize| (o * len + j) * inner + i;
                    let dot: f64 = (0..len).map(|j| gd[idx(j)] * y[idx(j)]).sum();
                    for j in 0..len {
                        dx[idx(j)] = y[idx(j)] * (gd[idx(j)] - dot);
                    }
                }
            }
            vec![(*a, Tensor::from_parts(g.shape().to_vec(), dx))]
        }
        Op::LogSumExp(a, axis) => {
            let x = val(*a);
            let (outer, len, inner) = axis_extents(x.shape(), *axis);
            let lse = node.value.data();
            let mut dx = vec![0.0; x.numel()];
            for o in 0..outer {
                for j in 0..len {
                    for i in 0..inner {
                        let at = (o * len + j) * inner + i;
                        let r = o * inner + i;
                        dx[at] = gd[r] * (x.data()[at] - lse[r]).exp();
                    }
                }
            }
            vec![(*a, Tensor::from_parts(x.shape().to_vec(), dx))]
        }
        Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), gd[0]))],
        Op::Mean(a) => {
            let x = val(*a);
            vec![(*a, Tensor::full(x.shape(), gd[0] / x.numel() as f64))]
        }
        Op::SumAxis(a, axis) => {
            let x = val(*a);
            let (outer, len, inner) = axis_extents(x.shape(), *axis);
            let mut dx = vec![0.0; x.numel()];
            for o in 0..outer {
                for j in 0..len {
                    for i in 0..inner {
                        dx[(o * len + j) * inner + i] = gd[o * inner + i];
                    }
                }
            }
            vec![(*a, Tensor::from_parts(x.shape().to_vec(), dx))]
        }
        Op::L2Norm(a, axis) => {
            let x = val(*a);
            let norms = node.value.data();
            let (outer, len, inner) = axis_extents(x.shape(), *axis);
            let mut dx = vec![0.0; x.numel()];
            for o in 0..outer {
                for j in 0..len {
                    for i in 0..inner {
                        let at = (o * len + j) * inner + i;
                        let r = o * inner + i;
                        if norms[r] > 0.0 {
                            dx[at] = gd[r] * x.data()[at] / norms[r];
                        }
                    }
                }
            }
            vec![(*a, Tensor::from_parts(x.shape().to_vec(), dx))]
        }
        Op::Concat(inputs, axis) => {
            let (outer, total, inner) = axis_extents(g.shape(), *axis);
            let mut offset = 0;
            let mut out = Vec::with_capacity(inputs.len());
            for &id in inputs {
                let shape = val(id).shape().to_vec();
                let len = shape[*axis];
                let mut data = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = (o * total + offset) * inner;
                    data.extend_from_slice(&gd[base..base + len * inner]);
                }
                offset += len;
                out.push((id, Tensor::from_parts(shape, data)));
            }
            out
        }
        Op::Slice { input, axis, start } => {
            let x = val(*input);
            let (outer, full, inner) = axis_extents(x.shape(), *axis);
            let len = g.shape()[*axis];
            let mut dx = vec![0.0; x.numel()];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                dx[base..base + len * inner]
                    .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
            }
            vec![(*input, Tensor::from_parts(x.shape().to_vec(), dx))]
        }
        Op::WithoutDiagonal(a) => {
            let n = val(*a).rows();
            let mut dx = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n - 1 {
                    let col = if j < i { j } else { j + 1 };
                    dx[i * n + col] = gd[i * (n - 1) + j];
                }
            }
            vec![(*a, Tensor::from_parts(vec![n, n], dx))]
        }
        Op::RowAttention { q, k, v, scale } => {
            let (qv, kv, vv) = (val(*q), val(*k), val(*v));
            let (b, d) = (qv.shape()[0], qv.shape()[1]);
            let mut dq = vec![0.0; b * d];
            let mut dk = vec![0.0; b * d];
            let mut dv = vec![0.0; b * d];
            let mut w = vec![0.0; d];
            let mut ds = vec![0.0; d];
            for r in 0..b {
                let (qr, kr, vr) = (qv.row(r), kv.row(r), vv.row(r));
                let gr = &gd[r * d..(r + 1) * d];
                for i in 0..d {
                    attention_weights(qr[i], kr, *scale, &mut w);
                    // dA_ij = g_i v_j; ds_ij = A_ij (dA_ij - Σ_j' A_ij' dA_ij')
                    let dot: f64 = w.iter().zip(vr).map(|(a, x)| a * gr[i] * x).sum();
                    for j in 0..d {
                        ds[j] = w[j] * (gr[i] * vr[j] - dot);
                        dv[r * d + j] += w[j] * gr[i];
                    }
                    for j in 0..d {
                        dq[r * d + i] += scale * ds[j] * kr[j];
                        dk[r * d + j] += scale * ds[j] * qr[i];
                    }
                }
            }
            let shape = vec![b, d];
            vec![
                (*q, Tensor::from_parts(shape.clone(), dq)),
                (*k, Tensor::from_parts(shape.clone(), dk)),
                (*v, Tensor::from_parts(shape, dv)),
            ]
        }
    }
}
