use super::tensor::{matmul_raw, transpose_raw, Tensor};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds recordable on a [`Tape`].
///
/// Binary elementwise ops (`Add`, `Sub`, `Mul`) accept either equal shapes or
/// a right-hand side of shape `[n]` / `[1, n]` broadcast over the rows of a
/// `[m, n]` left-hand side.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Gelu,
    /// Softmax over the last axis.
    Softmax,
    /// Row-wise softmax of a square score matrix where row `i` only sees
    /// columns `j <= i`; masked entries are exactly zero.
    CausalSoftmax,
    LogSoftmax,
    /// Row-wise normalization to zero mean and unit variance (no affine).
    LayerNorm,
    ConcatRows,
    ConcatCols,
    SliceRows { start: usize, end: usize },
    SliceCols { start: usize, end: usize },
    /// Row lookup `table[indices[t]]`; backward scatter-adds into the table.
    Gather { indices: Vec<usize> },
    /// Picks the element at a flat index as a scalar.
    Select { index: usize },
    /// Picks `x[i, indices[i]]` for each row, giving a rank-1 tensor.
    PickRows { indices: Vec<usize> },
    Sum,
    Mean,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Gelu => "gelu",
            OpKind::Softmax => "softmax",
            OpKind::CausalSoftmax => "causal_softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::LayerNorm => "layer_norm",
            OpKind::ConcatRows => "concat_rows",
            OpKind::ConcatCols => "concat_cols",
            OpKind::SliceRows { .. } => "slice_rows",
            OpKind::SliceCols { .. } => "slice_cols",
            OpKind::Gather { .. } => "gather",
            OpKind::Select { .. } => "select",
            OpKind::PickRows { .. } => "pick_rows",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
        }
    }
}

#[derive(Debug)]
struct Node {
    kind: OpKind,
    inputs: Vec<NodeId>,
    value: Tensor,
    /// Forward-pass data reused by backward (layer-norm inverse std).
    aux: Option<Vec<f64>>,
    requires_grad: bool,
}

/// Reverse-mode record of one forward pass.
///
/// Nodes are appended in evaluation order, so parents always precede
/// children. A tape is built per forward pass and dropped after backward.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { kind: OpKind::Leaf, inputs: Vec::new(), value, aux: None, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    /// A leaf marked as a differentiation target.
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_target(&self, id: NodeId) -> bool {
        let n = &self.nodes[id.0];
        n.requires_grad && n.kind == OpKind::Leaf
    }

    /// Records `kind` applied to `inputs` and returns the new node.
    pub fn apply(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        if kind == OpKind::Leaf {
            return Err(Error::invalid("leaves are created with constant() or variable()"));
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::invalid(format!("{}: unknown node {}", kind.name(), bad.0)));
        }
        let vals: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let (value, aux) = forward(&kind, &vals)?;
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        self.nodes.push(Node { kind, inputs: inputs.to_vec(), value, aux, requires_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::MatMul, &[a, b])
    }
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Transpose, &[a])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.apply(OpKind::Scale(factor), &[a])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Sigmoid, &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Tanh, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Exp, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Log, &[a])
    }
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Gelu, &[a])
    }
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Softmax, &[a])
    }
    pub fn causal_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::CausalSoftmax, &[a])
    }
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::LogSoftmax, &[a])
    }
    pub fn layer_norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::LayerNorm, &[a])
    }
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(OpKind::ConcatRows, parts)
    }
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(OpKind::ConcatCols, parts)
    }
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.apply(OpKind::SliceRows { start, end }, &[a])
    }
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.apply(OpKind::SliceCols { start, end }, &[a])
    }
    pub fn gather(&mut self, table: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        self.apply(OpKind::Gather { indices }, &[table])
    }
    pub fn select(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        self.apply(OpKind::Select { index }, &[a])
    }
    pub fn pick_rows(&mut self, a: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        self.apply(OpKind::PickRows { indices }, &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Sum, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Mean, &[a])
    }

    /// Reverse accumulation from a scalar `output`.
    ///
    /// Every target leaf gets a gradient, zero-filled when `output` does not
    /// depend on it. The tape itself is not modified.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::invalid(format!("backward: unknown node {}", output.0)))?;
        if out.value.len() != 1 {
            return Err(Error::NonScalarOutput(out.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::full(out.value.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || node.kind == OpKind::Leaf {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let needs: Vec<bool> = node.inputs.iter().map(|i| self.nodes[i.0].requires_grad).collect();
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            let input_grads = vjp(node, &inputs, &g, &needs);
            for ((id, need), ig) in node.inputs.iter().zip(&needs).zip(input_grads) {
                if !need {
                    continue;
                }
                let Some(ig) = ig else { continue };
                match &mut grads[id.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        // Fill unreached targets so every target has a gradient.
        grads.resize(self.nodes.len(), None);
        for (i, node) in self.nodes.iter().enumerate() {
            if node.kind == OpKind::Leaf && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            } else if node.kind != OpKind::Leaf {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn mismatch(op: &'static str, ts: &[&Tensor]) -> Error {
    Error::ShapeMismatch { op, shapes: ts.iter().map(|t| t.shape().to_vec()).collect() }
}

fn expect_arity(kind: &OpKind, inputs: &[&Tensor], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::invalid(format!("{} expects {n} inputs, got {}", kind.name(), inputs.len())));
    }
    Ok(())
}

fn is_matrix(t: &Tensor) -> bool {
    t.rank() == 2
}

/// How the right operand of a binary op maps onto the left.
fn broadcast_mode(a: &Tensor, b: &Tensor) -> Option<bool> {
    if a.shape() == b.shape() {
        return Some(false);
    }
    let row_like = match b.shape() {
        [n] => *n == a.cols(),
        [1, n] => *n == a.cols(),
        _ => false,
    };
    (is_matrix(a) && row_like).then_some(true)
}

fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let bd = b.data();
    let n = bd.len();
    a.data().iter().enumerate().map(|(i, &x)| f(x, bd[i % n])).collect()
}

fn reduce_rows(g: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in g.chunks(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn forward(kind: &OpKind, inputs: &[&Tensor]) -> Result<(Tensor, Option<Vec<f64>>)> {
    let name = kind.name();
    let unary = |f: &dyn Fn(f64) -> f64| -> Result<(Tensor, Option<Vec<f64>>)> {
        expect_arity(kind, inputs, 1)?;
        Ok((inputs[0].map(f), None))
    };
    match kind {
        OpKind::Leaf => unreachable!("leaves are not applied"),
        OpKind::MatMul => {
            expect_arity(kind, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if !is_matrix(a) || !is_matrix(b) || a.shape()[1] != b.shape()[0] {
                return Err(mismatch(name, inputs));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            Ok((Tensor::new(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n))?, None))
        }
        OpKind::Transpose => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if !is_matrix(a) {
                return Err(mismatch(name, inputs));
            }
            let (r, c) = (a.shape()[0], a.shape()[1]);
            Ok((Tensor::new(vec![c, r], transpose_raw(a.data(), r, c))?, None))
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            expect_arity(kind, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            broadcast_mode(a, b).ok_or_else(|| mismatch(name, inputs))?;
            let data = match kind {
                OpKind::Add => binary(a, b, |x, y| x + y),
                OpKind::Sub => binary(a, b, |x, y| x - y),
                _ => binary(a, b, |x, y| x * y),
            };
            Ok((Tensor::new(a.shape().to_vec(), data)?, None))
        }
        OpKind::Scale(c) => {
            let c = *c;
            unary(&|x| x * c)
        }
        OpKind::Sigmoid => unary(&|x| 1.0 / (1.0 + (-x).exp())),
        OpKind::Tanh => unary(&f64::tanh),
        OpKind::Exp => unary(&f64::exp),
        OpKind::Log => unary(&f64::ln),
        OpKind::Gelu => unary(&gelu),
        OpKind::Softmax | OpKind::LogSoftmax => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if a.rank() == 0 {
                return Err(mismatch(name, inputs));
            }
            let c = a.cols();
            let mut out = vec![0.0; a.len()];
            for (xr, orow) in a.data().chunks(c).zip(out.chunks_mut(c)) {
                if *kind == OpKind::Softmax {
                    softmax_row(xr, orow);
                } else {
                    let max = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + xr.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    for (o, v) in orow.iter_mut().zip(xr) {
                        *o = v - lse;
                    }
                }
            }
            Ok((Tensor::new(a.shape().to_vec(), out)?, None))
        }
        OpKind::CausalSoftmax => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if !is_matrix(a) || a.shape()[0] != a.shape()[1] {
                return Err(mismatch(name, inputs));
            }
            let n = a.shape()[0];
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                softmax_row(&a.data()[i * n..i * n + i + 1], &mut out[i * n..i * n + i + 1]);
            }
            Ok((Tensor::new(vec![n, n], out)?, None))
        }
        OpKind::LayerNorm => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if a.rank() == 0 {
                return Err(mismatch(name, inputs));
            }
            let c = a.cols();
            let mut out = vec![0.0; a.len()];
            let mut inv = Vec::with_capacity(a.rows());
            for (xr, orow) in a.data().chunks(c).zip(out.chunks_mut(c)) {
                let mean = xr.iter().sum::<f64>() / c as f64;
                let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                for (o, v) in orow.iter_mut().zip(xr) {
                    *o = (v - mean) * s;
                }
                inv.push(s);
            }
            Ok((Tensor::new(a.shape().to_vec(), out)?, Some(inv)))
        }
        OpKind::ConcatRows => {
            if inputs.is_empty() || inputs.iter().any(|t| !is_matrix(t) || t.cols() != inputs[0].cols()) {
                return Err(mismatch(name, inputs));
            }
            let rows = inputs.iter().map(|t| t.rows()).sum();
            let data = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
            Ok((Tensor::new(vec![rows, inputs[0].cols()], data)?, None))
        }
        OpKind::ConcatCols => {
            if inputs.is_empty() || inputs.iter().any(|t| !is_matrix(t) || t.rows() != inputs[0].rows()) {
                return Err(mismatch(name, inputs));
            }
            let rows = inputs[0].rows();
            let cols: usize = inputs.iter().map(|t| t.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for t in inputs {
                    data.extend_from_slice(t.row(r));
                }
            }
            Ok((Tensor::new(vec![rows, cols], data)?, None))
        }
        OpKind::SliceRows { start, end } => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if !is_matrix(a) || start >= end || *end > a.rows() {
                return Err(Error::ShapeMismatch {
                    op: name,
                    shapes: vec![a.shape().to_vec(), vec![*start, *end]],
                });
            }
            Ok((a.rows_slice(*start, *end), None))
        }
        OpKind::SliceCols { start, end } => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if !is_matrix(a) || start >= end || *end > a.cols() {
                return Err(Error::ShapeMismatch {
                    op: name,
                    shapes: vec![a.shape().to_vec(), vec![*start, *end]],
                });
            }
            let mut data = Vec::with_capacity(a.rows() * (end - start));
            for r in 0..a.rows() {
                data.extend_from_slice(&a.row(r)[*start..*end]);
            }
            Ok((Tensor::new(vec![a.rows(), end - start], data)?, None))
        }
        OpKind::Gather { indices } => {
            expect_arity(kind, inputs, 1)?;
            let table = inputs[0];
            if !is_matrix(table) || indices.iter().any(|&i| i >= table.rows()) || indices.is_empty() {
                return Err(Error::ShapeMismatch {
                    op: name,
                    shapes: vec![table.shape().to_vec(), vec![indices.iter().copied().max().unwrap_or(0)]],
                });
            }
            let mut data = Vec::with_capacity(indices.len() * table.cols());
            for &i in indices {
                data.extend_from_slice(table.row(i));
            }
            Ok((Tensor::new(vec![indices.len(), table.cols()], data)?, None))
        }
        OpKind::Select { index } => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if *index >= a.len() {
                return Err(Error::ShapeMismatch { op: name, shapes: vec![a.shape().to_vec(), vec![*index]] });
            }
            Ok((Tensor::scalar(a.data()[*index]), None))
        }
        OpKind::PickRows { indices } => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if !is_matrix(a) || indices.len() != a.rows() || indices.iter().any(|&i| i >= a.cols()) {
                return Err(Error::ShapeMismatch { op: name, shapes: vec![a.shape().to_vec(), vec![indices.len()]] });
            }
            let data = indices.iter().enumerate().map(|(r, &c)| a.at(r, c)).collect();
            Ok((Tensor::vector(data), None))
        }
        OpKind::Sum => {
            expect_arity(kind, inputs, 1)?;
            Ok((Tensor::scalar(inputs[0].sum()), None))
        }
        OpKind::Mean => {
            expect_arity(kind, inputs, 1)?;
            let a = inputs[0];
            if a.is_empty() {
                return Err(mismatch(name, inputs));
            }
            Ok((Tensor::scalar(a.sum() / a.len() as f64), None))
        }
    }
}

/// Vector-Jacobian products for every input of `node` that needs one.
fn vjp(node: &Node, inputs: &[&Tensor], g: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
    let y = &node.value;
    let like = |t: &Tensor, data: Vec<f64>| Tensor::new(t.shape().to_vec(), data).expect("gradient shape");
    let elementwise = |f: &dyn Fn(usize) -> f64| {
        vec![Some(like(inputs[0], g.data().iter().enumerate().map(|(i, gv)| gv * f(i)).collect()))]
    };
    match &node.kind {
        OpKind::Leaf => Vec::new(),
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let ga = needs[0].then(|| {
                let bt = transpose_raw(b.data(), k, n);
                like(a, matmul_raw(g.data(), &bt, m, n, k))
            });
            let gb = needs[1].then(|| {
                let at = transpose_raw(a.data(), m, k);
                like(b, matmul_raw(&at, g.data(), k, m, n))
            });
            vec![ga, gb]
        }
        OpKind::Transpose => {
            let (r, c) = (inputs[0].shape()[0], inputs[0].shape()[1]);
            vec![Some(like(inputs[0], transpose_raw(g.data(), c, r)))]
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let broadcast = broadcast_mode(a, b).unwrap_or(false);
            let ga = needs[0].then(|| match node.kind {
                OpKind::Mul => like(a, binary(g, b, |gv, bv| gv * bv)),
                _ => g.clone(),
            });
            let gb = needs[1].then(|| {
                let full: Vec<f64> = match node.kind {
                    OpKind::Add => g.data().to_vec(),
                    OpKind::Sub => g.data().iter().map(|v| -v).collect(),
                    _ => g.data().iter().zip(a.data()).map(|(gv, av)| gv * av).collect(),
                };
                if broadcast {
                    like(b, reduce_rows(&full, a.cols()))
                } else {
                    like(b, full)
                }
            });
            vec![ga, gb]
        }
        OpKind::Scale(c) => vec![Some(g.scaled(*c))],
        OpKind::Sigmoid => elementwise(&|i| y.data()[i] * (1.0 - y.data()[i])),
        OpKind::Tanh => elementwise(&|i| 1.0 - y.data()[i] * y.data()[i]),
        OpKind::Exp => elementwise(&|i| y.data()[i]),
        OpKind::Log => elementwise(&|i| 1.0 / inputs[0].data()[i]),
        OpKind::Gelu => elementwise(&|i| gelu_grad(inputs[0].data()[i])),
        OpKind::Softmax | OpKind::CausalSoftmax => {
            let c = y.cols();
            let mut out = vec![0.0; y.len()];
            for ((yr, gr), orow) in y.data().chunks(c).zip(g.data().chunks(c)).zip(out.chunks_mut(c)) {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((o, yv), gv) in orow.iter_mut().zip(yr).zip(gr) {
                    *o = yv * (gv - dot);
                }
            }
            vec![Some(like(inputs[0], out))]
        }
        OpKind::LogSoftmax => {
            let c = y.cols();
            let mut out = vec![0.0; y.len()];
            for ((yr, gr), orow) in y.data().chunks(c).zip(g.data().chunks(c)).zip(out.chunks_mut(c)) {
                let total: f64 = gr.iter().sum();
                for ((o, yv), gv) in orow.iter_mut().zip(yr).zip(gr) {
                    *o = gv - yv.exp() * total;
                }
            }
            vec![Some(like(inputs[0], out))]
        }
        OpKind::LayerNorm => {
            let c = y.cols();
            let inv = node.aux.as_ref().expect("layer norm caches inverse std");
            let mut out = vec![0.0; y.len()];
            for (r, ((yr, gr), orow)) in y.data().chunks(c).zip(g.data().chunks(c)).zip(out.chunks_mut(c)).enumerate() {
                let mean_g = gr.iter().sum::<f64>() / c as f64;
                let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                for ((o, yv), gv) in orow.iter_mut().zip(yr).zip(gr) {
                    *o = inv[r] * (gv - mean_g - yv * mean_gy);
                }
            }
            vec![Some(like(inputs[0], out))]
        }
        OpKind::ConcatRows => {
            let c = g.cols();
            let mut offset = 0;
            inputs
                .iter()
                .zip(needs)
                .map(|(t, need)| {
                    let rows = t.rows();
                    let part = need.then(|| like(t, g.data()[offset * c..(offset + rows) * c].to_vec()));
                    offset += rows;
                    part
                })
                .collect()
        }
        OpKind::ConcatCols => {
            let mut offset = 0;
            inputs
                .iter()
                .zip(needs)
                .map(|(t, need)| {
                    let w = t.cols();
                    let part = need.then(|| {
                        let mut data = Vec::with_capacity(t.len());
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        like(t, data)
                    });
                    offset += w;
                    part
                })
                .collect()
        }
        OpKind::SliceRows { start, .. } => {
            let a = inputs[0];
            let c = a.cols();
            let mut out = vec![0.0; a.len()];
            out[start * c..start * c + g.len()].copy_from_slice(g.data());
            vec![Some(like(a, out))]
        }
        OpKind::SliceCols { start, end } => {
            let a = inputs[0];
            let c = a.cols();
            let w = end - start;
            let mut out = vec![0.0; a.len()];
            for r in 0..a.rows() {
                out[r * c + start..r * c + end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
            }
            vec![Some(like(a, out))]
        }
        OpKind::Gather { indices } => {
            let table = inputs[0];
            let c = table.cols();
            let mut out = vec![0.0; table.len()];
            for (t, &row) in indices.iter().enumerate() {
                for (o, gv) in out[row * c..(row + 1) * c].iter_mut().zip(g.row(t)) {
                    *o += gv;
                }
            }
            vec![Some(like(table, out))]
        }
        OpKind::Select { index } => {
            let mut out = vec![0.0; inputs[0].len()];
            out[*index] = g.data()[0];
            vec![Some(like(inputs[0], out))]
        }
        OpKind::PickRows { indices } => {
            let a = inputs[0];
            let mut out = vec![0.0; a.len()];
            for (r, &c) in indices.iter().enumerate() {
                out[r * a.cols() + c] = g.data()[r];
            }
            vec![Some(like(a, out))]
        }
        OpKind::Sum => vec![Some(Tensor::full(inputs[0].shape(), g.data()[0]))],
        OpKind::Mean => {
            let n = inputs[0].len() as f64;
            vec![Some(Tensor::full(inputs[0].shape(), g.data()[0] / n))]
        }
    }
}
