//! Reverse-mode differentiation over matrix primitives.
//!
//! A [`Tape`] records every primitive as it is evaluated. Nodes are
//! appended in evaluation order, so the node list is already a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! Parameters are referenced from a shared [`ParamStore`] rather than
//! copied, which lets many tapes (one per query) read the same
//! parameter snapshot concurrently.

use std::borrow::Cow;
use std::sync::Arc;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// How the right operand of an elementwise op is broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Column,
    Scalar,
}

impl Broadcast {
    fn resolve(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<Self> {
        match b {
            _ if a == b => Ok(Broadcast::Same),
            [1, 1] => Ok(Broadcast::Scalar),
            [1, c] if c == a[1] => Ok(Broadcast::Row),
            [r, 1] if r == a[0] => Ok(Broadcast::Column),
            _ => Err(Error::Shape { op, lhs: a, rhs: b }),
        }
    }

    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Broadcast::Same => r * cols + c,
            Broadcast::Row => c,
            Broadcast::Column => r,
            Broadcast::Scalar => 0,
        }
    }

    /// Sums a full-shape gradient down to the operand's shape.
    fn reduce(self, full: Tensor, shape: [usize; 2]) -> Tensor {
        match self {
            Broadcast::Same => full,
            Broadcast::Row => full.column_sums(),
            Broadcast::Column => full.row_sums(),
            Broadcast::Scalar => Tensor::scalar(full.sum()),
        }
        .reshape(shape[0], shape[1])
        .expect("reduced gradient matches operand shape")
    }
}

#[derive(Debug)]
enum Op<'a> {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    MatMulTn(NodeId, NodeId),
    Reshape(NodeId),
    Add(NodeId, NodeId, Broadcast),
    Mul(NodeId, NodeId, Broadcast),
    Div(NodeId, NodeId, Broadcast),
    AddScalar(NodeId),
    Scale(NodeId, f64),
    ConcatColumns(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Clamp(NodeId, f64, f64),
    Sum(NodeId),
    MeanRows(NodeId),
    RowSums(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    RowL2Normalize {
        x: NodeId,
        inv_norm: Vec<f64>,
    },
    GatherRows(NodeId, Cow<'a, [usize]>),
    ScatterAddRows(NodeId, Cow<'a, [usize]>),
    EdgeProductSum {
        x: NodeId,
        table: NodeId,
        src: Arc<[usize]>,
        rel: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
}

#[derive(Debug)]
struct Node<'a> {
    value: Option<Tensor>,
    op: Op<'a>,
    needs_grad: bool,
}

/// Record of one forward evaluation.
pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'a ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.value(*p),
            _ => unreachable!("every non-parameter node owns its value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.value(id).shape()
    }

    fn push(&mut self, value: Tensor, op: Op<'a>, inputs: &[NodeId]) -> NodeId {
        debug_assert!(
            !inputs.iter().all(|&i| self.value(i).is_finite()) || value.is_finite(),
            "non-finite output from {op:?}"
        );
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(v, Op::MatMulNt(a, b), &[a, b]))
    }

    /// `aᵀ · b`.
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_tn(self.value(b))?;
        Ok(self.push(v, Op::MatMulTn(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let v = self.value(a).clone().reshape(rows, cols)?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, Broadcast)> {
        let (av, bv) = (self.value(a), self.value(b));
        let bc = Broadcast::resolve(name, av.shape(), bv.shape())?;
        let cols = av.cols();
        let mut out = av.clone();
        let bd = bv.data();
        match bc {
            Broadcast::Same => {
                for (o, &y) in out.data_mut().iter_mut().zip(bd) {
                    *o = f(*o, y);
                }
            }
            _ => {
                for r in 0..av.rows() {
                    for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                        *o = f(*o, bd[bc.index(r, c, cols)]);
                    }
                }
            }
        }
        Ok((out, bc))
    }

    /// `a + b`, with `b` the same shape, a `1 x cols` row, a `rows x 1`
    /// column or a `1 x 1` scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (v, bc) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b, bc), &[a, b]))
    }

    /// Elementwise product with the broadcasting rules of [`add`](Self::add).
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (v, bc) = self.binary("mul_elementwise", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b, bc), &[a, b]))
    }

    /// Elementwise quotient with the broadcasting rules of [`add`](Self::add).
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (v, bc) = self.binary("div", a, b, |x, y| x / y)?;
        Ok(self.push(v, Op::Div(a, b, bc), &[a, b]))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn concat_columns(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).concat_columns(self.value(b))?;
        Ok(self.push(v, Op::ConcatColumns(a, b), &[a, b]))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a), &[a])
    }

    /// Clamps into `[lo, hi]`; gradient is zero where clamping applied.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    /// Mean over rows, giving `1 x cols`.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut v = av.column_sums();
        if av.rows() > 0 {
            v.scale_assign(1.0 / av.rows() as f64);
        }
        self.push(v, Op::MeanRows(a), &[a])
    }

    /// Sum over columns, giving `rows x 1`.
    pub fn row_sums(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_sums();
        self.push(v, Op::RowSums(a), &[a])
    }

    /// Per-row layer normalization with `1 x cols` gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        for (name, p) in [("layer_norm gain", gain), ("layer_norm bias", bias)] {
            if self.shape(p) != [1, cols] {
                return Err(Error::Shape {
                    op: name,
                    lhs: xv.shape(),
                    rhs: self.shape(p),
                });
            }
        }
        let mut normalized = Tensor::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (o, x) in normalized.row_mut(r).iter_mut().zip(row) {
                *o = (x - mean) * inv;
            }
            inv_std.push(inv);
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut out = normalized.clone();
        for r in 0..rows {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = *o * g[c] + b[c];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Scales each row to unit L2 norm: `x / sqrt(|x|² + eps)`.
    pub fn row_l2_normalize(&mut self, x: NodeId, eps: f64) -> NodeId {
        let mut out = self.value(x).clone();
        let mut inv_norm = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let inv = 1.0 / (row.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            row.iter_mut().for_each(|v| *v *= inv);
            inv_norm.push(inv);
        }
        self.push(out, Op::RowL2Normalize { x, inv_norm }, &[x])
    }

    pub fn gather_rows(&mut self, a: NodeId, index: impl Into<Cow<'a, [usize]>>) -> Result<NodeId> {
        let index = index.into();
        let av = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: av.shape(),
                rhs: [bad, 0],
            });
        }
        let v = av.gather_rows(&index);
        Ok(self.push(v, Op::GatherRows(a, index), &[a]))
    }

    /// Sums row `k` of `a` into row `index[k]` of a fresh `rows x cols` tensor.
    pub fn scatter_add_rows(
        &mut self,
        rows: usize,
        index: impl Into<Cow<'a, [usize]>>,
        a: NodeId,
    ) -> Result<NodeId> {
        let index = index.into();
        let av = self.value(a);
        if index.len() != av.rows() || index.iter().any(|&i| i >= rows) {
            return Err(Error::Shape {
                op: "scatter_add_rows",
                lhs: av.shape(),
                rhs: [rows, index.len()],
            });
        }
        let mut v = Tensor::zeros(rows, av.cols());
        av.scatter_add_rows_into(&index, &mut v);
        Ok(self.push(v, Op::ScatterAddRows(a, index), &[a]))
    }

    /// `out[dst[e]] += x[src[e]] ⊙ table[rel[e]]` over all edges `e`.
    ///
    /// Equivalent to `scatter_add_rows(rows, dst, mul(gather_rows(x, src),
    /// gather_rows(table, rel)))` without materializing per-edge rows.
    pub fn edge_product_sum(
        &mut self,
        rows: usize,
        x: NodeId,
        table: NodeId,
        src: impl Into<Arc<[usize]>>,
        rel: impl Into<Arc<[usize]>>,
        dst: impl Into<Arc<[usize]>>,
    ) -> Result<NodeId> {
        let (src, rel, dst) = (src.into(), rel.into(), dst.into());
        let (xv, tv) = (self.value(x), self.value(table));
        let cols = xv.cols();
        let valid = tv.cols() == cols
            && src.len() == rel.len()
            && src.len() == dst.len()
            && src.iter().all(|&i| i < xv.rows())
            && rel.iter().all(|&i| i < tv.rows())
            && dst.iter().all(|&i| i < rows);
        if !valid {
            return Err(Error::Shape {
                op: "edge_product_sum",
                lhs: xv.shape(),
                rhs: tv.shape(),
            });
        }
        let mut out = Tensor::zeros(rows, cols);
        for ((&s, &r), &d) in src.iter().zip(rel.iter()).zip(dst.iter()) {
            let (xs, tr) = (xv.row(s), tv.row(r));
            for ((o, a), b) in out.row_mut(d).iter_mut().zip(xs).zip(tr) {
                *o += a * b;
            }
        }
        Ok(self.push(out, Op::EdgeProductSum { x, table, src, rel, dst }, &[x, table]))
    }

    /// Propagates `d loss / d node` back to every parameter leaf.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients(vec![None; self.params.len()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            let mut send = |id: NodeId, g: Tensor| {
                if !self.nodes[id.0].needs_grad {
                    return;
                }
                match &mut grads[id.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            };
            let needs = |id: NodeId| self.nodes[id.0].needs_grad;
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => {
                    match &mut out.0[p.0] {
                        Some(acc) => acc.add_assign(&dy),
                        slot @ None => *slot = Some(dy),
                    }
                }
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        send(*a, dy.matmul_nt(self.value(*b))?);
                    }
                    if needs(*b) {
                        send(*b, self.value(*a).matmul_tn(&dy)?);
                    }
                }
                Op::MatMulNt(a, b) => {
                    if needs(*a) {
                        send(*a, dy.matmul(self.value(*b))?);
                    }
                    if needs(*b) {
                        send(*b, dy.matmul_tn(self.value(*a))?);
                    }
                }
                Op::MatMulTn(a, b) => {
                    if needs(*a) {
                        send(*a, self.value(*b).matmul_nt(&dy)?);
                    }
                    if needs(*b) {
                        send(*b, self.value(*a).matmul(&dy)?);
                    }
                }
                Op::Reshape(a) => {
                    let [r, c] = self.shape(*a);
                    send(*a, dy.reshape(r, c)?);
                }
                Op::Add(a, b, bc) => {
                    if needs(*b) {
                        send(*b, bc.reduce(dy.clone(), self.shape(*b)));
                    }
                    send(*a, dy);
                }
                Op::Mul(a, b, bc) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let cols = av.cols();
                    if needs(*a) {
                        let mut da = dy.clone();
                        for r in 0..da.rows() {
                            for (c, g) in da.row_mut(r).iter_mut().enumerate() {
                                *g *= bv.data()[bc.index(r, c, cols)];
                            }
                        }
                        send(*a, da);
                    }
                    if needs(*b) {
                        let mut full = dy;
                        for (g, x) in full.data_mut().iter_mut().zip(av.data()) {
                            *g *= x;
                        }
                        send(*b, bc.reduce(full, bv.shape()));
                    }
                }
                Op::Div(a, b, bc) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let cols = av.cols();
                    let mut da = dy;
                    for r in 0..da.rows() {
                        for (c, g) in da.row_mut(r).iter_mut().enumerate() {
                            *g /= bv.data()[bc.index(r, c, cols)];
                        }
                    }
                    if needs(*b) {
                        // d(a/b)/db = -(a/b)/b = -y/b; reuse da = dy/b.
                        let y = node.value.as_ref().expect("div owns its value");
                        let mut full = da.clone();
                        for (g, yv) in full.data_mut().iter_mut().zip(y.data()) {
                            *g = -*g * yv;
                        }
                        send(*b, bc.reduce(full, bv.shape()));
                    }
                    send(*a, da);
                }
                Op::AddScalar(a) => send(*a, dy),
                Op::Scale(a, c) => send(*a, dy.map(|g| g * c)),
                Op::ConcatColumns(a, b) => {
                    let ca = self.shape(*a)[1];
                    let cb = self.shape(*b)[1];
                    let rows = dy.rows();
                    let mut da = Vec::with_capacity(rows * ca);
                    let mut db = Vec::with_capacity(rows * cb);
                    for r in 0..rows {
                        let row = dy.row(r);
                        da.extend_from_slice(&row[..ca]);
                        db.extend_from_slice(&row[ca..]);
                    }
                    send(*a, Tensor::from_vec(rows, ca, da)?);
                    send(*b, Tensor::from_vec(rows, cb, db)?);
                }
                Op::Relu(a) => {
                    let mut da = dy;
                    for (g, x) in da.data_mut().iter_mut().zip(self.value(*a).data()) {
                        if *x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    send(*a, da);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("sigmoid owns its value");
                    let mut da = dy;
                    for (g, s) in da.data_mut().iter_mut().zip(y.data()) {
                        *g *= s * (1.0 - s);
                    }
                    send(*a, da);
                }
                Op::Exp(a) => {
                    let y = node.value.as_ref().expect("exp owns its value");
                    let mut da = dy;
                    for (g, e) in da.data_mut().iter_mut().zip(y.data()) {
                        *g *= e;
                    }
                    send(*a, da);
                }
                Op::Log(a) => {
                    let mut da = dy;
                    for (g, x) in da.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *g /= x;
                    }
                    send(*a, da);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut da = dy;
                    for (g, x) in da.data_mut().iter_mut().zip(self.value(*a).data()) {
                        if *x < *lo || *x > *hi {
                            *g = 0.0;
                        }
                    }
                    send(*a, da);
                }
                Op::Sum(a) => {
                    let [r, c] = self.shape(*a);
                    send(*a, Tensor::full(r, c, dy.item()));
                }
                Op::MeanRows(a) => {
                    let [r, c] = self.shape(*a);
                    let mut da = Tensor::zeros(r, c);
                    let inv = 1.0 / r as f64;
                    for row in 0..r {
                        for (o, g) in da.row_mut(row).iter_mut().zip(dy.data()) {
                            *o = g * inv;
                        }
                    }
                    send(*a, da);
                }
                Op::RowSums(a) => {
                    let [r, c] = self.shape(*a);
                    let mut da = Tensor::zeros(r, c);
                    for row in 0..r {
                        let g = dy.data()[row];
                        da.row_mut(row).iter_mut().for_each(|o| *o = g);
                    }
                    send(*a, da);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let g = self.value(*gain).data();
                    let (rows, cols) = (dy.rows(), dy.cols());
                    if needs(*gain) {
                        let mut dg = Tensor::zeros(1, cols);
                        for r in 0..rows {
                            for ((o, d), n) in dg.data_mut().iter_mut().zip(dy.row(r)).zip(normalized.row(r)) {
                                *o += d * n;
                            }
                        }
                        send(*gain, dg);
                    }
                    if needs(*bias) {
                        send(*bias, dy.column_sums());
                    }
                    if needs(*x) {
                        let mut dx = Tensor::zeros(rows, cols);
                        let n = cols as f64;
                        for r in 0..rows {
                            let xhat = normalized.row(r);
                            let dxhat: Vec<f64> = dy.row(r).iter().zip(g).map(|(d, g)| d * g).collect();
                            let s1: f64 = dxhat.iter().sum();
                            let s2: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum();
                            let scale = inv_std[r] / n;
                            for ((o, dh), xh) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xhat) {
                                *o = scale * (n * dh - s1 - xh * s2);
                            }
                        }
                        send(*x, dx);
                    }
                }
                Op::RowL2Normalize { x, inv_norm } => {
                    let y = node.value.as_ref().expect("normalize owns its value");
                    let mut dx = dy;
                    for (r, inv) in inv_norm.iter().enumerate() {
                        let yr = y.row(r);
                        let dot: f64 = dx.row(r).iter().zip(yr).map(|(a, b)| a * b).sum();
                        for (g, yv) in dx.row_mut(r).iter_mut().zip(yr) {
                            *g = (*g - yv * dot) * inv;
                        }
                    }
                    send(*x, dx);
                }
                Op::GatherRows(a, index) => {
                    let [r, c] = self.shape(*a);
                    let mut da = Tensor::zeros(r, c);
                    dy.scatter_add_rows_into(index, &mut da);
                    send(*a, da);
                }
                Op::ScatterAddRows(a, index) => {
                    send(*a, dy.gather_rows(index));
                }
                Op::EdgeProductSum { x, table, src, rel, dst } => {
                    let (xv, tv) = (self.value(*x), self.value(*table));
                    let edges = src.iter().zip(rel.iter()).zip(dst.iter());
                    if needs(*x) {
                        let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                        for ((&s, &r), &d) in edges.clone() {
                            for ((o, g), b) in dx.row_mut(s).iter_mut().zip(dy.row(d)).zip(tv.row(r)) {
                                *o += g * b;
                            }
                        }
                        send(*x, dx);
                    }
                    if needs(*table) {
                        let mut dt = Tensor::zeros(tv.rows(), tv.cols());
                        for ((&s, &r), &d) in edges {
                            for ((o, g), a) in dt.row_mut(r).iter_mut().zip(dy.row(d)).zip(xv.row(s)) {
                                *o += g * a;
                            }
                        }
                        send(*table, dt);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
