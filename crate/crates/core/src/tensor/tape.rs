//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as a node holding its output value and
//! the ids of its inputs. Nodes are appended in evaluation order, so the node
//! list is already a topological order and backward simply walks it in
//! reverse. Index arguments (gathers, scatters, segment ids) are frozen into
//! the node, which lets [`Tape::replay`] recompute every value after leaves
//! are overwritten. Finite-difference checks use this to perturb one entry
//! and re-evaluate without rebuilding the graph.

use std::collections::BTreeMap;

use super::matrix::{softmax_in_place, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Relu(Var),
    RowSoftmax(Var),
    /// Column-wise softmax within groups of rows.
    SegmentSoftmax {
        input: Var,
        groups: Vec<Vec<usize>>,
    },
    GatherRows {
        input: Var,
        index: Vec<usize>,
    },
    ScatterAddRows {
        input: Var,
        index: Vec<usize>,
        rows: usize,
    },
    AddRowsAt {
        base: Var,
        update: Var,
        index: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    MeanRows {
        input: Var,
        groups: Vec<Vec<usize>>,
    },
    TypedMatMul {
        input: Var,
        types: Vec<usize>,
        weights: Vec<Var>,
        heads: usize,
    },
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        mask: Vec<bool>,
        target: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// A trainable leaf: gradients flow into it.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, true)
    }

    /// A constant leaf: no gradient is accumulated for it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    /// Overwrites a leaf value. Call [`Tape::replay`] afterwards to refresh
    /// downstream nodes.
    pub fn set_leaf(&mut self, var: Var, value: Matrix) -> Result<()> {
        let node = &mut self.nodes[var.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::Contract(format!("node {} is not a leaf", var.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_leaf",
                lhs: node.value.shape(),
                rhs: value.shape(),
            });
        }
        node.value = value;
        Ok(())
    }

    /// Recomputes every non-leaf node from the current leaf values.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = eval(&self.nodes[i].op, &self.nodes)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.record(Op::Scale(a, factor))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowSoftmax(a))
    }

    /// Softmax down each column, independently within each group of rows
    /// sharing a segment id. Rows whose segment id appears once get weight 1.
    pub fn segment_softmax(&mut self, input: Var, segment_ids: &[usize]) -> Result<Var> {
        let rows = self.value(input).rows();
        if segment_ids.len() != rows {
            return Err(Error::Shape {
                op: "segment_softmax",
                lhs: self.value(input).shape(),
                rhs: (segment_ids.len(), 1),
            });
        }
        let mut by_segment: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (row, &seg) in segment_ids.iter().enumerate() {
            by_segment.entry(seg).or_default().push(row);
        }
        self.record(Op::SegmentSoftmax {
            input,
            groups: by_segment.into_values().collect(),
        })
    }

    pub fn gather_rows(&mut self, input: Var, index: &[usize]) -> Result<Var> {
        self.record(Op::GatherRows {
            input,
            index: index.to_vec(),
        })
    }

    /// `out[index[i]] += input[i]` into a zero matrix with `rows` rows.
    pub fn scatter_add_rows(&mut self, input: Var, index: &[usize], rows: usize) -> Result<Var> {
        self.record(Op::ScatterAddRows {
            input,
            index: index.to_vec(),
            rows,
        })
    }

    /// Copy of `base` with `update[i]` added onto row `index[i]`; rows not
    /// named in `index` are copied bit for bit.
    pub fn add_rows_at(&mut self, base: Var, update: Var, index: &[usize]) -> Result<Var> {
        self.record(Op::AddRowsAt {
            base,
            update,
            index: index.to_vec(),
        })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        self.record(Op::ConcatRows(parts.to_vec()))
    }

    /// Row `i` of the output is the mean of input rows `groups[i]`.
    pub fn mean_rows(&mut self, input: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        self.record(Op::MeanRows { input, groups })
    }

    /// Per-row choice of weight matrix, split into `heads` column blocks.
    ///
    /// With input `n × (heads·a)` and every weight `(heads·a) × b`, output
    /// row `i`, block `k` is `input[i, k-block] · weights[types[i]][k-block rows]`.
    /// `heads = 1` is an ordinary per-row typed linear map.
    pub fn typed_matmul(
        &mut self,
        input: Var,
        types: &[usize],
        weights: &[Var],
        heads: usize,
    ) -> Result<Var> {
        self.record(Op::TypedMatMul {
            input,
            types: types.to_vec(),
            weights: weights.to_vec(),
            heads,
        })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Mean(a))
    }

    /// `-log softmax(logits)[target]` over the positions where `mask` is set.
    /// `logits` must be a single row or a single column.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        mask: &[bool],
        target: usize,
    ) -> Result<Var> {
        self.record(Op::SoftmaxCrossEntropy {
            logits,
            mask: mask.to_vec(),
            target,
        })
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = eval(&op, &self.nodes)?;
        let requires_grad = inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// depends on a trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &upstream, &mut grads)?;
            }
            grads[i] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, contribution: Matrix| accumulate(grads, v, contribution);

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, g.matmul(&val(*b).transpose())?)?;
                }
                if wants(*b) {
                    acc(*b, val(*a).transpose().matmul(g)?)?;
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone())?;
                }
                if wants(*b) {
                    acc(*b, g.clone())?;
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.hadamard(val(*b))?)?;
                }
                if wants(*b) {
                    acc(*b, g.hadamard(val(*a))?)?;
                }
            }
            Op::Scale(a, factor) => acc(*a, g.scale(*factor))?,
            Op::Exp(a) => acc(*a, g.hadamard(&node.value)?)?,
            Op::Relu(a) => {
                let x = val(*a);
                let mut d = g.clone();
                for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= 0.0 {
                        *dv = 0.0;
                    }
                }
                acc(*a, d)?;
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                    for c in 0..y.cols() {
                        d[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                    }
                }
                acc(*a, d)?;
            }
            Op::SegmentSoftmax { input, groups } => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for group in groups {
                    for c in 0..y.cols() {
                        let dot: f64 = group.iter().map(|&r| y[(r, c)] * g[(r, c)]).sum();
                        for &r in group {
                            d[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                }
                acc(*input, d)?;
            }
            Op::GatherRows { input, index } => {
                let src = val(*input);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (i, &r) in index.iter().enumerate() {
                    for (o, v) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(*input, d)?;
            }
            Op::ScatterAddRows { input, index, .. } => {
                let src = val(*input);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (i, &r) in index.iter().enumerate() {
                    d.row_mut(i).copy_from_slice(g.row(r));
                }
                acc(*input, d)?;
            }
            Op::AddRowsAt {
                base,
                update,
                index,
            } => {
                if wants(*base) {
                    acc(*base, g.clone())?;
                }
                if wants(*update) {
                    let u = val(*update);
                    let mut d = Matrix::zeros(u.rows(), u.cols());
                    for (i, &r) in index.iter().enumerate() {
                        d.row_mut(i).copy_from_slice(g.row(r));
                    }
                    acc(*update, d)?;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = val(p).shape();
                    if wants(p) {
                        let slice = g.as_slice()[offset * cols..(offset + rows) * cols].to_vec();
                        acc(p, Matrix::from_vec(rows, cols, slice)?)?;
                    }
                    offset += rows;
                }
            }
            Op::MeanRows { input, groups } => {
                let src = val(*input);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (i, group) in groups.iter().enumerate() {
                    let w = 1.0 / group.len() as f64;
                    for &r in group {
                        for (o, v) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v * w;
                        }
                    }
                }
                acc(*input, d)?;
            }
            Op::TypedMatMul {
                input,
                types,
                weights,
                heads,
            } => {
                let x = val(*input);
                let a = x.cols() / heads;
                let b = val(weights[0]).cols();
                if wants(*input) {
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    for (i, &t) in types.iter().enumerate() {
                        let w = val(weights[t]);
                        for k in 0..*heads {
                            for p in 0..a {
                                let w_row = w.row(k * a + p);
                                let g_blk = &g.row(i)[k * b..(k + 1) * b];
                                dx[(i, k * a + p)] += dot(w_row, g_blk);
                            }
                        }
                    }
                    acc(*input, dx)?;
                }
                let mut dws: Vec<Option<Matrix>> = vec![None; weights.len()];
                for (i, &t) in types.iter().enumerate() {
                    if !wants(weights[t]) {
                        continue;
                    }
                    let w = val(weights[t]);
                    let dw = dws[t].get_or_insert_with(|| Matrix::zeros(w.rows(), w.cols()));
                    for k in 0..*heads {
                        let g_blk = &g.row(i)[k * b..(k + 1) * b];
                        for p in 0..a {
                            let xv = x[(i, k * a + p)];
                            if xv == 0.0 {
                                continue;
                            }
                            for (o, gv) in dw.row_mut(k * a + p).iter_mut().zip(g_blk) {
                                *o += xv * gv;
                            }
                        }
                    }
                }
                for (t, dw) in dws.into_iter().enumerate() {
                    if let Some(dw) = dw {
                        acc(weights[t], dw)?;
                    }
                }
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g[(0, 0)]))?;
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g[(0, 0)] / (r * c) as f64))?;
            }
            Op::SoftmaxCrossEntropy {
                logits,
                mask,
                target,
            } => {
                let x = val(*logits);
                let probs = masked_softmax(x.as_slice(), mask);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for (i, p) in probs.iter().enumerate() {
                    let onehot = if i == *target { 1.0 } else { 0.0 };
                    d.as_mut_slice()[i] = g[(0, 0)] * (p - onehot);
                }
                acc(*logits, d)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], var: Var, contribution: Matrix) -> Result<()> {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => {
            *slot = Some(contribution);
            Ok(())
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut xs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { v } else { f64::NEG_INFINITY })
        .collect();
    softmax_in_place(&mut xs);
    xs
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::Exp(a)
        | Op::Relu(a)
        | Op::RowSoftmax(a)
        | Op::Sum(a)
        | Op::Mean(a) => {
            vec![*a]
        }
        Op::SegmentSoftmax { input, .. }
        | Op::GatherRows { input, .. }
        | Op::ScatterAddRows { input, .. }
        | Op::MeanRows { input, .. } => vec![*input],
        Op::AddRowsAt { base, update, .. } => vec![*base, *update],
        Op::ConcatRows(parts) => parts.clone(),
        Op::TypedMatMul { input, weights, .. } => {
            let mut v = vec![*input];
            v.extend(weights);
            v
        }
        Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
    }
}

fn check_rows(op: &'static str, index: &[usize], rows: usize, cols: usize) -> Result<()> {
    match index.iter().find(|&&r| r >= rows) {
        Some(&bad) => Err(Error::Shape {
            op,
            lhs: (rows, cols),
            rhs: (bad, 0),
        }),
        None => Ok(()),
    }
}

fn eval(op: &Op, nodes: &[Node]) -> Result<Matrix> {
    let val = |v: &Var| &nodes[v.0].value;
    Ok(match op {
        Op::Leaf => unreachable!("leaves are never evaluated"),
        Op::MatMul(a, b) => val(a).matmul(val(b))?,
        Op::Add(a, b) => val(a).add(val(b))?,
        Op::Mul(a, b) => val(a).hadamard(val(b))?,
        Op::Scale(a, f) => val(a).scale(*f),
        Op::Exp(a) => val(a).map(f64::exp),
        Op::Relu(a) => val(a).map(|v| if v > 0.0 { v } else { 0.0 }),
        Op::RowSoftmax(a) => {
            let x = val(a);
            if x.cols() == 0 && x.rows() > 0 {
                return Err(Error::Contract("row_softmax over empty rows".into()));
            }
            x.row_softmax()
        }
        Op::SegmentSoftmax { input, groups } => {
            let x = val(input);
            let mut out = x.clone();
            let mut buf = Vec::new();
            for group in groups {
                for c in 0..x.cols() {
                    buf.clear();
                    buf.extend(group.iter().map(|&r| x[(r, c)]));
                    softmax_in_place(&mut buf);
                    for (&r, &p) in group.iter().zip(&buf) {
                        out[(r, c)] = p;
                    }
                }
            }
            out
        }
        Op::GatherRows { input, index } => {
            let x = val(input);
            check_rows("gather_rows", index, x.rows(), x.cols())?;
            let mut out = Matrix::zeros(index.len(), x.cols());
            for (i, &r) in index.iter().enumerate() {
                out.row_mut(i).copy_from_slice(x.row(r));
            }
            out
        }
        Op::ScatterAddRows { input, index, rows } => {
            let x = val(input);
            if index.len() != x.rows() {
                return Err(Error::Shape {
                    op: "scatter_add_rows",
                    lhs: x.shape(),
                    rhs: (index.len(), 1),
                });
            }
            check_rows("scatter_add_rows", index, *rows, x.cols())?;
            let mut out = Matrix::zeros(*rows, x.cols());
            for (i, &r) in index.iter().enumerate() {
                for (o, v) in out.row_mut(r).iter_mut().zip(x.row(i)) {
                    *o += v;
                }
            }
            out
        }
        Op::AddRowsAt {
            base,
            update,
            index,
        } => {
            let (b, u) = (val(base), val(update));
            if u.cols() != b.cols() || u.rows() != index.len() {
                return Err(Error::Shape {
                    op: "add_rows_at",
                    lhs: b.shape(),
                    rhs: u.shape(),
                });
            }
            check_rows("add_rows_at", index, b.rows(), b.cols())?;
            let mut out = b.clone();
            for (i, &r) in index.iter().enumerate() {
                for (o, v) in out.row_mut(r).iter_mut().zip(u.row(i)) {
                    *o += v;
                }
            }
            out
        }
        Op::ConcatRows(parts) => {
            let cols = parts.first().map_or(0, |p| val(p).cols());
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let m = val(p);
                if m.cols() != cols {
                    return Err(Error::Shape {
                        op: "concat_rows",
                        lhs: (rows, cols),
                        rhs: m.shape(),
                    });
                }
                data.extend_from_slice(m.as_slice());
                rows += m.rows();
            }
            Matrix::from_vec(rows, cols, data)?
        }
        Op::MeanRows { input, groups } => {
            let x = val(input);
            let mut out = Matrix::zeros(groups.len(), x.cols());
            for (i, group) in groups.iter().enumerate() {
                if group.is_empty() {
                    return Err(Error::Contract(format!("mean_rows: group {i} is empty")));
                }
                check_rows("mean_rows", group, x.rows(), x.cols())?;
                if let [only] = group.as_slice() {
                    out.row_mut(i).copy_from_slice(x.row(*only));
                    continue;
                }
                let w = group.len() as f64;
                for c in 0..x.cols() {
                    let s: f64 = group.iter().map(|&r| x[(r, c)]).sum();
                    out[(i, c)] = s / w;
                }
            }
            out
        }
        Op::TypedMatMul {
            input,
            types,
            weights,
            heads,
        } => {
            let x = val(input);
            if weights.is_empty() || *heads == 0 || x.cols() % heads != 0 || types.len() != x.rows()
            {
                return Err(Error::Shape {
                    op: "typed_matmul",
                    lhs: x.shape(),
                    rhs: (types.len(), *heads),
                });
            }
            let b = val(&weights[0]).cols();
            for w in weights {
                if val(w).rows() != x.cols() || val(w).cols() != b {
                    return Err(Error::Shape {
                        op: "typed_matmul",
                        lhs: x.shape(),
                        rhs: val(w).shape(),
                    });
                }
            }
            if let Some(&bad) = types.iter().find(|&&t| t >= weights.len()) {
                return Err(Error::Contract(format!(
                    "typed_matmul: type {bad} has no weight ({} given)",
                    weights.len()
                )));
            }
            let a = x.cols() / heads;
            let mut out = Matrix::zeros(x.rows(), heads * b);
            for (i, &t) in types.iter().enumerate() {
                let w = val(&weights[t]);
                for k in 0..*heads {
                    for p in 0..a {
                        let xv = x[(i, k * a + p)];
                        if xv == 0.0 {
                            continue;
                        }
                        let w_row = w.row(k * a + p);
                        let o = &mut out.row_mut(i)[k * b..(k + 1) * b];
                        for (ov, wv) in o.iter_mut().zip(w_row) {
                            *ov += xv * wv;
                        }
                    }
                }
            }
            out
        }
        Op::Sum(a) => Matrix::filled(1, 1, val(a).sum()),
        Op::Mean(a) => {
            let m = val(a);
            if m.is_empty() {
                return Err(Error::Contract("mean of an empty matrix".into()));
            }
            Matrix::filled(1, 1, m.sum() / m.len() as f64)
        }
        Op::SoftmaxCrossEntropy {
            logits,
            mask,
            target,
        } => {
            let x = val(logits);
            if x.rows() != 1 && x.cols() != 1 {
                return Err(Error::Shape {
                    op: "softmax_cross_entropy",
                    lhs: x.shape(),
                    rhs: (mask.len(), 1),
                });
            }
            if mask.len() != x.len() {
                return Err(Error::Shape {
                    op: "softmax_cross_entropy",
                    lhs: x.shape(),
                    rhs: (mask.len(), 1),
                });
            }
            if !mask.get(*target).copied().unwrap_or(false) {
                return Err(Error::Contract(format!(
                    "target position {target} is not eligible under the mask"
                )));
            }
            let xs = x.as_slice();
            let max = xs
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + xs.iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| (v - max).exp())
                    .sum::<f64>()
                    .ln();
            Matrix::filled(1, 1, lse - xs[*target])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let s = tape.sum(a).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap(), &Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn matmul_sum_gradient_identity() {
        let mut tape = Tape::new();
        let a_val = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]);
        let b_val = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 0.0], vec![4.0, 0.5]]);
        let a = tape.param(a_val.clone());
        let b = tape.param(b_val.clone());
        let p = tape.matmul(a, b).unwrap();
        let s = tape.sum(p).unwrap();
        let grads = tape.backward(s).unwrap();
        let expected_a = Matrix::filled(2, 2, 1.0)
            .matmul(&b_val.transpose())
            .unwrap();
        let expected_b = a_val
            .transpose()
            .matmul(&Matrix::filled(2, 2, 1.0))
            .unwrap();
        assert_eq!(grads.get(a).unwrap(), &expected_a);
        assert_eq!(grads.get(b).unwrap(), &expected_b);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::zeros(2, 2));
        assert!(matches!(tape.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::filled(1, 2, 1.0));
        let c = tape.constant(Matrix::filled(1, 2, 3.0));
        let m = tape.mul(a, c).unwrap();
        let s = tape.sum(m).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().as_slice(), &[3.0, 3.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn add_rows_at_leaves_other_rows_untouched() {
        let mut tape = Tape::new();
        let base = tape.constant(Matrix::from_rows(&[vec![-0.0, 1.0], vec![2.0, 3.0]]));
        let upd = tape.constant(Matrix::from_rows(&[vec![0.0, 0.0]]));
        let out = tape.add_rows_at(base, upd, &[1]).unwrap();
        assert_eq!(tape.value(out)[(0, 0)].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn segment_softmax_singleton_is_one() {
        let mut tape = Tape::new();
        let s = tape.constant(Matrix::from_rows(&[
            vec![5.0, -3.0],
            vec![1.0, 2.0],
            vec![0.0, 0.0],
        ]));
        let a = tape.segment_softmax(s, &[0, 1, 1]).unwrap();
        let v = tape.value(a);
        assert_eq!(v.row(0), &[1.0, 1.0]);
        assert!((v[(1, 0)] + v[(2, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_rejects_masked_target() {
        let mut tape = Tape::new();
        let l = tape.param(Matrix::zeros(3, 1));
        assert!(matches!(
            tape.softmax_cross_entropy(l, &[true, false, true], 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn replay_after_set_leaf() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::filled(1, 1, 2.0));
        let e = tape.exp(a).unwrap();
        tape.set_leaf(a, Matrix::filled(1, 1, 0.0)).unwrap();
        tape.replay().unwrap();
        assert_eq!(tape.value(e).scalar(), Some(1.0));
    }
}
