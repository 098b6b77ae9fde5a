//! Wengert-list reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value and enough context to
//! compute the vector-Jacobian product. [`Tape::backward`] walks the list once
//! in reverse. Nodes are created in topological order by construction.

use std::rc::Rc;

use rand::Rng;

use super::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ScaleOnePlus(Var, Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    GatherRows(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    SegmentSum(Var, Rc<[usize]>),
    SegmentMean(Var, Rc<[usize]>, Rc<[f64]>),
    EmbeddingSum(Rc<[Var]>, Rc<[Vec<(usize, usize)>]>),
    Dropout(Var, Rc<[f64]>),
    Sum(Var),
    Mean(Var),
    Mse(Var, Rc<[f64]>),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; zeros if `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn get_slice(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable input.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_raw(t, true, Op::Leaf)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_raw(t, false, Op::Leaf)
    }

    fn push_raw(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, inputs: &[Var], op: Op) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, requires_grad, op))
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = &self.nodes[v.0].value;
        if t.shape().len() != 2 {
            return Err(mismatch(
                op,
                format!("expected a matrix, got shape {:?}", t.shape()),
            ));
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(mismatch(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    // ---- linear algebra ----

    /// `a[m,k] · b[k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", format!("[{m},{k}] · [{k2},{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(
            "matmul",
            Tensor::new(vec![m, n], out)?,
            &[a, b],
            Op::MatMul(a, b),
        )
    }

    /// `x[m,k] · w[n,k]ᵀ`: applies the map `w` to every row of `x`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (m, k) = self.matrix(x, "linear")?;
        let (n, k2) = self.matrix(w, "linear")?;
        if k != k2 {
            return Err(mismatch("linear", format!("x [{m},{k}] with w [{n},{k2}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(
            self.value(x).data(),
            self.value(w).data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(
            "linear",
            Tensor::new(vec![m, n], out)?,
            &[x, w],
            Op::Linear(x, w),
        )
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, t, &[a, b], op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let c = ta.cols();
        if tr.numel() != c {
            return Err(mismatch(
                "add_row",
                format!("{:?} + row {:?}", ta.shape(), tr.shape()),
            ));
        }
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(c.max(1)) {
            for (o, r) in chunk.iter_mut().zip(tr.data()) {
                *o += r;
            }
        }
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add_row", t, &[a, row], Op::AddRow(a, row))
    }

    /// Multiplies row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        let (r, c) = (ta.rows(), ta.cols());
        if tc.numel() != r {
            return Err(mismatch(
                "mul_col",
                format!("{:?} * col {:?}", ta.shape(), tc.shape()),
            ));
        }
        let mut data = ta.data().to_vec();
        for (i, chunk) in data.chunks_mut(c.max(1)).enumerate() {
            let s = tc.data()[i];
            chunk.iter_mut().for_each(|v| *v *= s);
        }
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("mul_col", t, &[a, col], Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|v| v * s).collect(),
        )?;
        self.push("scale", t, &[a], Op::Scale(a, s))
    }

    /// `(1 + eps) · a` for a learnable scalar `eps`.
    pub fn scale_one_plus(&mut self, a: Var, eps: Var) -> Result<Var> {
        if self.value(eps).numel() != 1 {
            return Err(mismatch(
                "scale_one_plus",
                format!("eps has shape {:?}", self.value(eps).shape()),
            ));
        }
        let s = 1.0 + self.value(eps).item();
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|v| v * s).collect(),
        )?;
        self.push("scale_one_plus", t, &[a, eps], Op::ScaleOnePlus(a, eps))
    }

    fn map(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|v| f(*v)).collect(),
        )?;
        self.push(name, t, &[a], op)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.map(
            a,
            "leaky_relu",
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    /// ELU with `alpha = 1`.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        self.map(
            a,
            "elu",
            |x| if x > 0.0 { x } else { x.exp_m1() },
            Op::Elu(a),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.matrix(a, "concat_cols")?;
        let (m2, q) = self.matrix(b, "concat_cols")?;
        if m != m2 {
            return Err(mismatch("concat_cols", format!("{m} rows vs {m2} rows")));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            data.extend_from_slice(&da[i * p..(i + 1) * p]);
            data.extend_from_slice(&db[i * q..(i + 1) * q]);
        }
        self.push(
            "concat_cols",
            Tensor::new(vec![m, p + q], data)?,
            &[a, b],
            Op::ConcatCols(a, b),
        )
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "concat_rows")?;
        let (k, n2) = self.matrix(b, "concat_rows")?;
        if n != n2 {
            return Err(mismatch("concat_rows", format!("{n} cols vs {n2} cols")));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(
            "concat_rows",
            Tensor::new(vec![m + k, n], data)?,
            &[a, b],
            Op::ConcatRows(a, b),
        )
    }

    pub fn gather_rows(&mut self, a: Var, index: impl Into<Rc<[usize]>>) -> Result<Var> {
        let index: Rc<[usize]> = index.into();
        let ta = self.value(a);
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= r {
                return Err(mismatch("gather_rows", format!("row {i} of {r}")));
            }
            data.extend_from_slice(&ta.data()[i * c..(i + 1) * c]);
        }
        let t = Tensor::new(vec![index.len(), c], data)?;
        self.push("gather_rows", t, &[a], Op::GatherRows(a, index))
    }

    // ---- segment ops (graph message passing) ----

    fn check_segments(
        seg: &[usize],
        len: usize,
        num_segments: usize,
        op: &'static str,
    ) -> Result<Vec<usize>> {
        if seg.len() != len {
            return Err(mismatch(
                op,
                format!("{len} entries but {} segment ids", seg.len()),
            ));
        }
        let mut counts = vec![0usize; num_segments];
        for &s in seg {
            if s >= num_segments {
                return Err(mismatch(op, format!("segment id {s} >= {num_segments}")));
            }
            counts[s] += 1;
        }
        Ok(counts)
    }

    /// Softmax of `logits` within each segment (e.g. incoming edges of a node).
    /// Every segment `0..num_segments` must be non-empty.
    pub fn segment_softmax(
        &mut self,
        logits: Var,
        segment_of: impl Into<Rc<[usize]>>,
        num_segments: usize,
    ) -> Result<Var> {
        let seg: Rc<[usize]> = segment_of.into();
        let tl = self.value(logits);
        let counts = Self::check_segments(&seg, tl.numel(), num_segments, "segment_softmax")?;
        if let Some(s) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptySegment(s));
        }
        let x = tl.data();
        let mut max = vec![f64::NEG_INFINITY; num_segments];
        for (v, &s) in x.iter().zip(seg.iter()) {
            max[s] = max[s].max(*v);
        }
        let mut out: Vec<f64> = x
            .iter()
            .zip(seg.iter())
            .map(|(v, &s)| (v - max[s]).exp())
            .collect();
        let mut denom = vec![0.0; num_segments];
        for (e, &s) in out.iter().zip(seg.iter()) {
            denom[s] += e;
        }
        for (e, &s) in out.iter_mut().zip(seg.iter()) {
            *e /= denom[s];
        }
        let t = Tensor::new(tl.shape().to_vec(), out)?;
        self.push(
            "segment_softmax",
            t,
            &[logits],
            Op::SegmentSoftmax(logits, seg),
        )
    }

    /// Scatter-adds row `e` of `values` into row `segment_of[e]` of the output.
    pub fn segment_sum(
        &mut self,
        values: Var,
        segment_of: impl Into<Rc<[usize]>>,
        num_segments: usize,
    ) -> Result<Var> {
        let seg: Rc<[usize]> = segment_of.into();
        let tv = self.value(values);
        let (r, c) = (tv.rows(), tv.cols());
        Self::check_segments(&seg, r, num_segments, "segment_sum")?;
        let mut out = vec![0.0; num_segments * c];
        for (e, &s) in seg.iter().enumerate() {
            let src = &tv.data()[e * c..(e + 1) * c];
            for (o, v) in out[s * c..(s + 1) * c].iter_mut().zip(src) {
                *o += v;
            }
        }
        let t = Tensor::new(vec![num_segments, c], out)?;
        self.push("segment_sum", t, &[values], Op::SegmentSum(values, seg))
    }

    /// Mean of the rows in each segment; every segment must be non-empty.
    pub fn segment_mean(
        &mut self,
        values: Var,
        segment_of: impl Into<Rc<[usize]>>,
        num_segments: usize,
    ) -> Result<Var> {
        let seg: Rc<[usize]> = segment_of.into();
        let tv = self.value(values);
        let (r, c) = (tv.rows(), tv.cols());
        let counts = Self::check_segments(&seg, r, num_segments, "segment_mean")?;
        if let Some(s) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptySegment(s));
        }
        let inv: Rc<[f64]> = counts.iter().map(|&c| 1.0 / c as f64).collect();
        let mut out = vec![0.0; num_segments * c];
        for (e, &s) in seg.iter().enumerate() {
            let src = &tv.data()[e * c..(e + 1) * c];
            for (o, v) in out[s * c..(s + 1) * c].iter_mut().zip(src) {
                *o += v * inv[s];
            }
        }
        let t = Tensor::new(vec![num_segments, c], out)?;
        self.push(
            "segment_mean",
            t,
            &[values],
            Op::SegmentMean(values, seg, inv),
        )
    }

    /// Output row `i` is the sum of `tables[t].row(r)` over `(t, r)` in `lookups[i]`.
    pub fn embedding_sum(
        &mut self,
        tables: &[Var],
        lookups: impl Into<Rc<[Vec<(usize, usize)>]>>,
    ) -> Result<Var> {
        let lookups: Rc<[Vec<(usize, usize)>]> = lookups.into();
        let d = tables.first().map_or(0, |&t| self.value(t).cols());
        for &t in tables {
            if self.value(t).cols() != d {
                return Err(mismatch("embedding_sum", "tables differ in width".into()));
            }
        }
        let mut out = vec![0.0; lookups.len() * d];
        for (i, row) in lookups.iter().enumerate() {
            let o = &mut out[i * d..(i + 1) * d];
            for &(t, r) in row {
                let table = self
                    .nodes
                    .get(
                        tables
                            .get(t)
                            .ok_or_else(|| mismatch("embedding_sum", format!("table {t}")))?
                            .0,
                    )
                    .map(|n| &n.value)
                    .expect("table var");
                if r >= table.rows() {
                    return Err(mismatch(
                        "embedding_sum",
                        format!("row {r} of table {t} with {} rows", table.rows()),
                    ));
                }
                for (ov, tv) in o.iter_mut().zip(table.row(r)) {
                    *ov += tv;
                }
            }
        }
        let t = Tensor::new(vec![lookups.len(), d], out)?;
        let tables: Rc<[Var]> = tables.into();
        let inputs = tables.to_vec();
        self.push(
            "embedding_sum",
            t,
            &inputs,
            Op::EmbeddingSum(tables, lookups),
        )
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - p)`. Identity when
    /// not training or `p == 0`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::BadProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Rc<[f64]> = (0..self.value(a).numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(x, m)| x * m)
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("dropout", t, &[a], Op::Dropout(a, mask))
    }

    // ---- reductions ----

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), &[a], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(mismatch("mean", "empty tensor".into()));
        }
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push("mean", Tensor::scalar(s), &[a], Op::Mean(a))
    }

    /// `(1/P) Σ (target_p − pred_p)²`
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let tp = self.value(pred);
        if tp.numel() != target.len() || target.is_empty() {
            return Err(Error::LengthMismatch(tp.numel(), target.len()));
        }
        let n = target.len() as f64;
        let s = tp
            .data()
            .iter()
            .zip(target)
            .map(|(p, y)| (y - p) * (y - p))
            .sum::<f64>()
            / n;
        self.push(
            "mse",
            Tensor::scalar(s),
            &[pred],
            Op::Mse(pred, target.into()),
        )
    }

    // ---- reverse pass ----

    /// Propagates d(loss)/d(node) back to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = &nodes[v.0];
            if !n.requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n.value.numel()]);
            f(buf);
        };
        let val = |v: Var| &nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (val(a).shape()[0], val(a).shape()[1]);
                let n = val(b).shape()[1];
                acc(a, &mut |ga| gemm_nt(g, val(b).data(), ga, m, n, k));
                acc(b, &mut |gb| gemm_tn(val(a).data(), g, gb, m, k, n));
            }
            &Op::Linear(x, w) => {
                let (m, k) = (val(x).shape()[0], val(x).shape()[1]);
                let n = val(w).shape()[0];
                acc(x, &mut |gx| gemm_nn(g, val(w).data(), gx, m, n, k));
                acc(w, &mut |gw| gemm_tn(g, val(x).data(), gw, m, n, k));
            }
            &Op::Add(a, b) => {
                acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, v)| *o += v));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, v)| *o += v));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, v)| *o += v));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, v)| *o -= v));
            }
            &Op::Mul(a, b) => {
                let (da, db) = (val(a).data(), val(b).data());
                acc(a, &mut |ga| {
                    for ((o, gv), y) in ga.iter_mut().zip(g).zip(db) {
                        *o += gv * y;
                    }
                });
                acc(b, &mut |gb| {
                    for ((o, gv), x) in gb.iter_mut().zip(g).zip(da) {
                        *o += gv * x;
                    }
                });
            }
            &Op::AddRow(a, row) => {
                let c = val(a).cols().max(1);
                acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, v)| *o += v));
                acc(row, &mut |gr| {
                    for chunk in g.chunks(c) {
                        gr.iter_mut().zip(chunk).for_each(|(o, v)| *o += v);
                    }
                });
            }
            &Op::MulCol(a, col) => {
                let c = val(a).cols().max(1);
                let (da, dc) = (val(a).data(), val(col).data());
                acc(a, &mut |ga| {
                    for (i, (gchunk, ochunk)) in g.chunks(c).zip(ga.chunks_mut(c)).enumerate() {
                        ochunk
                            .iter_mut()
                            .zip(gchunk)
                            .for_each(|(o, v)| *o += v * dc[i]);
                    }
                });
                acc(col, &mut |gc| {
                    for (i, (gchunk, achunk)) in g.chunks(c).zip(da.chunks(c)).enumerate() {
                        gc[i] += gchunk.iter().zip(achunk).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
            }
            &Op::Scale(a, s) => {
                acc(a, &mut |ga| {
                    ga.iter_mut().zip(g).for_each(|(o, v)| *o += v * s)
                });
            }
            &Op::ScaleOnePlus(a, eps) => {
                let s = 1.0 + val(eps).item();
                let da = val(a).data();
                acc(a, &mut |ga| {
                    ga.iter_mut().zip(g).for_each(|(o, v)| *o += v * s)
                });
                acc(eps, &mut |ge| {
                    ge[0] += g.iter().zip(da).map(|(x, y)| x * y).sum::<f64>()
                });
            }
            &Op::LeakyRelu(a, slope) => {
                let da = val(a).data();
                acc(a, &mut |ga| {
                    for ((o, gv), x) in ga.iter_mut().zip(g).zip(da) {
                        *o += if *x > 0.0 { *gv } else { slope * gv };
                    }
                });
            }
            &Op::Elu(a) => {
                let da = val(a).data();
                acc(a, &mut |ga| {
                    for ((o, gv), x) in ga.iter_mut().zip(g).zip(da) {
                        *o += if *x > 0.0 { *gv } else { gv * x.exp() };
                    }
                });
            }
            &Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(a, &mut |ga| {
                    for ((o, gv), s) in ga.iter_mut().zip(g).zip(y) {
                        *o += gv * s * (1.0 - s);
                    }
                });
            }
            &Op::ConcatCols(a, b) => {
                let (m, p) = (val(a).shape()[0], val(a).shape()[1]);
                let q = val(b).shape()[1];
                acc(a, &mut |ga| {
                    for i in 0..m {
                        let src = &g[i * (p + q)..i * (p + q) + p];
                        ga[i * p..(i + 1) * p]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(o, v)| *o += v);
                    }
                });
                acc(b, &mut |gb| {
                    for i in 0..m {
                        let src = &g[i * (p + q) + p..(i + 1) * (p + q)];
                        gb[i * q..(i + 1) * q]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(o, v)| *o += v);
                    }
                });
            }
            &Op::ConcatRows(a, b) => {
                let na = val(a).numel();
                acc(a, &mut |ga| {
                    ga.iter_mut().zip(&g[..na]).for_each(|(o, v)| *o += v)
                });
                acc(b, &mut |gb| {
                    gb.iter_mut().zip(&g[na..]).for_each(|(o, v)| *o += v)
                });
            }
            Op::GatherRows(a, index) => {
                let c = val(*a).cols();
                acc(*a, &mut |ga| {
                    for (k, &i) in index.iter().enumerate() {
                        let src = &g[k * c..(k + 1) * c];
                        ga[i * c..(i + 1) * c]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(o, v)| *o += v);
                    }
                });
            }
            Op::SegmentSoftmax(a, seg) => {
                let y = node.value.data();
                let num_segments = seg.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; num_segments];
                for ((yv, gv), &s) in y.iter().zip(g).zip(seg.iter()) {
                    dot[s] += yv * gv;
                }
                acc(*a, &mut |ga| {
                    for (e, &s) in seg.iter().enumerate() {
                        ga[e] += y[e] * (g[e] - dot[s]);
                    }
                });
            }
            Op::SegmentSum(a, seg) => {
                let c = val(*a).cols();
                acc(*a, &mut |ga| {
                    for (e, &s) in seg.iter().enumerate() {
                        let src = &g[s * c..(s + 1) * c];
                        ga[e * c..(e + 1) * c]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(o, v)| *o += v);
                    }
                });
            }
            Op::SegmentMean(a, seg, inv) => {
                let c = val(*a).cols();
                acc(*a, &mut |ga| {
                    for (e, &s) in seg.iter().enumerate() {
                        let src = &g[s * c..(s + 1) * c];
                        let w = inv[s];
                        ga[e * c..(e + 1) * c]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(o, v)| *o += v * w);
                    }
                });
            }
            Op::EmbeddingSum(tables, lookups) => {
                let d = node.value.cols();
                for (t, &table) in tables.iter().enumerate() {
                    acc(table, &mut |gt| {
                        for (i, row) in lookups.iter().enumerate() {
                            let src = &g[i * d..(i + 1) * d];
                            for &(tt, r) in row {
                                if tt == t {
                                    gt[r * d..(r + 1) * d]
                                        .iter_mut()
                                        .zip(src)
                                        .for_each(|(o, v)| *o += v);
                                }
                            }
                        }
                    });
                }
            }
            Op::Dropout(a, mask) => {
                acc(*a, &mut |ga| {
                    for ((o, gv), m) in ga.iter_mut().zip(g).zip(mask.iter()) {
                        *o += gv * m;
                    }
                });
            }
            &Op::Sum(a) => {
                acc(a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0]));
            }
            &Op::Mean(a) => {
                let n = val(a).numel() as f64;
                acc(a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::Mse(pred, target) => {
                let n = target.len() as f64;
                let dp = val(*pred).data();
                acc(*pred, &mut |gp| {
                    for ((o, p), y) in gp.iter_mut().zip(dp).zip(target.iter()) {
                        *o += g[0] * 2.0 * (p - y) / n;
                    }
                });
            }
        }
    }
}
