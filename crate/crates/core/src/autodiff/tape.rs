//! Reverse-mode AD over matrix-valued nodes.
//!
//! A [`Tape`] records operations in creation order, which is a topological
//! order of the computation graph; [`Tape::backward`] walks it once in
//! reverse. Nodes that cannot reach a parameter are not differentiated.

use std::cell::RefCell;
use std::sync::Arc;

use super::matrix::{matmul_nt_into, matmul_overwrite, matmul_tn_into, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction applied to each contiguous row segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentReduce {
    Sum,
    Mean,
    /// Population standard deviation; derivative taken as 0 where it vanishes.
    Std,
    /// Ties route the gradient to the first attaining row.
    Min,
    Max,
}

/// Row partition: segment `s` covers rows `offsets[s]..offsets[s + 1]`.
#[derive(Debug, Clone)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    pub fn new(offsets: Vec<usize>) -> Self {
        assert!(!offsets.is_empty() && offsets[0] == 0, "offsets must start at 0");
        assert!(
            offsets.windows(2).all(|w| w[0] <= w[1]),
            "offsets must be non-decreasing"
        );
        Self { offsets }
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_rows(&self) -> usize {
        *self.offsets.last().expect("non-empty")
    }

    #[inline]
    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a (r×c) + b (1×c)` with `b` broadcast over rows.
    AddRow(Var, Var),
    /// Each row `r` multiplied by a constant `factors[r]`.
    ScaleRows(Var, Arc<[f64]>),
    Scale(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Gather(Var, Arc<[usize]>),
    Segment(Var, Arc<Segments>, SegmentReduce, Arc<[usize]>),
    /// All five reductions at once, optionally with degree scalers; the
    /// vectors hold the arg-min and arg-max rows per (segment, column).
    MultiAggregate(Var, Arc<Segments>, Option<DegreeScalers>, Arc<[usize]>, Arc<[usize]>),
    /// `σ(a[targets[e]] + b[sources[e]] + bias)` for every edge slot `e`.
    EdgeSigmoid {
        a: Var,
        b: Var,
        bias: Var,
        targets: Arc<[usize]>,
        sources: Arc<[usize]>,
    },
}

/// Per-segment amplification and attenuation factors.
pub type DegreeScalers = (Arc<[f64]>, Arc<[f64]>);

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Recycled buffers, so that re-recording the same computation every
/// training step does not go back to the allocator.
#[derive(Default)]
struct Pool {
    free: Vec<Vec<f64>>,
}

const POOL_LIMIT: usize = 512;

impl Pool {
    /// Smallest free buffer holding at least `len` values.
    fn best_fit(&mut self, len: usize) -> Option<Vec<f64>> {
        let k = (0..self.free.len())
            .filter(|&k| self.free[k].capacity() >= len)
            .min_by_key(|&k| self.free[k].capacity())?;
        Some(self.free.swap_remove(k))
    }

    fn zeros(&mut self, rows: usize, cols: usize) -> Matrix {
        let len = rows * cols;
        let data = match self.best_fit(len) {
            Some(mut v) => {
                v.clear();
                v.resize(len, 0.0);
                v
            }
            None => vec![0.0; len],
        };
        Matrix::from_vec(rows, cols, data)
    }

    /// Buffer of the given shape with unspecified contents; for outputs
    /// that are overwritten entirely.
    fn scratch(&mut self, rows: usize, cols: usize) -> Matrix {
        let len = rows * cols;
        match self.free.iter().position(|v| v.len() == len) {
            Some(k) => Matrix::from_vec(rows, cols, self.free.swap_remove(k)),
            None => self.zeros(rows, cols),
        }
    }

    fn give(&mut self, m: Matrix) {
        if m.data.capacity() >= 64 && self.free.len() < POOL_LIMIT {
            self.free.push(m.data);
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    pool: RefCell<Pool>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        self.grads[v.0].clone().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Matrix::zeros(r, c)
        })
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        self.grads[v.0].take().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Matrix::zeros(r, c)
        })
    }
}

fn check(cond: bool, what: &str) {
    assert!(cond, "shape mismatch: {what}");
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Forgets all nodes, keeping their buffers for reuse by later records.
    pub fn clear(&mut self) {
        let pool = self.pool.get_mut();
        for node in self.nodes.drain(..) {
            pool.give(node.value);
        }
    }

    /// Returns gradient buffers to the tape's pool.
    pub fn recycle(&mut self, grads: Gradients) {
        let pool = self.pool.get_mut();
        for g in grads.grads.into_iter().flatten() {
            pool.give(g);
        }
    }

    fn zeros(&self, rows: usize, cols: usize) -> Matrix {
        self.pool.borrow_mut().zeros(rows, cols)
    }

    fn scratch(&self, rows: usize, cols: usize) -> Matrix {
        self.pool.borrow_mut().scratch(rows, cols)
    }

    fn copy_of(&self, v: Var) -> Matrix {
        let src = self.value(v);
        let mut out = self.scratch(src.rows, src.cols);
        out.data.copy_from_slice(&src.data);
        out
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
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

    /// Differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// [`Tape::param`] or [`Tape::constant`] of a copy of `value`, stored in
    /// a recycled buffer.
    pub fn leaf_copy(&mut self, value: &Matrix, requires_grad: bool) -> Var {
        let mut m = self.scratch(value.rows, value.cols);
        m.data.copy_from_slice(&value.data);
        self.push(m, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        check(av.cols == bv.rows, "matmul inner dimensions");
        let mut out = self.scratch(av.rows, bv.cols);
        matmul_overwrite(self.value(a), self.value(b), &mut out);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        check(av.shape() == bv.shape(), "elementwise operands");
        let mut out = self.scratch(av.rows, av.cols);
        let (av, bv) = (self.value(a), self.value(b));
        for ((o, &x), &y) in out.data.iter_mut().zip(&av.data).zip(&bv.data) {
            *o = f(x, y);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the row vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        check(bv.rows == 1 && bv.cols == av.cols, "broadcast row");
        let mut out = self.copy_of(a);
        let bv = self.value(b);
        for r in 0..out.rows {
            for (o, &x) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *o += x;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::AddRow(a, b), rg)
    }

    pub fn scale_rows(&mut self, a: Var, factors: Arc<[f64]>) -> Var {
        let av = self.value(a);
        check(factors.len() == av.rows, "row factors");
        let mut out = self.copy_of(a);
        for (r, &f) in factors.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        let rg = self.rg(a);
        self.push(out, Op::ScaleRows(a, factors), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.copy_of(a);
        out.data.iter_mut().for_each(|v| *v *= factor);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let mut out = self.copy_of(a);
        out.data.iter_mut().for_each(|v| *v = f(*v));
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    /// `log(1 + exp(a))`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).data.iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        check(!av.is_empty(), "mean of an empty matrix");
        let out = Matrix::scalar(av.data.iter().sum::<f64>() / av.len() as f64);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        check(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows;
        check(parts.iter().all(|&p| self.value(p).rows == rows), "concat row counts");
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = self.scratch(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let pv = self.value(p);
                out.data[r * cols + offset..r * cols + offset + pv.cols].copy_from_slice(pv.row(r));
                offset += pv.cols;
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::Concat(parts.to_vec()), rg)
    }

    /// Row `k` of the result is row `index[k]` of `a`.
    pub fn gather(&mut self, a: Var, index: Arc<[usize]>) -> Var {
        let av = self.value(a);
        let mut out = self.scratch(index.len(), av.cols);
        let av = self.value(a);
        for (k, &src) in index.iter().enumerate() {
            check(src < av.rows, "gather index");
            out.row_mut(k).copy_from_slice(av.row(src));
        }
        let rg = self.rg(a);
        self.push(out, Op::Gather(a, index), rg)
    }

    /// Column-wise reduction of each row segment; empty segments give zeros.
    pub fn segment(&mut self, a: Var, segments: Arc<Segments>, reduce: SegmentReduce) -> Var {
        let av = self.value(a);
        check(segments.total_rows() == av.rows, "segment rows");
        let cols = av.cols;
        let mut out = self.zeros(segments.count(), cols);
        let av = self.value(a);
        // for min/max: row attaining the extreme, per (segment, column)
        let mut arg = Vec::new();
        if matches!(reduce, SegmentReduce::Min | SegmentReduce::Max) {
            arg = vec![usize::MAX; segments.count() * cols];
        }
        for s in 0..segments.count() {
            let range = segments.range(s);
            let k = range.len();
            if k == 0 {
                continue;
            }
            for c in 0..cols {
                let col = range.clone().map(|r| av.data[r * cols + c]);
                let v = match reduce {
                    SegmentReduce::Sum => col.sum(),
                    SegmentReduce::Mean => col.sum::<f64>() / k as f64,
                    SegmentReduce::Std => {
                        let m = col.clone().sum::<f64>() / k as f64;
                        let var = col.map(|x| (x - m) * (x - m)).sum::<f64>() / k as f64;
                        var.max(0.0).sqrt()
                    }
                    SegmentReduce::Min | SegmentReduce::Max => {
                        let mut best_row = range.start;
                        let mut best = av.data[best_row * cols + c];
                        for r in range.clone().skip(1) {
                            let x = av.data[r * cols + c];
                            let better = if reduce == SegmentReduce::Min {
                                x < best
                            } else {
                                x > best
                            };
                            if better {
                                best = x;
                                best_row = r;
                            }
                        }
                        arg[s * cols + c] = best_row;
                        best
                    }
                };
                out.data[s * cols + c] = v;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::Segment(a, segments, reduce, arg.into()), rg)
    }

    /// `[mean, std, sum, min, max]` of each row segment (five blocks of the
    /// input's width), followed, when `scalers` is given, by the same five
    /// blocks multiplied by the segment's amplification factor and by its
    /// attenuation factor. Equivalent to five [`Tape::segment`] calls, the
    /// row scalings and a concatenation, in one pass.
    pub fn multi_aggregate(&mut self, a: Var, segments: Arc<Segments>, scalers: Option<DegreeScalers>) -> Var {
        let av = self.value(a);
        check(segments.total_rows() == av.rows, "segment rows");
        if let Some((amp, att)) = &scalers {
            check(
                amp.len() == segments.count() && att.len() == segments.count(),
                "scaler lengths",
            );
        }
        let m = av.cols;
        let blocks = if scalers.is_some() { 15 } else { 5 };
        let width = blocks * m;
        let mut out = self.scratch(segments.count(), width);
        let av = self.value(a);
        let mut arg_min = vec![0usize; segments.count() * m];
        let mut arg_max = vec![0usize; segments.count() * m];
        for s in 0..segments.count() {
            let range = segments.range(s);
            let k = range.len();
            let row = &mut out.data[s * width..(s + 1) * width];
            if k == 0 {
                row.fill(0.0);
                continue;
            }
            let (basic, scaled) = row.split_at_mut(5 * m);
            let (mean, rest) = basic.split_at_mut(m);
            let (sd, rest) = rest.split_at_mut(m);
            let (sum, rest) = rest.split_at_mut(m);
            let (lo, hi) = rest.split_at_mut(m);
            let amin = &mut arg_min[s * m..(s + 1) * m];
            let amax = &mut arg_max[s * m..(s + 1) * m];
            let first = av.row(range.start);
            sum.copy_from_slice(first);
            lo.copy_from_slice(first);
            hi.copy_from_slice(first);
            amin.fill(range.start);
            amax.fill(range.start);
            for r in range.start + 1..range.end {
                for (c, &x) in av.row(r).iter().enumerate() {
                    sum[c] += x;
                    if x < lo[c] {
                        lo[c] = x;
                        amin[c] = r;
                    }
                    if x > hi[c] {
                        hi[c] = x;
                        amax[c] = r;
                    }
                }
            }
            let inv = 1.0 / k as f64;
            for (mu, &t) in mean.iter_mut().zip(sum.iter()) {
                *mu = t * inv;
            }
            sd.fill(0.0);
            for r in range {
                for ((v, &x), &mu) in sd.iter_mut().zip(av.row(r)).zip(mean.iter()) {
                    *v += (x - mu) * (x - mu);
                }
            }
            for v in sd.iter_mut() {
                *v = (*v * inv).max(0.0).sqrt();
            }
            if let Some((amp, att)) = &scalers {
                let (up, down) = scaled.split_at_mut(5 * m);
                for ((u, d), &b) in up.iter_mut().zip(down.iter_mut()).zip(basic.iter()) {
                    *u = b * amp[s];
                    *d = b * att[s];
                }
            }
        }
        let rg = self.rg(a);
        self.push(
            out,
            Op::MultiAggregate(a, segments, scalers, arg_min.into(), arg_max.into()),
            rg,
        )
    }

    /// Row `e` of the result is `σ(a[targets[e]] + b[sources[e]] + bias)`:
    /// the composition of two gathers, an addition, a broadcast row and a
    /// sigmoid, recorded as one node.
    pub fn edge_sigmoid(&mut self, a: Var, b: Var, bias: Var, targets: Arc<[usize]>, sources: Arc<[usize]>) -> Var {
        let (av, bv, cv) = (self.value(a), self.value(b), self.value(bias));
        check(
            av.cols == bv.cols && cv.rows == 1 && cv.cols == av.cols,
            "edge operand widths",
        );
        check(targets.len() == sources.len(), "edge index lengths");
        check(
            targets.iter().all(|&t| t < av.rows) && sources.iter().all(|&s| s < bv.rows),
            "edge index",
        );
        let m = av.cols;
        let mut out = self.scratch(targets.len(), m);
        let (av, bv, cv) = (self.value(a), self.value(b), self.value(bias));
        for (e, row) in out.data.chunks_exact_mut(m.max(1)).enumerate().take(targets.len()) {
            let (ra, rb) = (av.row(targets[e]), bv.row(sources[e]));
            for c in 0..m {
                row[c] = sigmoid(ra[c] + rb[c] + cv.data[c]);
            }
        }
        let rg = self.rg(a) || self.rg(b) || self.rg(bias);
        self.push(
            out,
            Op::EdgeSigmoid {
                a,
                b,
                bias,
                targets,
                sources,
            },
            rg,
        )
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        check(self.value(loss).len() == 1, "backward from a non-scalar");
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads, shapes }
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut Matrix)| {
            let slot = grads[v.0].get_or_insert_with(|| {
                let (r, c) = nodes[v.0].value.shape();
                self.zeros(r, c)
            });
            f(slot);
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    let bv = &nodes[b.0].value;
                    acc(*a, &mut |s| matmul_nt_into(g, bv, s));
                }
                if wants(*b) {
                    let av = &nodes[a.0].value;
                    acc(*b, &mut |s| matmul_tn_into(av, g, s));
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        acc(v, &mut |s| s.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x += y));
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, &mut |s| s.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x += y));
                }
                if wants(*b) {
                    acc(*b, &mut |s| s.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x -= y));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if wants(*a) {
                    acc(*a, &mut |s| {
                        for ((x, gy), w) in s.data.iter_mut().zip(&g.data).zip(&bv.data) {
                            *x += gy * w;
                        }
                    });
                }
                if wants(*b) {
                    acc(*b, &mut |s| {
                        for ((x, gy), w) in s.data.iter_mut().zip(&g.data).zip(&av.data) {
                            *x += gy * w;
                        }
                    });
                }
            }
            Op::AddRow(a, b) => {
                if wants(*a) {
                    acc(*a, &mut |s| s.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x += y));
                }
                if wants(*b) {
                    acc(*b, &mut |s| {
                        for r in 0..g.rows {
                            for (x, y) in s.data.iter_mut().zip(g.row(r)) {
                                *x += y;
                            }
                        }
                    });
                }
            }
            Op::ScaleRows(a, factors) => {
                acc(*a, &mut |s| {
                    for (r, &f) in factors.iter().enumerate() {
                        for (x, y) in s.row_mut(r).iter_mut().zip(g.row(r)) {
                            *x += f * y;
                        }
                    }
                });
            }
            Op::Scale(a, f) => {
                acc(*a, &mut |s| {
                    s.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x += f * y)
                });
            }
            Op::Sigmoid(a) => {
                let out = &node.value;
                acc(*a, &mut |s| {
                    for ((x, gy), o) in s.data.iter_mut().zip(&g.data).zip(&out.data) {
                        *x += gy * o * (1.0 - o);
                    }
                });
            }
            Op::Exp(a) => {
                let out = &node.value;
                acc(*a, &mut |s| {
                    for ((x, gy), o) in s.data.iter_mut().zip(&g.data).zip(&out.data) {
                        *x += gy * o;
                    }
                });
            }
            Op::Log(a) => {
                let av = &nodes[a.0].value;
                acc(*a, &mut |s| {
                    for ((x, gy), v) in s.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *x += gy / v;
                    }
                });
            }
            Op::Softplus(a) => {
                let av = &nodes[a.0].value;
                acc(*a, &mut |s| {
                    for ((x, gy), v) in s.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *x += gy * sigmoid(*v);
                    }
                });
            }
            Op::Sum(a) => {
                let gy = g.item();
                acc(*a, &mut |s| s.data.iter_mut().for_each(|x| *x += gy));
            }
            Op::Mean(a) => {
                let gy = g.item() / nodes[a.0].value.len() as f64;
                acc(*a, &mut |s| s.data.iter_mut().for_each(|x| *x += gy));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = nodes[p.0].value.cols;
                    if wants(p) {
                        acc(p, &mut |s| {
                            for r in 0..g.rows {
                                let src = &g.row(r)[offset..offset + pc];
                                for (x, y) in s.row_mut(r).iter_mut().zip(src) {
                                    *x += y;
                                }
                            }
                        });
                    }
                    offset += pc;
                }
            }
            Op::Gather(a, index) => {
                acc(*a, &mut |s| {
                    for (k, &src) in index.iter().enumerate() {
                        for (x, y) in s.row_mut(src).iter_mut().zip(g.row(k)) {
                            *x += y;
                        }
                    }
                });
            }
            Op::Segment(a, segments, reduce, arg) => {
                let av = &nodes[a.0].value;
                let out = &node.value;
                let cols = av.cols;
                acc(*a, &mut |s| {
                    for seg in 0..segments.count() {
                        let range = segments.range(seg);
                        let k = range.len();
                        if k == 0 {
                            continue;
                        }
                        for c in 0..cols {
                            let gy = g.data[seg * cols + c];
                            match reduce {
                                SegmentReduce::Sum => {
                                    for r in range.clone() {
                                        s.data[r * cols + c] += gy;
                                    }
                                }
                                SegmentReduce::Mean => {
                                    let w = gy / k as f64;
                                    for r in range.clone() {
                                        s.data[r * cols + c] += w;
                                    }
                                }
                                SegmentReduce::Std => {
                                    let sd = out.data[seg * cols + c];
                                    if sd > 0.0 {
                                        let m = range.clone().map(|r| av.data[r * cols + c]).sum::<f64>() / k as f64;
                                        for r in range.clone() {
                                            s.data[r * cols + c] += gy * (av.data[r * cols + c] - m) / (k as f64 * sd);
                                        }
                                    }
                                }
                                SegmentReduce::Min | SegmentReduce::Max => {
                                    s.data[arg[seg * cols + c] * cols + c] += gy;
                                }
                            }
                        }
                    }
                });
            }
            Op::EdgeSigmoid {
                a,
                b,
                bias,
                targets,
                sources,
            } => {
                let out = &node.value;
                let m = out.cols;
                // gradient at the sigmoid's input
                let mut dz = self.scratch(out.rows, m);
                for ((z, &gy), &o) in dz.data.iter_mut().zip(&g.data).zip(&out.data) {
                    *z = gy * o * (1.0 - o);
                }
                if wants(*a) {
                    acc(*a, &mut |s| {
                        for (e, &t) in targets.iter().enumerate() {
                            for (x, y) in s.row_mut(t).iter_mut().zip(dz.row(e)) {
                                *x += y;
                            }
                        }
                    });
                }
                if wants(*b) {
                    acc(*b, &mut |s| {
                        for (e, &src) in sources.iter().enumerate() {
                            for (x, y) in s.row_mut(src).iter_mut().zip(dz.row(e)) {
                                *x += y;
                            }
                        }
                    });
                }
                if wants(*bias) {
                    acc(*bias, &mut |s| {
                        for e in 0..dz.rows {
                            for (x, y) in s.data.iter_mut().zip(dz.row(e)) {
                                *x += y;
                            }
                        }
                    });
                }
                self.pool.borrow_mut().give(dz);
            }
            Op::MultiAggregate(a, segments, scalers, arg_min, arg_max) => {
                let av = &nodes[a.0].value;
                let out = &node.value;
                let m = av.cols;
                let width = out.cols;
                acc(*a, &mut |s| {
                    // combined upstream gradient per basic aggregate
                    let mut gb = vec![0.0; 5 * m];
                    let mut flat = vec![0.0; m];
                    let mut coef = vec![0.0; m];
                    for seg in 0..segments.count() {
                        let range = segments.range(seg);
                        let k = range.len();
                        if k == 0 {
                            continue;
                        }
                        let grow = &g.data[seg * width..(seg + 1) * width];
                        let orow = &out.data[seg * width..(seg + 1) * width];
                        gb.copy_from_slice(&grow[..5 * m]);
                        if let Some((amp, att)) = scalers {
                            let (up, down) = grow[5 * m..].split_at(5 * m);
                            for ((v, &u), &d) in gb.iter_mut().zip(up).zip(down) {
                                *v += amp[seg] * u + att[seg] * d;
                            }
                        }
                        let inv = 1.0 / k as f64;
                        for c in 0..m {
                            flat[c] = gb[2 * m + c] + gb[c] * inv;
                            let sd = orow[m + c];
                            coef[c] = if sd > 0.0 { gb[m + c] * inv / sd } else { 0.0 };
                        }
                        let mean = &orow[..m];
                        for r in range {
                            let srow = &mut s.data[r * m..(r + 1) * m];
                            for c in 0..m {
                                srow[c] += flat[c] + coef[c] * (av.data[r * m + c] - mean[c]);
                            }
                        }
                        for c in 0..m {
                            s.data[arg_min[seg * m + c] * m + c] += gb[3 * m + c];
                            s.data[arg_max[seg * m + c] * m + c] += gb[4 * m + c];
                        }
                    }
                });
            }
        }
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

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let w = t.param(Matrix::scalar(3.0));
        let sq = t.mul(w, w);
        let g = t.backward(sq);
        assert_eq!(g.get(w).item(), 6.0);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.0));
        let s = t.sigmoid(x);
        assert_eq!(t.value(s).item(), 0.5);
        assert_eq!(t.backward(s).get(x).item(), 0.25);
    }

    #[test]
    fn constants_get_no_gradient_work() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::scalar(2.0));
        let w = t.param(Matrix::scalar(5.0));
        let p = t.mul(c, w);
        let g = t.backward(p);
        assert_eq!(g.get(w).item(), 2.0);
        assert_eq!(g.get(c).item(), 0.0);
    }

    #[test]
    fn segment_reductions_forward() {
        let mut t = Tape::new();
        let x = t.param(Matrix::column(&[1.0, 2.0, 3.0]));
        let segs = Arc::new(Segments::new(vec![0, 3, 3]));
        let expect = [
            (SegmentReduce::Mean, 2.0),
            (SegmentReduce::Std, (2.0f64 / 3.0).sqrt()),
            (SegmentReduce::Sum, 6.0),
            (SegmentReduce::Min, 1.0),
            (SegmentReduce::Max, 3.0),
        ];
        for (reduce, want) in expect {
            let out = t.segment(x, segs.clone(), reduce);
            assert!((t.value(out).data[0] - want).abs() < 1e-15, "{reduce:?}");
            assert_eq!(t.value(out).data[1], 0.0, "empty segment");
        }
    }

    #[test]
    fn min_max_ties_route_to_first() {
        let mut t = Tape::new();
        let x = t.param(Matrix::column(&[2.0, 2.0, 1.0]));
        let segs = Arc::new(Segments::new(vec![0, 3]));
        let m = t.segment(x, segs, SegmentReduce::Max);
        let s = t.sum(m);
        assert_eq!(t.backward(s).get(x).data, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn std_of_constant_segment_has_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::column(&[4.0, 4.0]));
        let segs = Arc::new(Segments::new(vec![0, 2]));
        let sd = t.segment(x, segs, SegmentReduce::Std);
        let s = t.sum(sd);
        assert_eq!(t.value(sd).item(), 0.0);
        assert_eq!(t.backward(s).get(x).data, vec![0.0, 0.0]);
    }

    #[test]
    fn multi_aggregate_matches_separate_ops() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_vec(
            5,
            2,
            vec![1.0, 0.5, 3.0, -1.0, 2.0, 2.0, 7.0, 0.0, -4.0, 1.5],
        ));
        let segs = Arc::new(Segments::new(vec![0, 3, 3, 5]));
        let amp: Arc<[f64]> = Arc::from(vec![1.5, 0.0, 0.7]);
        let att: Arc<[f64]> = Arc::from(vec![0.4, 0.0, 2.0]);
        let fused = t.multi_aggregate(x, segs.clone(), Some((amp.clone(), att.clone())));
        let mut parts = Vec::new();
        for reduce in [
            SegmentReduce::Mean,
            SegmentReduce::Std,
            SegmentReduce::Sum,
            SegmentReduce::Min,
            SegmentReduce::Max,
        ] {
            parts.push(t.segment(x, segs.clone(), reduce));
        }
        let basic = parts.clone();
        for f in [&amp, &att] {
            for &b in &basic {
                parts.push(t.scale_rows(b, f.clone()));
            }
        }
        let separate = t.concat(&parts);
        assert_eq!(t.value(fused).shape(), (3, 30));
        for (a, b) in t.value(fused).data.iter().zip(&t.value(separate).data) {
            assert!((a - b).abs() < 1e-14);
        }
        let w = t.constant(Matrix::from_vec(
            30,
            1,
            (0..30).map(|v| (v as f64 * 0.37).sin()).collect(),
        ));
        let lf = t.matmul(fused, w);
        let lf = t.sum(lf);
        let ls = t.matmul(separate, w);
        let ls = t.sum(ls);
        let gf = t.backward(lf).get(x);
        let gs = t.backward(ls).get(x);
        for (a, b) in gf.data.iter().zip(&gs.data) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn edge_sigmoid_matches_composition() {
        let mut t = Tape::new();
        let a = t.param(Matrix::from_vec(3, 2, vec![0.1, -0.4, 1.2, 0.3, -0.8, 0.6]));
        let b = t.param(Matrix::from_vec(3, 2, vec![0.5, 0.2, -1.1, 0.9, 0.4, -0.3]));
        let bias = t.param(Matrix::from_vec(1, 2, vec![0.05, -0.2]));
        let targets: Arc<[usize]> = Arc::from(vec![0, 0, 1, 2]);
        let sources: Arc<[usize]> = Arc::from(vec![1, 2, 0, 0]);
        let fused = t.edge_sigmoid(a, b, bias, targets.clone(), sources.clone());
        let ga = t.gather(a, targets);
        let gb = t.gather(b, sources);
        let z = t.add(ga, gb);
        let z = t.add_row(z, bias);
        let plain = t.sigmoid(z);
        assert_eq!(t.value(fused), t.value(plain));
        let w = t.constant(Matrix::from_vec(4, 2, vec![1.0, -2.0, 0.5, 0.3, -1.5, 2.2, 0.7, 0.1]));
        let lf = t.mul(fused, w);
        let lf = t.sum(lf);
        let lp = t.mul(plain, w);
        let lp = t.sum(lp);
        let (gf, gp) = (t.backward(lf), t.backward(lp));
        for v in [a, b, bias] {
            for (x, y) in gf.get(v).data.iter().zip(&gp.get(v).data) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stable_softplus() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn matmul_shape_mismatch_panics() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(2, 3));
        t.matmul(a, b);
    }
}
