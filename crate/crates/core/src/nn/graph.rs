//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! borrowed from their store rather than copied; [`Graph::backward`] returns
//! gradients keyed by parameter index.

use std::borrow::Cow;

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    LogSigmoid(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SegmentMean(Var, Vec<Vec<usize>>),
    GatherRows(Var, Vec<Option<usize>>),
    ColumnToSquare(Var, usize),
    EdgeWeightedSum(Var, Var),
    Sum(Var),
    Pick(Var, usize, usize),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
}

#[derive(Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, index: usize, t: &'p Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Param(index),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.rows, "matmul shape");
        let mut out = Tensor::zeros(av.rows, bv.cols);
        matmul_acc(&mut out.data, &av.data, &bv.data, av.rows, av.cols, bv.cols);
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.cols, "matmul_bt shape");
        let mut out = Tensor::zeros(av.rows, bv.rows);
        matmul_bt_acc(&mut out.data, &av.data, &bv.data, av.rows, av.cols, bv.rows);
        self.push(out, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), self.value(b).shape(), "add shape");
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds the `1×c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        let row = self.value(b);
        assert_eq!((1, out.cols), row.shape(), "add_row shape");
        for r in 0..out.rows {
            for (o, v) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&row.data) {
                *o += v;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), self.value(b).shape(), "mul shape");
        for (o, v) in out.data.iter_mut().zip(&self.value(b).data) {
            *o *= v;
        }
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|&v| v * sigmoid(v)).collect());
        self.push(out, Op::Silu(a))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|&v| log_sigmoid(v)).collect());
        self.push(out, Op::LogSigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let c = out.cols;
        for row in out.data.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let c = out.cols;
        for row in out.data.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    /// Row-wise layer normalization with learned `1×c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = g[c] * h + b[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "slice_cols range");
        let mut out = Tensor::zeros(x.rows, len);
        for r in 0..x.rows {
            out.data[r * len..(r + 1) * len].copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let x = self.value(p);
            assert_eq!(x.rows, rows, "concat_cols rows");
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + x.cols].copy_from_slice(x.row(r));
            }
            off += x.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Row `s` of the result is the mean of rows `segments[s]` of `a` (zero if empty).
    pub fn segment_mean(&mut self, a: Var, segments: Vec<Vec<usize>>) -> Var {
        let x = self.value(a);
        let c = x.cols;
        let mut out = Tensor::zeros(segments.len(), c);
        for (s, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            let orow = &mut out.data[s * c..(s + 1) * c];
            for &r in seg {
                for (o, v) in orow.iter_mut().zip(x.row(r)) {
                    *o += v;
                }
            }
            let inv = 1.0 / seg.len() as f64;
            for o in orow.iter_mut() {
                *o *= inv;
            }
        }
        self.push(out, Op::SegmentMean(a, segments))
    }

    /// Copies rows by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, a: Var, index: Vec<Option<usize>>) -> Var {
        let x = self.value(a);
        let c = x.cols;
        let mut out = Tensor::zeros(index.len(), c);
        for (r, idx) in index.iter().enumerate() {
            if let Some(i) = *idx {
                out.data[r * c..(r + 1) * c].copy_from_slice(x.row(i));
            }
        }
        self.push(out, Op::GatherRows(a, index))
    }

    /// Reads column `col` of an `n²×k` matrix as an `n×n` matrix.
    pub fn column_to_square(&mut self, a: Var, col: usize) -> Var {
        let x = self.value(a);
        let n = (x.rows as f64).sqrt().round() as usize;
        assert_eq!(n * n, x.rows, "column_to_square needs n² rows");
        let out = Tensor::from_vec(n, n, (0..x.rows).map(|r| x.get(r, col)).collect());
        self.push(out, Op::ColumnToSquare(a, col))
    }

    /// `out[i] = Σ_j weights[i][j] · edges[i·n + j]` for `weights: n×n`, `edges: n²×k`.
    pub fn edge_weighted_sum(&mut self, weights: Var, edges: Var) -> Var {
        let w = self.value(weights);
        let e = self.value(edges);
        let (n, k) = (w.rows, e.cols);
        assert_eq!(e.rows, n * n, "edge_weighted_sum shape");
        let mut out = Tensor::zeros(n, k);
        for i in 0..n {
            let orow = &mut out.data[i * k..(i + 1) * k];
            for j in 0..n {
                let a = w.data[i * n + j];
                for (o, v) in orow.iter_mut().zip(e.row(i * n + j)) {
                    *o += a * v;
                }
            }
        }
        self.push(out, Op::EdgeWeightedSum(weights, edges))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let v = self.value(a).get(r, c);
        self.push(Tensor::scalar(v), Op::Pick(a, r, c))
    }

    /// Back-propagates from the `1×1` node `loss`; returns `(param index, gradient)` pairs.
    pub fn backward(&self, loss: Var) -> Vec<(usize, Tensor)> {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Vec::new();

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => out.push((*p, g)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows, av.cols, bv.cols);
                    let mut da = Tensor::zeros(m, k);
                    matmul_bt_acc(&mut da.data, &g.data, &bv.data, m, n, k);
                    let mut db = Tensor::zeros(k, n);
                    matmul_at_acc(&mut db.data, &av.data, &g.data, m, k, n);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulBT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows, av.cols, bv.rows);
                    let mut da = Tensor::zeros(m, k);
                    matmul_acc(&mut da.data, &g.data, &bv.data, m, n, k);
                    let mut db = Tensor::zeros(n, k);
                    matmul_at_acc(&mut db.data, &g.data, &av.data, m, n, k);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, b) => {
                    let mut db = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, v) in db.data.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, db);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = g.clone();
                    for (d, v) in da.data.iter_mut().zip(&bv.data) {
                        *d *= v;
                    }
                    let mut db = g;
                    for (d, v) in db.data.iter_mut().zip(&av.data) {
                        *d *= v;
                    }
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Scale(a, s) => {
                    let mut da = g;
                    da.scale(*s);
                    acc(&mut grads, *a, da);
                }
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (d, &v) in da.data.iter_mut().zip(&x.data) {
                        let s = sigmoid(v);
                        *d *= s * (1.0 + v * (1.0 - s));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::LogSigmoid(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (d, &v) in da.data.iter_mut().zip(&x.data) {
                        *d *= sigmoid(-v);
                    }
                    acc(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let c = y.cols;
                    let mut da = g;
                    for (drow, yrow) in da.data.chunks_mut(c).zip(y.data.chunks(c)) {
                        let dot: f64 = drow.iter().zip(yrow).map(|(d, y)| d * y).sum();
                        for (d, &yv) in drow.iter_mut().zip(yrow) {
                            *d = yv * (*d - dot);
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::LogSoftmaxRows(a) => {
                    let c = y.cols;
                    let mut da = g;
                    for (drow, yrow) in da.data.chunks_mut(c).zip(y.data.chunks(c)) {
                        let total: f64 = drow.iter().sum();
                        for (d, &yv) in drow.iter_mut().zip(yrow) {
                            *d -= yv.exp() * total;
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (rows, cols) = g.shape();
                    let gam = &self.value(*gamma).data;
                    let mut dgamma = Tensor::zeros(1, cols);
                    let mut dbeta = Tensor::zeros(1, cols);
                    let mut dx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let grow = g.row(r);
                        let hrow = &xhat[r * cols..(r + 1) * cols];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for c in 0..cols {
                            dgamma.data[c] += grow[c] * hrow[c];
                            dbeta.data[c] += grow[c];
                            let dh = grow[c] * gam[c];
                            mean_dh += dh;
                            mean_dh_h += dh * hrow[c];
                        }
                        mean_dh /= cols as f64;
                        mean_dh_h /= cols as f64;
                        for c in 0..cols {
                            let dh = grow[c] * gam[c];
                            dx.data[r * cols + c] = inv_std[r] * (dh - mean_dh - hrow[c] * mean_dh_h);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut da = Tensor::zeros(x.rows, x.cols);
                    let len = g.cols;
                    for r in 0..x.rows {
                        da.data[r * x.cols + start..r * x.cols + start + len].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols;
                        let mut dp = Tensor::zeros(g.rows, c);
                        for r in 0..g.rows {
                            dp.data[r * c..(r + 1) * c].copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        off += c;
                        acc(&mut grads, p, dp);
                    }
                }
                Op::SegmentMean(a, segments) => {
                    let x = self.value(*a);
                    let c = x.cols;
                    let mut da = Tensor::zeros(x.rows, c);
                    for (s, seg) in segments.iter().enumerate() {
                        if seg.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / seg.len() as f64;
                        for &r in seg {
                            for (d, v) in da.data[r * c..(r + 1) * c].iter_mut().zip(g.row(s)) {
                                *d += inv * v;
                            }
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::GatherRows(a, index) => {
                    let x = self.value(*a);
                    let c = x.cols;
                    let mut da = Tensor::zeros(x.rows, c);
                    for (r, idx) in index.iter().enumerate() {
                        if let Some(i) = *idx {
                            for (d, v) in da.data[i * c..(i + 1) * c].iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                    }
                    acc(&mut grads, *a, da);
                }
                Op::ColumnToSquare(a, col) => {
                    let x = self.value(*a);
                    let mut da = Tensor::zeros(x.rows, x.cols);
                    for (r, v) in g.data.iter().enumerate() {
                        da.data[r * x.cols + col] = *v;
                    }
                    acc(&mut grads, *a, da);
                }
                Op::EdgeWeightedSum(w, e) => {
                    let (wv, ev) = (self.value(*w), self.value(*e));
                    let (n, k) = (wv.rows, ev.cols);
                    let mut dw = Tensor::zeros(n, n);
                    let mut de = Tensor::zeros(n * n, k);
                    for i in 0..n {
                        let grow = g.row(i);
                        for j in 0..n {
                            let erow = ev.row(i * n + j);
                            dw.data[i * n + j] = grow.iter().zip(erow).map(|(a, b)| a * b).sum();
                            let a = wv.data[i * n + j];
                            for (d, gv) in de.data[(i * n + j) * k..(i * n + j + 1) * k].iter_mut().zip(grow) {
                                *d = a * gv;
                            }
                        }
                    }
                    acc(&mut grads, *w, dw);
                    if !matches!(self.nodes[e.0].op, Op::Leaf) {
                        acc(&mut grads, *e, de);
                    }
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, Tensor::filled(x.rows, x.cols, g.data[0]));
                }
                Op::Pick(a, r, c) => {
                    let x = self.value(*a);
                    let mut da = Tensor::zeros(x.rows, x.cols);
                    da.data[r * x.cols + c] = g.data[0];
                    acc(&mut grads, *a, da);
                }
            }
        }
        out
    }
}
