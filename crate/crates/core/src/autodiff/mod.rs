//! Define-by-run reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only tape: every operation pushes a node whose
//! inputs already exist, so node order is a topological order and the
//! backward pass is a single reverse sweep. Graphs are built fresh for every
//! training step and dropped afterwards.

mod gradcheck;

pub use gradcheck::{grad_check, GradCheck};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Additive guard used by norms and cosine similarity.
pub const NORM_EPS: f64 = 1e-8;

/// Base clamp of [`Graph::pow_clamped`] and [`Graph::root_clamped`].
pub const POW_EPS: f64 = 1e-4;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { input: Var, scale: f64 },
    AddRow(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    CosineRows(Var, Var),
    MeanPool(Var),
    Pow { input: Var, exponent: f64, floor: f64 },
    Sum(Var),
    Mean(Var),
    Gather { input: Var, index: Vec<usize> },
    SegmentMean { input: Var, segments: Vec<Vec<usize>> },
    Clamp { input: Var, lo: f64, hi: f64 },
    Concat(Vec<Var>),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    grad: Option<Tensor>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a trainable leaf, if a backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::dim("transpose", t.shape(), &[]));
        }
        let value = t.transpose();
        Ok(self.push(Op::Transpose(a), value, &[a]))
    }

    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), value, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), value, &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), value, &[a, b]))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|x| scale * x + shift);
        self.push(Op::Affine { input: a, scale }, value, &[a])
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 1.0)
    }

    /// Adds the vector `b` to every row of the matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 1 || ta.cols() != tb.len() {
            return Err(Error::dim("add_row", ta.shape(), tb.shape()));
        }
        let cols = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tb.data()[i % cols])
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRow(a, b), value, &[a, b]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value, &[a])
    }

    /// Row-wise softmax of a matrix. The per-row max shift is a constant.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::dim("softmax_rows", t.shape(), &[]));
        }
        let cols = t.cols();
        let mut data = t.data().to_vec();
        if cols > 0 {
            for row in data.chunks_mut(cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(Op::SoftmaxRows(a), value, &[a]))
    }

    /// Cosine similarity of matching rows of two `n x d` matrices.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || ta.shape() != tb.shape() {
            return Err(Error::dim("cosine_rows", ta.shape(), tb.shape()));
        }
        let data = (0..ta.rows()).map(|i| cosine(ta.row(i), tb.row(i))).collect();
        let value = Tensor::vector(data);
        Ok(self.push(Op::CosineRows(a, b), value, &[a, b]))
    }

    /// `u.v / (|u||v| + eps)` for two vectors; returns a scalar.
    pub fn cosine_similarity(&mut self, u: Var, v: Var) -> Result<Var> {
        let (su, sv) = (self.shape(u).to_vec(), self.shape(v).to_vec());
        if su.len() != 1 || su != sv {
            return Err(Error::dim("cosine_similarity", &su, &sv));
        }
        let u2 = self.reshape(u, vec![1, su[0]])?;
        let v2 = self.reshape(v, vec![1, sv[0]])?;
        let c = self.cosine_rows(u2, v2)?;
        self.reshape(c, vec![])
    }

    /// Mean over the two leading (spatial) axes of an `h x w x b` grid.
    pub fn mean_pool(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let shape = t.shape();
        if shape.len() != 3 || shape[0] == 0 || shape[1] == 0 {
            return Err(Error::dim("mean_pool", shape, &[]));
        }
        let channels = shape[2];
        let cells = shape[0] * shape[1];
        let mut out = vec![0.0; channels];
        for fiber in t.data().chunks(channels.max(1)) {
            for (o, &x) in out.iter_mut().zip(fiber) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= cells as f64;
        }
        let value = Tensor::vector(out);
        Ok(self.push(Op::MeanPool(a), value, &[a]))
    }

    /// Elementwise `max(x, POW_EPS)^p`, `p >= 1`.
    pub fn pow_clamped(&mut self, a: Var, p: f64) -> Result<Var> {
        if !(p >= 1.0) {
            return Err(Error::Parameter(format!("pow_clamped exponent {p} < 1")));
        }
        Ok(self.pow_floor(a, p, POW_EPS))
    }

    /// Elementwise `max(x, POW_EPS)^(1/p)`, `p >= 1`. The clamp keeps the
    /// derivative of the root finite at zero.
    pub fn root_clamped(&mut self, a: Var, p: f64) -> Result<Var> {
        if !(p >= 1.0) {
            return Err(Error::Parameter(format!("root_clamped order {p} < 1")));
        }
        Ok(self.pow_floor(a, 1.0 / p, POW_EPS))
    }

    /// Elementwise `max(x, floor)^exponent`; the gradient is zero below the floor.
    pub fn pow_floor(&mut self, a: Var, exponent: f64, floor: f64) -> Var {
        let value = self.value(a).map(|x| x.max(floor).powf(exponent));
        self.push(
            Op::Pow {
                input: a,
                exponent,
                floor,
            },
            value,
            &[a],
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), value, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::dim("mean", t.shape(), &[]));
        }
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        Ok(self.push(Op::Mean(a), value, &[a]))
    }

    /// Picks flat elements of `a`; the result is a vector of `index.len()`.
    pub fn gather(&mut self, a: Var, index: Vec<usize>) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= t.len()) {
            return Err(Error::Usage(format!(
                "gather index {bad} out of range for {:?}",
                t.shape()
            )));
        }
        let value = Tensor::vector(index.iter().map(|&i| t.data()[i]).collect());
        Ok(self.push(Op::Gather { input: a, index }, value, &[a]))
    }

    /// Selects rows of a matrix, repeating as requested.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(Error::dim("gather_rows", &shape, &[]));
        }
        let cols = shape[1];
        if let Some(&bad) = rows.iter().find(|&&r| r >= shape[0]) {
            return Err(Error::Usage(format!("row {bad} out of range for {shape:?}")));
        }
        let index = rows.iter().flat_map(|&r| r * cols..(r + 1) * cols).collect();
        let flat = self.gather(a, index)?;
        self.reshape(flat, vec![rows.len(), cols])
    }

    /// Averages a vector over index groups; every group must be non-empty.
    pub fn segment_mean(&mut self, a: Var, segments: Vec<Vec<usize>>) -> Result<Var> {
        let t = self.value(a);
        let mut out = Vec::with_capacity(segments.len());
        for seg in &segments {
            if seg.is_empty() || seg.iter().any(|&i| i >= t.len()) {
                return Err(Error::Usage("invalid segment for segment_mean".into()));
            }
            out.push(seg.iter().map(|&i| t.data()[i]).sum::<f64>() / seg.len() as f64);
        }
        let value = Tensor::vector(out);
        Ok(self.push(Op::SegmentMean { input: a, segments }, value, &[a]))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp { input: a, lo, hi }, value, &[a])
    }

    /// Flattens and concatenates the inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let data = parts
            .iter()
            .flat_map(|&v| self.value(v).data().iter().copied())
            .collect();
        let value = Tensor::vector(data);
        self.push(Op::Concat(parts.to_vec()), value, parts)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(a), value, &[a]))
    }

    /// Accumulates `d loss / d leaf` into every trainable leaf reachable
    /// from `loss`. Repeated calls add up until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut leaf_grads = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let out = &node.value;
            match &node.op {
                Op::Leaf => leaf_grads.push((i, g)),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if self.requires_grad(*a) {
                        let ga = slot(&mut grads, *a, m * k);
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g[i * n + j] * tb.data()[p * n + j];
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    if self.requires_grad(*b) {
                        let gb = slot(&mut grads, *b, k * n);
                        for i in 0..m {
                            for p in 0..k {
                                let x = ta.data()[i * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    gb[p * n + j] += x * g[i * n + j];
                                }
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = (out.rows(), out.cols());
                    let ga = slot(&mut grads, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, &g, |_, x| x);
                    self.accumulate(&mut grads, *b, &g, |_, x| x);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, &g, |_, x| x);
                    self.accumulate(&mut grads, *b, &g, |_, x| -x);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                    self.accumulate(&mut grads, *a, &g, |i, x| x * tb[i]);
                    self.accumulate(&mut grads, *b, &g, |i, x| x * ta[i]);
                }
                Op::Affine { input, scale } => {
                    self.accumulate(&mut grads, *input, &g, |_, x| x * scale);
                }
                Op::AddRow(a, b) => {
                    self.accumulate(&mut grads, *a, &g, |_, x| x);
                    if self.requires_grad(*b) {
                        let cols = self.value(*b).len();
                        let gb = slot(&mut grads, *b, cols);
                        for (i, &x) in g.iter().enumerate() {
                            gb[i % cols] += x;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = out.data();
                    self.accumulate(&mut grads, *a, &g, |i, x| x * y[i] * (1.0 - y[i]));
                }
                Op::Tanh(a) => {
                    let y = out.data();
                    self.accumulate(&mut grads, *a, &g, |i, x| x * (1.0 - y[i] * y[i]));
                }
                Op::SoftmaxRows(a) => {
                    let cols = out.cols();
                    let y = out.data();
                    let ga = slot(&mut grads, *a, y.len());
                    for r in 0..out.rows() {
                        let row = r * cols..(r + 1) * cols;
                        let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                        for j in row {
                            ga[j] += y[j] * (g[j] - dot);
                        }
                    }
                }
                Op::CosineRows(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let d = ta.cols();
                    let mut da = vec![0.0; ta.len()];
                    let mut db = vec![0.0; tb.len()];
                    for r in 0..ta.rows() {
                        let (u, v) = (ta.row(r), tb.row(r));
                        let (du, dv) = cosine_grad(u, v);
                        for j in 0..d {
                            da[r * d + j] = g[r] * du[j];
                            db[r * d + j] = g[r] * dv[j];
                        }
                    }
                    self.accumulate(&mut grads, *a, &da, |_, x| x);
                    self.accumulate(&mut grads, *b, &db, |_, x| x);
                }
                Op::MeanPool(a) => {
                    let shape = self.shape(*a);
                    let (cells, channels) = (shape[0] * shape[1], shape[2]);
                    self.accumulate(&mut grads, *a, &vec![0.0; cells * channels], |i, _| {
                        g[i % channels] / cells as f64
                    });
                }
                Op::Pow { input, exponent, floor } => {
                    let x = self.value(*input).data();
                    self.accumulate(&mut grads, *input, &g, |i, gi| {
                        if x[i] >= *floor {
                            gi * exponent * x[i].powf(exponent - 1.0)
                        } else {
                            0.0
                        }
                    });
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    self.accumulate(&mut grads, *a, &vec![g[0]; n], |_, x| x);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    self.accumulate(&mut grads, *a, &vec![g[0] / n as f64; n], |_, x| x);
                }
                Op::Gather { input, index } => {
                    if self.requires_grad(*input) {
                        let n = self.value(*input).len();
                        let ga = slot(&mut grads, *input, n);
                        for (&i, &x) in index.iter().zip(&g) {
                            ga[i] += x;
                        }
                    }
                }
                Op::SegmentMean { input, segments } => {
                    if self.requires_grad(*input) {
                        let n = self.value(*input).len();
                        let ga = slot(&mut grads, *input, n);
                        for (seg, &x) in segments.iter().zip(&g) {
                            let share = x / seg.len() as f64;
                            for &i in seg {
                                ga[i] += share;
                            }
                        }
                    }
                }
                Op::Clamp { input, lo, hi } => {
                    let x = self.value(*input).data();
                    self.accumulate(
                        &mut grads,
                        *input,
                        &g,
                        |i, gi| {
                            if x[i] > *lo && x[i] < *hi {
                                gi
                            } else {
                                0.0
                            }
                        },
                    );
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        self.accumulate(&mut grads, p, &g[offset..offset + n], |_, x| x);
                        offset += n;
                    }
                }
                Op::Reshape(a) => {
                    self.accumulate(&mut grads, *a, &g, |_, x| x);
                }
            }
        }

        for (i, g) in leaf_grads {
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(existing) => {
                    for (e, x) in existing.data_mut().iter_mut().zip(&g) {
                        *e += x;
                    }
                }
                None => node.grad = Some(Tensor::new(node.value.shape().to_vec(), g)?),
            }
        }
        Ok(())
    }

    /// Adds `f(i, upstream[i])` into the gradient slot of `target`.
    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: Var, upstream: &[f64], f: impl Fn(usize, f64) -> f64) {
        if !self.requires_grad(target) {
            return;
        }
        let buf = slot(grads, target, upstream.len());
        for (i, (b, &x)) in buf.iter_mut().zip(upstream).enumerate() {
            *b += f(i, x);
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (norm(u) * norm(v) + NORM_EPS)
}

fn cosine_grad(u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let (nu, nv) = (norm(u), norm(v));
    let denom = nu * nv + NORM_EPS;
    let coef = dot / (denom * denom);
    let du = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| {
            let dn = if nu > 0.0 { nv * a / nu } else { 0.0 };
            b / denom - coef * dn
        })
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| {
            let dn = if nv > 0.0 { nu * b / nv } else { 0.0 };
            a / denom - coef * dn
        })
        .collect();
    (du, dv)
}
