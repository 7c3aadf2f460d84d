//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] owns every value computed during one forward pass. Operations
//! append a node holding the result and, when any input requires a gradient,
//! a record of how to push gradients back to the inputs. [`Tape::backward`]
//! walks the nodes in exact reverse order, so the gradients are a
//! deterministic function of the recorded computation.
//!
//! Tensors are at most two-dimensional and stored row-major in `f64`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor {
            shape: vec![],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn one_hot(len: usize, index: usize) -> Tensor {
        let mut data = vec![0.0; len];
        data[index] = 1.0;
        Tensor::vector(data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Concat(Vec<Var>),
    Columns(Vec<Var>),
    AddCol(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Dot(Var, Var),
    Pick(Var, usize),
    SqDistRows(Var, Var),
    StraightThrough(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
    grad: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
        None => *slot = Some(delta.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Handles to dropped
    /// nodes become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` call's loss with respect to `v`.
    /// `None` when `v` does not require gradients or the loss does not
    /// depend on it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value.data
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn vector_only(&self, op: &'static str, a: Var) -> Result<usize> {
        match self.shape(a) {
            [n] => Ok(*n),
            s => Err(Error::Shape {
                op,
                left: s.to_vec(),
                right: vec![],
            }),
        }
    }

    /// Matrix product. Supports `[m,k]·[k]`, `[m,k]·[k,n]` and `[k]·[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, n, out_shape) = match (sa.as_slice(), sb.as_slice()) {
            (&[m, k], &[k2]) if k == k2 => (m, k, 1, vec![m]),
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n, vec![m, n]),
            (&[k], &[k2, n]) if k == k2 => (1, k, n, vec![n]),
            _ => {
                return Err(Error::Shape {
                    op: "matmul",
                    left: sa,
                    right: sb,
                })
            }
        };
        let (x, y) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (o, row) in out.iter_mut().zip(x.chunks_exact(k)) {
                *o = row.iter().zip(y).map(|(r, v)| r * v).sum();
            }
            return Ok(self.push(Tensor::new(out_shape, out)?, &[a, b], Op::MatMul(a, b)));
        }
        for (out_row, x_row) in out.chunks_exact_mut(n).zip(x.chunks_exact(k)) {
            for (&xv, y_row) in x_row.iter().zip(y.chunks_exact(n)) {
                if xv != 0.0 {
                    for (o, yv) in out_row.iter_mut().zip(y_row) {
                        *o += xv * yv;
                    }
                }
            }
        }
        Ok(self.push(Tensor { shape: out_shape, data: out }, &[a, b], Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, &[a, b], Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x - y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, &[a, b], Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, &[a, b], Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = &self.nodes[a.0].value;
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|x| x * c).collect(),
        };
        self.push(value, &[a], Op::Scale(a, c))
    }

    /// Adds the scalar `c` to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let t = &self.nodes[a.0].value;
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|x| x + c).collect(),
        };
        self.push(value, &[a], Op::Offset(a))
    }

    /// Concatenates vectors, or stacks matrices with equal column counts
    /// on top of each other.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape {
                op: "concat",
                left: vec![],
                right: vec![],
            });
        };
        let matrix_cols = match self.shape(first) {
            [_, n] => Some(*n),
            _ => None,
        };
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            match (self.shape(p), matrix_cols) {
                ([r], None) => rows += r,
                ([r, n], Some(c)) if *n == c => rows += r,
                (s, _) => {
                    return Err(Error::Shape {
                        op: "concat",
                        left: self.shape(first).to_vec(),
                        right: s.to_vec(),
                    })
                }
            }
            data.extend_from_slice(self.data(p));
        }
        let shape = match matrix_cols {
            Some(c) => vec![rows, c],
            None => vec![rows],
        };
        Ok(self.push(Tensor { shape, data }, parts, Op::Concat(parts.to_vec())))
    }

    /// Places equal-length vectors side by side as the columns of a matrix.
    pub fn columns(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape {
                op: "columns",
                left: vec![],
                right: vec![],
            });
        };
        let d = self.vector_only("columns", first)?;
        let b = parts.len();
        let mut data = vec![0.0; d * b];
        for (j, &p) in parts.iter().enumerate() {
            if self.shape(p) != [d] {
                return Err(Error::Shape {
                    op: "columns",
                    left: vec![d],
                    right: self.shape(p).to_vec(),
                });
            }
            for (i, &x) in self.data(p).iter().enumerate() {
                data[i * b + j] = x;
            }
        }
        Ok(self.push(Tensor { shape: vec![d, b], data }, parts, Op::Columns(parts.to_vec())))
    }

    /// Adds the vector `b` (`[m]`) to every column of `a` (`[m,n]`).
    pub fn add_col(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = match (self.shape(a), self.shape(b)) {
            (&[m, n], &[m2]) if m == m2 => (m, n),
            (sa, sb) => {
                return Err(Error::Shape {
                    op: "add_col",
                    left: sa.to_vec(),
                    right: sb.to_vec(),
                })
            }
        };
        let bias = self.data(b);
        let mut data = self.data(a).to_vec();
        for i in 0..m {
            for x in &mut data[i * n..(i + 1) * n] {
                *x += bias[i];
            }
        }
        Ok(self.push(Tensor { shape: vec![m, n], data }, &[a, b], Op::AddCol(a, b)))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = &self.nodes[a.0].value;
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&x| f(x)).collect(),
        };
        self.push(value, &[a], op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(
            a,
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            Op::Sigmoid(a),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.vector_only("softmax", a)?;
        let data = softmax(self.data(a));
        Ok(self.push(Tensor::vector(data), &[a], Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.vector_only("log_softmax", a)?;
        let data = log_softmax(self.data(a));
        Ok(self.push(Tensor::vector(data), &[a], Op::LogSoftmax(a)))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), &[a], Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), &[a, b], Op::Dot(a, b)))
    }

    /// Element `i` of a tensor, as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let len = self.data(a).len();
        if i >= len {
            return Err(Error::Shape {
                op: "pick",
                left: self.shape(a).to_vec(),
                right: vec![i],
            });
        }
        let x = self.data(a)[i];
        Ok(self.push(Tensor::scalar(x), &[a], Op::Pick(a, i)))
    }

    /// Squared Euclidean distance from the vector `q` (`[d]`) to every row
    /// of `rows` (`[k,d]`), giving `[k]`.
    pub fn sq_dist_rows(&mut self, q: Var, rows: Var) -> Result<Var> {
        let (sq, sr) = (self.shape(q).to_vec(), self.shape(rows).to_vec());
        let (k, d) = match (sq.as_slice(), sr.as_slice()) {
            (&[d], &[k, d2]) if d == d2 => (k, d),
            _ => {
                return Err(Error::Shape {
                    op: "sq_dist_rows",
                    left: sq,
                    right: sr,
                })
            }
        };
        let (qv, rv) = (self.data(q), self.data(rows));
        let data = (0..k)
            .map(|i| {
                rv[i * d..(i + 1) * d]
                    .iter()
                    .zip(qv)
                    .map(|(r, x)| (x - r) * (x - r))
                    .sum()
            })
            .collect();
        Ok(self.push(Tensor::vector(data), &[q, rows], Op::SqDistRows(q, rows)))
    }

    /// Straight-through estimator: the forward value is the one-hot vector
    /// of `index`, the backward pass hands the incoming gradient unchanged
    /// to `relaxed`.
    pub fn straight_through(&mut self, relaxed: Var, index: usize) -> Result<Var> {
        let n = self.vector_only("straight_through", relaxed)?;
        if index >= n {
            return Err(Error::Shape {
                op: "straight_through",
                left: vec![n],
                right: vec![index],
            });
        }
        Ok(self.push(Tensor::one_hot(n, index), &[relaxed], Op::StraightThrough(relaxed)))
    }

    /// Backpropagates from a scalar `loss`, populating gradients of every
    /// node that requires them. Earlier gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.data.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn send(&mut self, to: Var, delta: &[f64]) {
        let node = &mut self.nodes[to.0];
        if node.requires_grad {
            accumulate(&mut node.grad, delta);
        }
    }

    fn propagate(&mut self, idx: usize, op: &Op, g: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let sa = self.shape(a).to_vec();
                let sb = self.shape(b).to_vec();
                let (m, k, n) = match (sa.as_slice(), sb.as_slice()) {
                    (&[m, k], &[_]) => (m, k, 1),
                    (&[m, k], &[_, n]) => (m, k, n),
                    (&[k], &[_, n]) => (1, k, n),
                    _ => unreachable!(),
                };
                if n == 1 {
                    // Accumulate in place: these are usually parameter
                    // gradients touched once per recurrent step.
                    if self.nodes[a.0].requires_grad {
                        let mut da = self.nodes[a.0].grad.take().unwrap_or_else(|| vec![0.0; m * k]);
                        let y = self.data(b);
                        for (row, &gi) in da.chunks_exact_mut(k).zip(g) {
                            if gi != 0.0 {
                                for (d, v) in row.iter_mut().zip(y) {
                                    *d += gi * v;
                                }
                            }
                        }
                        self.nodes[a.0].grad = Some(da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = self.nodes[b.0].grad.take().unwrap_or_else(|| vec![0.0; k]);
                        let x = self.data(a);
                        for (row, &gi) in x.chunks_exact(k).zip(g) {
                            for (d, w) in db.iter_mut().zip(row) {
                                *d += gi * w;
                            }
                        }
                        self.nodes[b.0].grad = Some(db);
                    }
                    return;
                }
                if self.nodes[a.0].requires_grad {
                    let mut da = self.nodes[a.0].grad.take().unwrap_or_else(|| vec![0.0; m * k]);
                    let y = self.data(b);
                    for (da_row, g_row) in da.chunks_exact_mut(k).zip(g.chunks_exact(n)) {
                        for (d, y_row) in da_row.iter_mut().zip(y.chunks_exact(n)) {
                            *d += g_row.iter().zip(y_row).map(|(u, v)| u * v).sum::<f64>();
                        }
                    }
                    self.nodes[a.0].grad = Some(da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = self.nodes[b.0].grad.take().unwrap_or_else(|| vec![0.0; k * n]);
                    let x = self.data(a);
                    for (x_row, g_row) in x.chunks_exact(k).zip(g.chunks_exact(n)) {
                        for (&xv, db_row) in x_row.iter().zip(db.chunks_exact_mut(n)) {
                            if xv != 0.0 {
                                for (d, u) in db_row.iter_mut().zip(g_row) {
                                    *d += xv * u;
                                }
                            }
                        }
                    }
                    self.nodes[b.0].grad = Some(db);
                }
            }
            Op::Add(a, b) => {
                self.send(a, g);
                self.send(b, g);
            }
            Op::Sub(a, b) => {
                self.send(a, g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                self.send(b, &neg);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(self.data(b)).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = g.iter().zip(self.data(a)).map(|(g, x)| g * x).collect();
                self.send(a, &da);
                self.send(b, &db);
            }
            Op::Scale(a, c) => {
                let da: Vec<f64> = g.iter().map(|x| x * c).collect();
                self.send(a, &da);
            }
            Op::Offset(a) => self.send(a, g),
            Op::Concat(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.data(p).len();
                    self.send(p, &g[off..off + len]);
                    off += len;
                }
            }
            Op::Columns(ref parts) => {
                let b = parts.len();
                for (j, &p) in parts.iter().enumerate() {
                    let d = self.data(p).len();
                    let col: Vec<f64> = (0..d).map(|i| g[i * b + j]).collect();
                    self.send(p, &col);
                }
            }
            Op::AddCol(a, b) => {
                self.send(a, g);
                let n = self.shape(a)[1];
                let db: Vec<f64> = g.chunks_exact(n).map(|row| row.iter().sum()).collect();
                self.send(b, &db);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value.data;
                let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.send(a, &da);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value.data;
                let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                self.send(a, &da);
            }
            Op::Exp(a) => {
                let y = &self.nodes[idx].value.data;
                let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y).collect();
                self.send(a, &da);
            }
            Op::Softmax(a) => {
                let y = &self.nodes[idx].value.data;
                let gy: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| y * (g - gy)).collect();
                self.send(a, &da);
            }
            Op::LogSoftmax(a) => {
                let y = &self.nodes[idx].value.data;
                let gs: f64 = g.iter().sum();
                let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g - y.exp() * gs).collect();
                self.send(a, &da);
            }
            Op::Sum(a) => {
                let da = vec![g[0]; self.data(a).len()];
                self.send(a, &da);
            }
            Op::Dot(a, b) => {
                let da: Vec<f64> = self.data(b).iter().map(|y| g[0] * y).collect();
                let db: Vec<f64> = self.data(a).iter().map(|x| g[0] * x).collect();
                self.send(a, &da);
                self.send(b, &db);
            }
            Op::Pick(a, i) => {
                let mut da = vec![0.0; self.data(a).len()];
                da[i] = g[0];
                self.send(a, &da);
            }
            Op::SqDistRows(q, rows) => {
                let d = self.data(q).len();
                let k = g.len();
                let qv = self.data(q);
                let rv = self.data(rows);
                let mut dq = vec![0.0; d];
                let mut dr = vec![0.0; k * d];
                for i in 0..k {
                    for j in 0..d {
                        let diff = 2.0 * g[i] * (qv[j] - rv[i * d + j]);
                        dq[j] += diff;
                        dr[i * d + j] = -diff;
                    }
                }
                self.send(q, &dq);
                self.send(rows, &dr);
            }
            Op::StraightThrough(a) => self.send(a, g),
        }
    }
}
