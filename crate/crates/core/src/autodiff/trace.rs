use std::sync::Arc;

use rand::Rng;

use super::sparse::SparseMatrix;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Broadcast {
    None,
    /// left operand is a rank-0 scalar
    Left,
    /// right operand is a rank-0 scalar
    Right,
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Ln,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    SpMM { a: Arc<SparseMatrix>, b: Var },
    Binary { kind: Binary, a: Var, b: Var, bc: Broadcast },
    Unary { kind: Unary, a: Var },
    Scale { a: Var, factor: f64 },
    AddScalar { a: Var },
    Clamp { a: Var, lo: f64, hi: f64 },
    Concat { a: Var, b: Var },
    StackRows { parts: Vec<Var> },
    AddBias { a: Var, bias: Var },
    Gather { a: Var, index: Vec<Option<usize>> },
    Dropout { a: Var, mask: Vec<f64> },
    Sum { a: Var },
    Mean { a: Var },
    RowSum { a: Var },
    SelectCol { a: Var, col: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run record of tensor operations.
///
/// Values are appended in evaluation order, so every node's inputs precede
/// it and a single reverse sweep computes all gradients.
pub struct Trace {
    nodes: Vec<Node>,
    params: Vec<Var>,
    check_finite: bool,
}

impl Default for Trace {
    fn default() -> Self {
        Trace::new()
    }
}

/// Gradients produced by [`Trace::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of the registered parameters, in registration order.
    pub fn params(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.params
            .iter()
            .map(move |&p| (p, self.grads[p.0].as_ref().expect("param gradient")))
    }
}

impl Trace {
    /// New trace. Non-finite checking is on in debug builds.
    pub fn new() -> Self {
        Trace {
            nodes: Vec::new(),
            params: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    pub fn set_finite_check(&mut self, on: bool) {
        self.check_finite = on;
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records a learnable value; `backward` reports its gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push_raw(value, Op::Leaf, true);
        self.params.push(v);
        v
    }

    /// Records a value that does not require gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push_raw(value, op, needs_grad))
    }

    fn mat_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::shape(op, other, &[0, 0])),
        }
    }

    /// Matrix product `a · b` for `a: [m, k]`, `b: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`; applies a weight stored as `[out, in]`
    /// to row-stacked inputs.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let name = if trans_b { "matmul_t" } else { "matmul" };
        let (m, k) = self.mat_dims(name, a)?;
        let (br, bc) = self.mat_dims(name, b)?;
        let (bk, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != bk {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            let bstride = if trans_b {
                (1, k as isize)
            } else {
                (n as isize, 1)
            };
            gemm(m, k, n, av, (k as isize, 1), bv, bstride, 0.0, &mut out);
        }
        let value = Tensor::matrix(m, n, out)?;
        self.push(name, value, Op::MatMul { a, b, trans_b }, &[a, b])
    }

    /// Sparse constant times dense: `a · b` for `a: [m, k]`, `b: [k, n]`.
    pub fn spmm(&mut self, a: &Arc<SparseMatrix>, b: Var) -> Result<Var> {
        let (k, n) = self.mat_dims("spmm", b)?;
        if a.cols() != k {
            return Err(Error::shape("spmm", &[a.rows(), a.cols()], self.shape(b)));
        }
        let out = a.mul_dense(self.value(b).data(), n);
        let value = Tensor::matrix(a.rows(), n, out)?;
        self.push("spmm", value, Op::SpMM { a: Arc::clone(a), b }, &[b])
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        };
        let sa = self.shape(a);
        let sb = self.shape(b);
        let bc = if sa == sb {
            Broadcast::None
        } else if sa.is_empty() {
            Broadcast::Left
        } else if sb.is_empty() {
            Broadcast::Right
        } else {
            return Err(Error::shape(name, sa, sb));
        };
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        };
        let av = self.value(a);
        let bv = self.value(b);
        let value = match bc {
            Broadcast::None => {
                let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::new(av.shape().to_vec(), data)?
            }
            Broadcast::Left => {
                let s = av.data()[0];
                bv.map(|y| f(s, y))
            }
            Broadcast::Right => {
                let s = bv.data()[0];
                av.map(|x| f(x, s))
            }
        };
        self.push(name, value, Op::Binary { kind, a, b, bc }, &[a, b])
    }

    /// Element-wise sum; a rank-0 operand broadcasts.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let (name, f): (&'static str, fn(f64) -> f64) = match kind {
            Unary::Relu => ("relu", |x| x.max(0.0)),
            Unary::Tanh => ("tanh", f64::tanh),
            Unary::Sigmoid => ("sigmoid", sigmoid),
            Unary::Softplus => ("softplus", softplus),
            Unary::Ln => ("ln", f64::ln),
        };
        let value = self.value(a).map(f);
        self.push(name, value, Op::Unary { kind, a }, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow for large `|x|`.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Softplus, a)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Ln, a)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * factor);
        self.push("scale", value, Op::Scale { a, factor }, &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + s);
        self.push("add_scalar", value, Op::AddScalar { a }, &[a])
    }

    /// Clips into `[lo, hi]`; the gradient is zero where clipping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push("clamp", value, Op::Clamp { a, lo, hi }, &[a])
    }

    /// Column-wise concatenation `[a; b]` of `[m, p]` and `[m, q]`.
    /// Two rank-1 inputs give a rank-1 result.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        let (Some((m, p)), Some((mb, q))) = (av.dims2(), bv.dims2()) else {
            return Err(Error::shape("concat", av.shape(), bv.shape()));
        };
        let both_vectors = av.rank() <= 1 && bv.rank() <= 1;
        if m != mb && !(bv.is_empty() || av.is_empty()) {
            return Err(Error::shape("concat", av.shape(), bv.shape()));
        }
        let m = if av.is_empty() { mb } else { m };
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            if p > 0 {
                data.extend_from_slice(av.row(i));
            }
            if q > 0 {
                data.extend_from_slice(bv.row(i));
            }
        }
        let shape = if both_vectors {
            vec![p + q]
        } else {
            vec![m, p + q]
        };
        let value = Tensor::new(shape, data)?;
        self.push("concat", value, Op::Concat { a, b }, &[a, b])
    }

    /// Vertical stacking of matrices with equal column counts.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.value(p).cols(),
            None => return Err(Error::InvalidArgument("stack_rows of nothing".into())),
        };
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols || v.rank() > 2 {
                return Err(Error::shape("stack_rows", &[rows, cols], v.shape()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        self.push(
            "stack_rows",
            value,
            Op::StackRows {
                parts: parts.to_vec(),
            },
            parts,
        )
    }

    /// Adds the bias vector `[n]` to every row of `a: [m, n]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.mat_dims("add_bias", a)?;
        let bv = self.value(bias);
        if bv.shape() != [n] {
            return Err(Error::shape("add_bias", self.shape(a), bv.shape()));
        }
        let b = bv.data().to_vec();
        let mut value = self.value(a).clone();
        for i in 0..m {
            for (x, y) in value.data_mut()[i * n..(i + 1) * n].iter_mut().zip(&b) {
                *x += y;
            }
        }
        self.push("add_bias", value, Op::AddBias { a, bias }, &[a, bias])
    }

    /// Selects rows of `a`; the result has shape `[index.len(), cols]`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let index: Vec<Option<usize>> = index.iter().map(|&i| Some(i)).collect();
        self.gather_rows_or_zero(a, index)
    }

    /// Like [`Trace::gather_rows`]; `None` entries yield zero rows.
    pub fn gather_rows_or_zero(&mut self, a: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let (m, n) = self.mat_dims("gather_rows", a)?;
        let av = self.value(a);
        let mut data = Vec::with_capacity(index.len() * n);
        for ix in &index {
            match *ix {
                Some(i) if i < m => data.extend_from_slice(av.row(i)),
                Some(i) => {
                    return Err(Error::InvalidArgument(format!(
                        "row {i} out of range for {m} rows"
                    )))
                }
                None => data.extend(std::iter::repeat_n(0.0, n)),
            }
        }
        let value = Tensor::matrix(index.len(), n, data)?;
        self.push("gather_rows", value, Op::Gather { a, index }, &[a])
    }

    /// Inverted dropout: in training, zero each entry with probability `p`
    /// and scale survivors by `1/(1-p)`. Identity otherwise.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let av = self.value(a);
        let mask: Vec<f64> = (0..av.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push("dropout", value, Op::Dropout { a, mask }, &[a])
    }

    /// Sum of all entries as a rank-0 scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum { a }, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(Error::InvalidArgument("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(av.sum() / av.len() as f64);
        self.push("mean", value, Op::Mean { a }, &[a])
    }

    /// Per-row sums of `[m, n]`, shape `[m]`.
    pub fn rowsum(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let Some((m, n)) = av.dims2() else {
            return Err(Error::shape("rowsum", av.shape(), &[0, 0]));
        };
        let data = (0..m)
            .map(|i| av.data()[i * n..(i + 1) * n].iter().sum())
            .collect();
        let value = Tensor::vector(data);
        self.push("rowsum", value, Op::RowSum { a }, &[a])
    }

    /// Column `col` of `[m, n]` as a vector `[m]`.
    pub fn select_col(&mut self, a: Var, col: usize) -> Result<Var> {
        let (m, n) = self.mat_dims("select_col", a)?;
        if col >= n {
            return Err(Error::shape("select_col", self.shape(a), &[m, col + 1]));
        }
        let av = self.value(a);
        let value = Tensor::vector((0..m).map(|i| av.data()[i * n + col]).collect());
        self.push("select_col", value, Op::SelectCol { a, col }, &[a])
    }

    /// Reverse sweep from a scalar `loss`, seeded with 1.0.
    ///
    /// Every registered parameter receives a gradient of its own shape,
    /// zero when the loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
        }

        for &p in &self.params {
            if grads[p.0].is_none() {
                grads[p.0] = Some(Tensor::zeros_like(self.value(p)));
            }
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, trans_b } => {
                let av = self.value(a);
                let bv = self.value(b);
                let (m, k) = (av.rows(), av.cols());
                let n = out.cols();
                let gd = g.data();
                if self.wants(a) {
                    let mut ga = vec![0.0; m * k];
                    if trans_b {
                        // dA = G · B, B: [n, k]
                        gemm(m, n, k, gd, (n as isize, 1), bv.data(), (k as isize, 1), 0.0, &mut ga);
                    } else {
                        // dA = G · Bᵀ, B: [k, n]
                        gemm(m, n, k, gd, (n as isize, 1), bv.data(), (1, n as isize), 0.0, &mut ga);
                    }
                    self.accumulate(grads, a, Tensor::matrix(m, k, ga)?);
                }
                if self.wants(b) {
                    if trans_b {
                        // dB = Gᵀ · A, shape [n, k]
                        let mut gb = vec![0.0; n * k];
                        gemm(n, m, k, gd, (1, n as isize), av.data(), (k as isize, 1), 0.0, &mut gb);
                        self.accumulate(grads, b, Tensor::matrix(n, k, gb)?);
                    } else {
                        // dB = Aᵀ · G, shape [k, n]
                        let mut gb = vec![0.0; k * n];
                        gemm(k, m, n, av.data(), (1, k as isize), gd, (n as isize, 1), 0.0, &mut gb);
                        self.accumulate(grads, b, Tensor::matrix(k, n, gb)?);
                    }
                }
            }
            &Op::Binary { kind, a, b, bc } => {
                let av = self.value(a);
                let bv = self.value(b);
                let at = |t: &Tensor, i: usize, side: Broadcast| -> f64 {
                    if bc == side {
                        t.data()[0]
                    } else {
                        t.data()[i]
                    }
                };
                let n = g.len();
                let mut ga = vec![0.0; n];
                let mut gb = vec![0.0; n];
                for i in 0..n {
                    let x = at(av, i, Broadcast::Left);
                    let y = at(bv, i, Broadcast::Right);
                    let gi = g.data()[i];
                    let (da, db) = match kind {
                        Binary::Add => (gi, gi),
                        Binary::Sub => (gi, -gi),
                        Binary::Mul => (gi * y, gi * x),
                        Binary::Div => (gi / y, -gi * x / (y * y)),
                    };
                    ga[i] = da;
                    gb[i] = db;
                }
                let collapse = |v: Vec<f64>, shape: &[usize], is_bc: bool| -> Result<Tensor> {
                    if is_bc {
                        Ok(Tensor::scalar(v.iter().sum()))
                    } else {
                        Tensor::new(shape.to_vec(), v)
                    }
                };
                if self.wants(a) {
                    let t = collapse(ga, out.shape(), bc == Broadcast::Left)?;
                    self.accumulate(grads, a, t);
                }
                if self.wants(b) {
                    let t = collapse(gb, out.shape(), bc == Broadcast::Right)?;
                    self.accumulate(grads, b, t);
                }
            }
            &Op::Unary { kind, a } => {
                let x = self.value(a).data();
                let y = out.data();
                let data = (0..g.len())
                    .map(|i| {
                        let d = match kind {
                            Unary::Relu => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Tanh => 1.0 - y[i] * y[i],
                            Unary::Sigmoid => y[i] * (1.0 - y[i]),
                            Unary::Softplus => sigmoid(x[i]),
                            Unary::Ln => 1.0 / x[i],
                        };
                        g.data()[i] * d
                    })
                    .collect();
                self.accumulate(grads, a, Tensor::new(out.shape().to_vec(), data)?);
            }
            &Op::Scale { a, factor } => {
                self.accumulate(grads, a, g.map(|v| v * factor));
            }
            &Op::AddScalar { a } => {
                self.accumulate(grads, a, g.clone());
            }
            &Op::Clamp { a, lo, hi } => {
                let x = self.value(a).data();
                let data = g
                    .data()
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi >= lo && xi <= hi { gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, a, Tensor::new(out.shape().to_vec(), data)?);
            }
            &Op::Concat { a, b } => {
                let av = self.value(a);
                let bv = self.value(b);
                let p = av.cols();
                let q = bv.cols();
                let m = out.rows();
                let w = p + q;
                if self.wants(a) {
                    let mut d = Vec::with_capacity(av.len());
                    if !av.is_empty() {
                        for i in 0..m {
                            d.extend_from_slice(&g.data()[i * w..i * w + p]);
                        }
                    }
                    self.accumulate(grads, a, Tensor::new(av.shape().to_vec(), d)?);
                }
                if self.wants(b) {
                    let mut d = Vec::with_capacity(bv.len());
                    if !bv.is_empty() {
                        for i in 0..m {
                            d.extend_from_slice(&g.data()[i * w + p..(i + 1) * w]);
                        }
                    }
                    self.accumulate(grads, b, Tensor::new(bv.shape().to_vec(), d)?);
                }
            }
            Op::StackRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let len = pv.len();
                    if self.wants(p) {
                        let d = g.data()[offset..offset + len].to_vec();
                        self.accumulate(grads, p, Tensor::new(pv.shape().to_vec(), d)?);
                    }
                    offset += len;
                }
            }
            &Op::AddBias { a, bias } => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.clone());
                }
                if self.wants(bias) {
                    let (m, n) = (out.rows(), out.cols());
                    let mut gb = vec![0.0; n];
                    for i in 0..m {
                        for (acc, v) in gb.iter_mut().zip(&g.data()[i * n..(i + 1) * n]) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, bias, Tensor::vector(gb));
                }
            }
            Op::Gather { a, index } => {
                let av = self.value(*a);
                let n = av.cols();
                let mut ga = Tensor::zeros_like(av);
                for (r, ix) in index.iter().enumerate() {
                    if let Some(i) = *ix {
                        let dst = &mut ga.data_mut()[i * n..(i + 1) * n];
                        for (d, s) in dst.iter_mut().zip(&g.data()[r * n..(r + 1) * n]) {
                            *d += s;
                        }
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Dropout { a, mask } => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                self.accumulate(grads, *a, Tensor::new(out.shape().to_vec(), data)?);
            }
            &Op::Sum { a } => {
                let gv = g.data()[0];
                self.accumulate(grads, a, Tensor::full(self.shape(a).to_vec(), gv));
            }
            &Op::Mean { a } => {
                let n = self.value(a).len() as f64;
                let gv = g.data()[0] / n;
                self.accumulate(grads, a, Tensor::full(self.shape(a).to_vec(), gv));
            }
            &Op::RowSum { a } => {
                let av = self.value(a);
                let n = av.cols();
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&gi| std::iter::repeat_n(gi, n))
                    .collect();
                self.accumulate(grads, a, Tensor::new(av.shape().to_vec(), data)?);
            }
            Op::SpMM { a, b } => {
                let n = out.cols();
                let gb = a.t_mul_dense(g.data(), n);
                self.accumulate(grads, *b, Tensor::matrix(a.cols(), n, gb)?);
            }
            &Op::SelectCol { a, col } => {
                let av = self.value(a);
                let n = av.cols();
                let mut ga = Tensor::zeros_like(av);
                for (i, gi) in g.data().iter().enumerate() {
                    ga.data_mut()[i * n + col] = *gi;
                }
                self.accumulate(grads, a, ga);
            }
        }
        Ok(())
    }
}

/// Logistic function, stable for large negative inputs.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` as `max(x, 0) + ln(1 + e^{-|x|})`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
