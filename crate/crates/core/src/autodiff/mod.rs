//! Dense reverse-mode automatic differentiation over 2-D f64 tensors.
//!
//! A [`Graph`] records operations in execution order; [`Graph::backward`] walks the
//! record in reverse and returns a fresh [`Grads`] store, so the same graph can be
//! differentiated any number of times without leaking state between passes.

mod optim;

pub use optim::Adam;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const LAYERNORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Handle to a node in a [`Graph`].
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    MulColumn(Var, Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Matrix, inv_std: Vec<f64> },
    Gelu(Var),
    ConcatLast(Var, Var),
    SliceLast(Var, usize),
    Reshape(Var),
    GroupSum(Var, usize),
    RepeatGroups(Var, usize),
    Mean(Var),
    Sum(Var),
    SumSq(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Recording of a computation. Node order is topological by construction.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients from one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Grads {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    /// Gradient of the loss with respect to `v`; zeros when `v` did not influence the loss.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        lhs: vec![a.rows(), a.cols()],
        rhs: vec![b.rows(), b.cols()],
    }
}

/// `C (m x n) += A (m x k) * B (k x n)` with optional transposes via strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    // row-major A is m x k unless transposed (then stored k x m)
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slices are sized by the callers to hold the addressed elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn matmul_values(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    gemm(
        a.rows(),
        a.cols(),
        b.cols(),
        a.as_slice(),
        false,
        b.as_slice(),
        false,
        out.as_mut_slice(),
        0.0,
    );
    out
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn add_into(acc: &mut Option<Matrix>, g: &Matrix) {
    match acc {
        Some(a) => {
            for (x, y) in a.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *x += y;
            }
        }
        None => *acc = Some(g.clone()),
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
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

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = matmul_values(av, bv);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x k` row to every row of an `n x k` input.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(shape_err("add_bias", av, bv));
        }
        let mut out = av.clone();
        let b = bv.row(0).to_vec();
        for i in 0..out.rows() {
            for (o, bj) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bj;
            }
        }
        let rg = self.rg(&[a, bias]);
        Ok(self.push(out, Op::AddBias(a, bias), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Multiplies each row of `a (n x k)` by the matching entry of `c (n x 1)`.
    pub fn mul_column(&mut self, a: Var, c: Var) -> Result<Var> {
        let (av, cv) = (self.value(a), self.value(c));
        if cv.cols() != 1 || cv.rows() != av.rows() {
            return Err(shape_err("mul_column", av, cv));
        }
        let out = Matrix::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)] * cv[(i, 0)]);
        let rg = self.rg(&[a, c]);
        Ok(self.push(out, Op::MulColumn(a, c), rg))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (both `1 x k`).
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let k = xv.cols();
        for p in [gamma, beta] {
            let pv = self.value(p);
            if pv.rows() != 1 || pv.cols() != k {
                return Err(shape_err("layernorm", xv, pv));
            }
        }
        let g = self.value(gamma).row(0).to_vec();
        let b = self.value(beta).row(0).to_vec();
        let mut xhat = Matrix::zeros(xv.rows(), k);
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = Matrix::zeros(xv.rows(), k);
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let mu = row.iter().sum::<f64>() / k as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / k as f64;
            let is = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std.push(is);
            for j in 0..k {
                let h = (row[j] - mu) * is;
                xhat[(i, j)] = h;
                out[(i, j)] = g[j] * h + b[j];
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        let rg = self.rg(&[a]);
        self.push(out, Op::Gelu(a), rg)
    }

    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err("concat_last", av, bv));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let out = Matrix::from_fn(av.rows(), ca + cb, |i, j| {
            if j < ca {
                av[(i, j)]
            } else {
                bv[(i, j - ca)]
            }
        });
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::ConcatLast(a, b), rg))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_last(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start > end || end > av.cols() {
            return Err(Error::Shape {
                op: "slice_last",
                lhs: vec![av.rows(), av.cols()],
                rhs: vec![start, end],
            });
        }
        let out = Matrix::from_fn(av.rows(), end - start, |i, j| av[(i, start + j)]);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SliceLast(a, start), rg))
    }

    /// Reinterprets the row-major buffer with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if rows * cols != av.rows() * av.cols() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: vec![av.rows(), av.cols()],
                rhs: vec![rows, cols],
            });
        }
        let out = Matrix::from_vec(rows, cols, av.as_slice().to_vec())?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Sums consecutive column groups of width `g`: `n x (h*g)` to `n x h`.
    pub fn group_sum(&mut self, a: Var, g: usize) -> Result<Var> {
        let av = self.value(a);
        if g == 0 || av.cols() % g != 0 {
            return Err(Error::Shape {
                op: "group_sum",
                lhs: vec![av.rows(), av.cols()],
                rhs: vec![g],
            });
        }
        let h = av.cols() / g;
        let out = Matrix::from_fn(av.rows(), h, |i, k| av.row(i)[k * g..(k + 1) * g].iter().sum());
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::GroupSum(a, g), rg))
    }

    /// Repeats each column `g` times: `n x h` to `n x (h*g)`.
    pub fn repeat_groups(&mut self, a: Var, g: usize) -> Var {
        let av = self.value(a);
        let out = Matrix::from_fn(av.rows(), av.cols() * g, |i, j| av[(i, j / g)]);
        let rg = self.rg(&[a]);
        self.push(out, Op::RepeatGroups(a, g), rg)
    }

    /// Mean of all entries, as a `1 x 1` tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = (av.rows() * av.cols()).max(1) as f64;
        let s = av.as_slice().iter().sum::<f64>() / n;
        let rg = self.rg(&[a]);
        self.push(Matrix::filled(1, 1, s), Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum::<f64>();
        let rg = self.rg(&[a]);
        self.push(Matrix::filled(1, 1, s), Op::Sum(a), rg)
    }

    pub fn sum_sq(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().map(|v| v * v).sum::<f64>();
        let rg = self.rg(&[a]);
        self.push(Matrix::filled(1, 1, s), Op::SumSq(a), rg)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss(vec![lv.rows(), lv.cols()]));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        // drop gradients of nodes that never required them
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Grads {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, gout: &Matrix, grads: &mut [Option<Matrix>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.wants(*a) {
                    // dA = dC * B^T
                    let mut da = Matrix::zeros(m, k);
                    gemm(m, n, k, gout.as_slice(), false, bv.as_slice(), true, da.as_mut_slice(), 0.0);
                    add_into(&mut grads[a.0], &da);
                }
                if self.wants(*b) {
                    // dB = A^T * dC
                    let mut db = Matrix::zeros(k, n);
                    gemm(k, m, n, av.as_slice(), true, gout.as_slice(), false, db.as_mut_slice(), 0.0);
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    add_into(&mut grads[a.0], gout);
                }
                if self.wants(*b) {
                    add_into(&mut grads[b.0], gout);
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    add_into(&mut grads[a.0], gout);
                }
                if self.wants(*b) {
                    add_into(&mut grads[b.0], &gout.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    add_into(&mut grads[a.0], &zip_map(gout, self.value(*b), |g, y| g * y));
                }
                if self.wants(*b) {
                    add_into(&mut grads[b.0], &zip_map(gout, self.value(*a), |g, x| g * x));
                }
            }
            Op::AddBias(a, bias) => {
                if self.wants(*a) {
                    add_into(&mut grads[a.0], gout);
                }
                if self.wants(*bias) {
                    let mut db = Matrix::zeros(1, gout.cols());
                    for r in gout.row_iter() {
                        for (d, g) in db.row_mut(0).iter_mut().zip(r) {
                            *d += g;
                        }
                    }
                    add_into(&mut grads[bias.0], &db);
                }
            }
            Op::Scale(a, s) => {
                if self.wants(*a) {
                    add_into(&mut grads[a.0], &gout.map(|g| g * s));
                }
            }
            Op::MulColumn(a, c) => {
                let (av, cv) = (self.value(*a), self.value(*c));
                if self.wants(*a) {
                    let da = Matrix::from_fn(av.rows(), av.cols(), |i, j| gout[(i, j)] * cv[(i, 0)]);
                    add_into(&mut grads[a.0], &da);
                }
                if self.wants(*c) {
                    let dc = Matrix::from_fn(cv.rows(), 1, |i, _| {
                        gout.row(i).iter().zip(av.row(i)).map(|(g, x)| g * x).sum()
                    });
                    add_into(&mut grads[c.0], &dc);
                }
            }
            Op::Softmax(a) => {
                if self.wants(*a) {
                    let y = &node.value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), gout.row(i));
                        let s: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for (j, d) in da.row_mut(i).iter_mut().enumerate() {
                            *d = yr[j] * (gr[j] - s);
                        }
                    }
                    add_into(&mut grads[a.0], &da);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let k = xhat.cols();
                let g = self.value(*gamma).row(0);
                if self.wants(*x) {
                    let mut dx = Matrix::zeros(xhat.rows(), k);
                    for i in 0..xhat.rows() {
                        let (h, go) = (xhat.row(i), gout.row(i));
                        let dh: Vec<f64> = go.iter().zip(g).map(|(a, b)| a * b).collect();
                        let m1 = dh.iter().sum::<f64>() / k as f64;
                        let m2 = dh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / k as f64;
                        for (j, d) in dx.row_mut(i).iter_mut().enumerate() {
                            *d = inv_std[i] * (dh[j] - m1 - h[j] * m2);
                        }
                    }
                    add_into(&mut grads[x.0], &dx);
                }
                if self.wants(*gamma) {
                    let mut dg = Matrix::zeros(1, k);
                    for i in 0..xhat.rows() {
                        for j in 0..k {
                            dg[(0, j)] += gout[(i, j)] * xhat[(i, j)];
                        }
                    }
                    add_into(&mut grads[gamma.0], &dg);
                }
                if self.wants(*beta) {
                    let mut db = Matrix::zeros(1, k);
                    for r in gout.row_iter() {
                        for (d, v) in db.row_mut(0).iter_mut().zip(r) {
                            *d += v;
                        }
                    }
                    add_into(&mut grads[beta.0], &db);
                }
            }
            Op::Gelu(a) => {
                if self.wants(*a) {
                    let da = zip_map(gout, self.value(*a), |g, x| g * gelu_grad(x));
                    add_into(&mut grads[a.0], &da);
                }
            }
            Op::ConcatLast(a, b) => {
                let ca = self.value(*a).cols();
                if self.wants(*a) {
                    let da = Matrix::from_fn(gout.rows(), ca, |i, j| gout[(i, j)]);
                    add_into(&mut grads[a.0], &da);
                }
                if self.wants(*b) {
                    let cb = gout.cols() - ca;
                    let db = Matrix::from_fn(gout.rows(), cb, |i, j| gout[(i, ca + j)]);
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::SliceLast(a, start) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let w = gout.cols();
                    let da = Matrix::from_fn(r, c, |i, j| {
                        if j >= *start && j < start + w {
                            gout[(i, j - start)]
                        } else {
                            0.0
                        }
                    });
                    add_into(&mut grads[a.0], &da);
                }
            }
            Op::Reshape(a) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let da = Matrix::from_vec(r, c, gout.as_slice().to_vec()).expect("same size");
                    add_into(&mut grads[a.0], &da);
                }
            }
            Op::GroupSum(a, g) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let da = Matrix::from_fn(r, c, |i, j| gout[(i, j / g)]);
                    add_into(&mut grads[a.0], &da);
                }
            }
            Op::RepeatGroups(a, g) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let da = Matrix::from_fn(r, c, |i, k| gout.row(i)[k * g..(k + 1) * g].iter().sum());
                    add_into(&mut grads[a.0], &da);
                }
            }
            Op::Mean(a) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let s = gout[(0, 0)] / (r * c).max(1) as f64;
                    add_into(&mut grads[a.0], &Matrix::filled(r, c, s));
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    add_into(&mut grads[a.0], &Matrix::filled(r, c, gout[(0, 0)]));
                }
            }
            Op::SumSq(a) => {
                if self.wants(*a) {
                    let s = 2.0 * gout[(0, 0)];
                    add_into(&mut grads[a.0], &self.value(*a).map(|x| s * x));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_example() {
        let mut g = Graph::new();
        let a = g.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.constant(m(&[&[1.0], &[1.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut g = Graph::new();
        let a = g.constant(Matrix::zeros(2, 3));
        let b = g.constant(Matrix::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn softmax_symmetric_and_normalized() {
        let mut g = Graph::new();
        let a = g.constant(m(&[&[0.0, 0.0]]));
        let s = g.softmax(a);
        assert_eq!(g.value(s).as_slice(), &[0.5, 0.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(20, 7, |_, _| rng.random_range(-30.0..30.0));
        let a = g.constant(x);
        let s = g.softmax(a);
        for r in g.value(s).row_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layernorm_of_constant_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::filled(1, 5, 3.7));
        let gamma = g.constant(Matrix::filled(1, 5, 1.0));
        let beta = g.constant(Matrix::zeros(1, 5));
        let y = g.layernorm(x, gamma, beta).unwrap();
        assert!(g.value(y).as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Matrix::filled(1, 1, 3.0));
        let l = g.sum_sq(x);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x)[(0, 0)], 6.0);
    }

    #[test]
    fn detached_param_has_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(Matrix::filled(1, 1, 3.0));
        let unused = g.param(Matrix::filled(2, 2, 1.0));
        let l = g.sum_sq(x);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(unused).as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Matrix::zeros(2, 1));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn repeated_backward_is_identical() {
        let mut g = Graph::new();
        let w = g.param(m(&[&[0.3, -1.2], &[0.7, 0.1]]));
        let x = g.constant(m(&[&[1.0], &[2.0]]));
        let y = g.matmul(w, x).unwrap();
        let t = g.gelu(y);
        let l = g.sum_sq(t);
        let g1 = g.backward(l).unwrap().get(w);
        let g2 = g.backward(l).unwrap().get(w);
        assert_eq!(g1, g2);
    }
}
