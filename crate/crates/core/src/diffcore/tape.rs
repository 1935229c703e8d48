use std::collections::BTreeMap;

use super::tensor::{gemm, gemm_nt, gemm_tn};
use super::{DiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifier of a trainable parameter; assigned by the owner of the
/// parameter storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Square(Var),
    Sqrt(Var),
    Abs(Var),
    Softplus(Var),
    Scale(Var, f64),
    AddScalar(Var),
    MaxOf {
        inputs: Vec<Var>,
        argmax: Vec<u32>,
    },
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Maxout {
        x: Var,
        pieces: Vec<(Var, Var)>,
        argmax: Vec<u32>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    LogSoftmax(Var),
    Softmax(Var),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    StopGradient,
    Resample {
        x: Var,
        noise: Vec<f64>,
        mean: Vec<f64>,
        std: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Define-by-run record of primitive operations.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the backward pass is a single reverse sweep.
/// Every forward op checks its output for NaN/Inf and fails with
/// [`DiffError::NonFinite`] instead of recording a poisoned value.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
    kink_margin: f64,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` when the loss
    /// does not depend on it.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`, materialising zeros when absent.
    pub fn wrt_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        self.wrt(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn into_param_map(mut self) -> GradientMap {
        let mut map = BTreeMap::new();
        for &(id, node) in &self.params {
            if let Some(g) = self.grads[node].take() {
                match map.entry(id) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(g);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        let acc: &mut Tensor = e.get_mut();
                        acc.add_assign(&g);
                    }
                }
            }
        }
        GradientMap(map)
    }
}

/// Parameter id → ∂loss/∂parameter. A missing entry means a zero gradient.
#[derive(Debug, Default, Clone)]
pub struct GradientMap(BTreeMap<ParamId, Tensor>);

impl GradientMap {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0.get(&id)
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor) {
        self.0.insert(id, grad);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
    match &mut grads[var.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn shape_err(op: &'static str, detail: String) -> DiffError {
    DiffError::ShapeMismatch { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false, kink_margin: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Smallest distance to a non-differentiable point (ReLU at 0, |x| at 0,
    /// a tie inside an elementwise max) seen by any forward op so far.
    pub fn min_kink_margin(&self) -> f64 {
        self.kink_margin
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var, DiffError> {
        if !value.is_finite() {
            return Err(DiffError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op, requires_grad, param: None });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a trainable parameter leaf.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true, param: Some(id) });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that gradients are tracked for but that is not a
    /// parameter (e.g. an input under a gradient check).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.dims2();
        let (k2, n) = bv.dims2();
        if k != k2 || av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(shape_err("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), bv.data(), &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", Tensor::matrix(m, n, out), Op::MatMul(a, b), rg)
    }

    fn row_broadcast(&self, name: &'static str, a: Var, b: Var) -> Result<(usize, usize), DiffError> {
        let (r, c) = self.value(a).dims2();
        if self.value(b).len() != c {
            return Err(shape_err(name, format!("{:?} with row {:?}", self.value(a).shape(), self.value(b).shape())));
        }
        Ok((r, c))
    }

    /// `a [r×c] + b [c]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (_, c) = self.row_broadcast("add_row", a, b)?;
        let bv = self.value(b).data();
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, &bb) in row.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("add_row", out, Op::AddRow(a, b), rg)
    }

    /// `a [r×c] ⊙ b [c]`, broadcasting `b` over rows.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (_, c) = self.row_broadcast("mul_row", a, b)?;
        let bv = self.value(b).data();
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, &bb) in row.iter_mut().zip(bv) {
                *o *= bb;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("mul_row", out, Op::MulRow(a, b), rg)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("add", out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("sub", out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", out, Op::Mul(a, b), rg)
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, DiffError> {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(name, out, op, rg)
    }

    fn note_kinks(&mut self, a: Var) {
        let m = self.value(a).data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        self.kink_margin = self.kink_margin.min(m);
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        self.note_kinks(a);
        self.unary("relu", a, Op::Relu(a), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn log(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary("log", a, Op::Log(a), f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary("square", a, Op::Square(a), |v| v * v)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary("sqrt", a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, DiffError> {
        self.note_kinks(a);
        self.unary("abs", a, Op::Abs(a), f64::abs)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary("softplus", a, Op::Softplus(a), softplus)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        self.unary("scale", a, Op::Scale(a, c), |v| v * c)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, DiffError> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        self.unary("add_scalar", a, Op::AddScalar(a), |v| v + c)
    }

    fn check_affine(&self, op: &'static str, x: Var, w: Var, b: Var) -> Result<(usize, usize, usize), DiffError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (m, k) = xv.dims2();
        let (k2, n) = wv.dims2();
        if xv.shape().len() != 2 || wv.shape().len() != 2 || k != k2 || bv.len() != n {
            return Err(shape_err(op, format!("{:?} x {:?} + {:?}", xv.shape(), wv.shape(), bv.shape())));
        }
        Ok((m, k, n))
    }

    /// `x·w + b` with `b` broadcast over rows; same result as
    /// `add_row(matmul(x, w), b)` in a single node.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k, n) = self.check_affine("affine", x, w, b)?;
        let mut out = vec![0.0; m * n];
        let bd = self.value(b).data();
        for row in out.chunks_mut(n) {
            row.copy_from_slice(bd);
        }
        gemm(m, k, n, self.value(x).data(), self.value(w).data(), &mut out, true);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push("affine", Tensor::matrix(m, n, out), Op::Affine { x, w, b }, rg)
    }

    /// Elementwise maximum over the affine maps `x·wₖ + bₖ`; equivalent to
    /// [`Tape::max_of`] over [`Tape::affine`] outputs, including tie-breaking.
    pub fn maxout(&mut self, x: Var, pieces: &[(Var, Var)]) -> Result<Var, DiffError> {
        let &(w0, b0) = pieces.first().ok_or_else(|| shape_err("maxout", "no pieces".into()))?;
        let (m, k, n) = self.check_affine("maxout", x, w0, b0)?;
        for &(w, b) in &pieces[1..] {
            if self.check_affine("maxout", x, w, b)? != (m, k, n) {
                return Err(shape_err("maxout", "pieces differ in shape".into()));
            }
        }
        let mut out = vec![f64::NEG_INFINITY; m * n];
        let mut second = vec![f64::NEG_INFINITY; m * n];
        let mut argmax = vec![0u32; m * n];
        let mut scratch = vec![0.0; m * n];
        for (p, &(w, b)) in pieces.iter().enumerate() {
            let bd = self.value(b).data();
            for row in scratch.chunks_mut(n) {
                row.copy_from_slice(bd);
            }
            gemm(m, k, n, self.value(x).data(), self.value(w).data(), &mut scratch, true);
            for i in 0..m * n {
                let v = scratch[i];
                if v > out[i] {
                    second[i] = out[i];
                    out[i] = v;
                    argmax[i] = p as u32;
                } else if v > second[i] {
                    second[i] = v;
                }
            }
        }
        if pieces.len() > 1 {
            let gap = out.iter().zip(&second).fold(f64::INFINITY, |g, (a, b)| g.min(a - b));
            self.kink_margin = self.kink_margin.min(gap);
        }
        let rg = self.rg(x) || pieces.iter().any(|&(w, b)| self.rg(w) || self.rg(b));
        self.push("maxout", Tensor::matrix(m, n, out), Op::Maxout { x, pieces: pieces.to_vec(), argmax }, rg)
    }

    /// Elementwise maximum over same-shaped tensors. Ties resolve to the
    /// lowest input index, which is also where the gradient is routed.
    pub fn max_of(&mut self, inputs: &[Var]) -> Result<Var, DiffError> {
        let first = *inputs.first().ok_or_else(|| shape_err("max_of", "no inputs".into()))?;
        let shape = self.value(first).shape().to_vec();
        if inputs.iter().any(|&v| self.value(v).shape() != shape.as_slice()) {
            return Err(shape_err("max_of", "inputs differ in shape".into()));
        }
        let n = self.value(first).len();
        let mut out = self.value(first).data().to_vec();
        let mut second = vec![f64::NEG_INFINITY; n];
        let mut argmax = vec![0u32; n];
        for (k, &v) in inputs.iter().enumerate().skip(1) {
            let d = self.nodes[v.0].value.data();
            for i in 0..n {
                if d[i] > out[i] {
                    second[i] = out[i];
                    out[i] = d[i];
                    argmax[i] = k as u32;
                } else if d[i] > second[i] {
                    second[i] = d[i];
                }
            }
        }
        if inputs.len() > 1 {
            let m = out.iter().zip(&second).fold(f64::INFINITY, |m, (a, b)| m.min(a - b));
            self.kink_margin = self.kink_margin.min(m);
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        let value = Tensor::new(shape, out)?;
        self.push("max_of", value, Op::MaxOf { inputs: inputs.to_vec(), argmax }, rg)
    }

    /// Training-mode batch normalization over the rows of `x [M×C]`, using
    /// population batch statistics. Gradients flow through the mean and
    /// variance.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, DiffError> {
        let (m, c) = self.value(x).dims2();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(shape_err("batch_norm", format!("{c} columns vs affine {:?}", self.value(gamma).shape())));
        }
        let xv = self.value(x).data();
        let mut mean = vec![0.0; c];
        for row in xv.chunks(c) {
            for (s, &v) in mean.iter_mut().zip(row) {
                *s += v;
            }
        }
        mean.iter_mut().for_each(|s| *s /= m as f64);
        let mut var = vec![0.0; c];
        for row in xv.chunks(c) {
            for ((s, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|s| *s /= m as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; m * c];
        let mut out = vec![0.0; m * c];
        for r in 0..m {
            for j in 0..c {
                let h = (xv[r * c + j] - mean[j]) * inv_std[j];
                xhat[r * c + j] = h;
                out[r * c + j] = g[j] * h + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let value = Tensor::new(self.value(x).shape().to_vec(), out)?;
        self.push("batch_norm", value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, mean, var }, rg)
    }

    /// Batch mean and population variance used by a `batch_norm` node.
    pub fn batch_stats(&self, var: Var) -> Option<(&[f64], &[f64])> {
        match &self.nodes[var.0].op {
            Op::BatchNorm { mean, var, .. } => Some((mean, var)),
            _ => None,
        }
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a);
        let c = v.cols();
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(c) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let value = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.rg(a);
        self.push("log_softmax", value, Op::LogSoftmax(a), rg)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.value(a);
        let c = v.cols();
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(c) {
            let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        let value = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.rg(a);
        self.push("softmax", value, Op::Softmax(a), rg)
    }

    fn reduce(&self, name: &'static str, a: Var, axis: Option<usize>) -> Result<Tensor, DiffError> {
        let v = self.value(a);
        let (r, c) = v.dims2();
        match axis {
            None => Ok(Tensor::scalar(v.sum())),
            Some(0) => {
                let mut out = vec![0.0; c];
                for row in v.data().chunks(c) {
                    for (o, &x) in out.iter_mut().zip(row) {
                        *o += x;
                    }
                }
                Ok(Tensor::from_vec(out))
            }
            Some(1) => {
                let mut out = vec![0.0; r];
                for (o, row) in out.iter_mut().zip(v.data().chunks(c.max(1))) {
                    *o = row.iter().sum();
                }
                Ok(Tensor::from_vec(out))
            }
            Some(ax) => Err(shape_err(name, format!("axis {ax} on {:?}", v.shape()))),
        }
    }

    /// Sum over `axis` (0 = over rows, 1 = over columns) or over everything.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var, DiffError> {
        let out = self.reduce("sum", a, axis)?;
        let rg = self.rg(a);
        self.push("sum", out, Op::Sum(a, axis), rg)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var, DiffError> {
        let (r, c) = self.value(a).dims2();
        let count = match axis {
            None => self.value(a).len(),
            Some(0) => r,
            _ => c,
        };
        let mut out = self.reduce("mean", a, axis)?;
        if count == 0 {
            return Err(shape_err("mean", "empty reduction".into()));
        }
        out.data_mut().iter_mut().for_each(|v| *v /= count as f64);
        let rg = self.rg(a);
        self.push("mean", out, Op::Mean(a, axis), rg)
    }

    /// Concatenates matrices along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, DiffError> {
        let dims: Vec<(usize, usize)> = inputs.iter().map(|&v| self.value(v).dims2()).collect();
        let out = match axis {
            0 => {
                let c = dims.first().map_or(0, |d| d.1);
                if dims.iter().any(|d| d.1 != c) {
                    return Err(shape_err("concat", "column counts differ".into()));
                }
                let data: Vec<f64> = inputs.iter().flat_map(|&v| self.value(v).data().iter().copied()).collect();
                Tensor::matrix(data.len() / c.max(1), c, data)
            }
            1 => {
                let r = dims.first().map_or(0, |d| d.0);
                if dims.iter().any(|d| d.0 != r) {
                    return Err(shape_err("concat", "row counts differ".into()));
                }
                let total: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r * total);
                for row in 0..r {
                    for &v in inputs {
                        data.extend_from_slice(self.value(v).row(row));
                    }
                }
                Tensor::matrix(r, total, data)
            }
            _ => return Err(shape_err("concat", format!("axis {axis}"))),
        };
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push("concat", out, Op::Concat { inputs: inputs.to_vec(), axis }, rg)
    }

    /// Identity in the forward pass; blocks all gradient flow.
    pub fn stop_gradient(&mut self, a: Var) -> Result<Var, DiffError> {
        let out = self.value(a).clone();
        self.push("stop_gradient", out, Op::StopGradient, false)
    }

    /// Per-column Gaussian refit and redraw: `out[j,i] = μᵢ + σᵢ·noise[j,i]`
    /// with `μᵢ`, `σᵢ` the column mean and population std of `x`. The noise
    /// is a constant; gradients reach `x` through `μ` and `σ`.
    pub fn resample(&mut self, x: Var, noise: Tensor) -> Result<Var, DiffError> {
        let xv = self.value(x);
        if xv.shape() != noise.shape() {
            return Err(shape_err("resample", format!("{:?} vs noise {:?}", xv.shape(), noise.shape())));
        }
        let (m, c) = xv.dims2();
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for row in xv.data().chunks(c) {
            for (s, &v) in mean.iter_mut().zip(row) {
                *s += v;
            }
        }
        mean.iter_mut().for_each(|s| *s /= m as f64);
        for row in xv.data().chunks(c) {
            for ((s, &v), &mu) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / m as f64).sqrt());
        let nd = noise.into_data();
        let mut out = vec![0.0; m * c];
        for r in 0..m {
            for j in 0..c {
                out[r * c + j] = mean[j] + std[j] * nd[r * c + j];
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.rg(x);
        self.push("resample", value, Op::Resample { x, noise: nd, mean, std }, rg)
    }

    /// Reverse sweep from a scalar `loss`. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, DiffError> {
        if self.consumed {
            return Err(DiffError::TapeConsumed);
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(DiffError::NotScalar { shape: loss_shape });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(loss_shape, vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, i)))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<(), DiffError> {
        let node = &self.nodes[idx];
        let gd = g.data();
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let like = |v: Var, data: Vec<f64>| Tensor::new(self.value(v).shape().to_vec(), data);
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).cols();
                if want(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm_nt(m, n, k, gd, self.value(*b).data(), &mut da, false);
                    accumulate(grads, *a, like(*a, da)?);
                }
                if want(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm_tn(k, m, n, self.value(*a).data(), gd, &mut db, false);
                    accumulate(grads, *b, like(*b, db)?);
                }
            }
            Op::AddRow(a, b) => {
                let c = self.value(*a).cols();
                if want(*a) {
                    accumulate(grads, *a, like(*a, gd.to_vec())?);
                }
                if want(*b) {
                    let mut db = vec![0.0; c];
                    for row in gd.chunks(c) {
                        for (d, &x) in db.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                    accumulate(grads, *b, like(*b, db)?);
                }
            }
            Op::MulRow(a, b) => {
                let c = self.value(*a).cols();
                let bv = self.value(*b).data();
                if want(*a) {
                    let da = gd.chunks(c).flat_map(|row| row.iter().zip(bv).map(|(x, y)| x * y)).collect();
                    accumulate(grads, *a, like(*a, da)?);
                }
                if want(*b) {
                    let mut db = vec![0.0; c];
                    for (grow, arow) in gd.chunks(c).zip(self.value(*a).data().chunks(c)) {
                        for ((d, &x), &y) in db.iter_mut().zip(grow).zip(arow) {
                            *d += x * y;
                        }
                    }
                    accumulate(grads, *b, like(*b, db)?);
                }
            }
            Op::Add(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if want(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if want(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if want(*a) {
                    accumulate(grads, *a, like(*a, gd.iter().zip(bv).map(|(x, y)| x * y).collect())?);
                }
                if want(*b) {
                    accumulate(grads, *b, like(*b, gd.iter().zip(av).map(|(x, y)| x * y).collect())?);
                }
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                let d = gd.iter().zip(av).map(|(&x, &v)| if v > 0.0 { x } else { 0.0 }).collect();
                accumulate(grads, *a, like(*a, d)?);
            }
            Op::Log(a) => {
                let av = self.value(*a).data();
                accumulate(grads, *a, like(*a, gd.iter().zip(av).map(|(x, v)| x / v).collect())?);
            }
            Op::Exp(a) => {
                let yv = node.value.data();
                accumulate(grads, *a, like(*a, gd.iter().zip(yv).map(|(x, y)| x * y).collect())?);
            }
            Op::Square(a) => {
                let av = self.value(*a).data();
                accumulate(grads, *a, like(*a, gd.iter().zip(av).map(|(x, v)| 2.0 * x * v).collect())?);
            }
            Op::Sqrt(a) => {
                let yv = node.value.data();
                accumulate(grads, *a, like(*a, gd.iter().zip(yv).map(|(x, y)| x / (2.0 * y)).collect())?);
            }
            Op::Abs(a) => {
                let av = self.value(*a).data();
                let d = gd.iter().zip(av).map(|(&x, &v)| if v < 0.0 { -x } else if v > 0.0 { x } else { 0.0 }).collect();
                accumulate(grads, *a, like(*a, d)?);
            }
            Op::Softplus(a) => {
                let av = self.value(*a).data();
                accumulate(grads, *a, like(*a, gd.iter().zip(av).map(|(x, &v)| x * sigmoid(v)).collect())?);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|v| v * c)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Affine { x, w, b } => {
                let (m, k) = self.value(*x).dims2();
                let n = self.value(*w).cols();
                self.affine_backward(gd, *x, *w, *b, m, k, n, grads, None)?;
            }
            Op::Maxout { x, pieces, argmax } => {
                let (m, k) = self.value(*x).dims2();
                let n = self.value(pieces[0].0).cols();
                let mut gk = vec![0.0; m * n];
                let mut dx = want(*x).then(|| vec![0.0; m * k]);
                for (p, &(w, b)) in pieces.iter().enumerate() {
                    let mut any = false;
                    for ((o, &gv), &am) in gk.iter_mut().zip(gd).zip(argmax) {
                        *o = if am as usize == p { gv } else { 0.0 };
                        any |= am as usize == p;
                    }
                    if !any {
                        continue;
                    }
                    self.affine_backward(&gk, *x, w, b, m, k, n, grads, dx.as_deref_mut())?;
                }
                if let Some(dx) = dx {
                    accumulate(grads, *x, like(*x, dx)?);
                }
            }
            Op::MaxOf { inputs, argmax } => {
                for (k, &v) in inputs.iter().enumerate() {
                    if !want(v) {
                        continue;
                    }
                    let d = gd.iter().zip(argmax).map(|(&x, &am)| if am as usize == k { x } else { 0.0 }).collect();
                    accumulate(grads, v, like(v, d)?);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, .. } => {
                let c = inv_std.len();
                let m = xhat.len() / c.max(1);
                let gam = self.value(*gamma).data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for (grow, hrow) in gd.chunks(c).zip(xhat.chunks(c)) {
                    for j in 0..c {
                        sum_g[j] += grow[j];
                        sum_gx[j] += grow[j] * hrow[j];
                    }
                }
                if want(*gamma) {
                    accumulate(grads, *gamma, like(*gamma, sum_gx.clone())?);
                }
                if want(*beta) {
                    accumulate(grads, *beta, like(*beta, sum_g.clone())?);
                }
                if want(*x) {
                    let mf = m as f64;
                    let mut dx = vec![0.0; m * c];
                    for r in 0..m {
                        for j in 0..c {
                            let i = r * c + j;
                            dx[i] = gam[j] * inv_std[j] / mf * (mf * gd[i] - sum_g[j] - xhat[i] * sum_gx[j]);
                        }
                    }
                    accumulate(grads, *x, like(*x, dx)?);
                }
            }
            Op::LogSoftmax(a) => {
                let c = node.value.cols();
                let yv = node.value.data();
                let mut d = vec![0.0; yv.len()];
                for ((drow, grow), yrow) in d.chunks_mut(c).zip(gd.chunks(c)).zip(yv.chunks(c)) {
                    let s: f64 = grow.iter().sum();
                    for j in 0..c {
                        drow[j] = grow[j] - yrow[j].exp() * s;
                    }
                }
                accumulate(grads, *a, like(*a, d)?);
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                let yv = node.value.data();
                let mut d = vec![0.0; yv.len()];
                for ((drow, grow), yrow) in d.chunks_mut(c).zip(gd.chunks(c)).zip(yv.chunks(c)) {
                    let s: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                    for j in 0..c {
                        drow[j] = yrow[j] * (grow[j] - s);
                    }
                }
                accumulate(grads, *a, like(*a, d)?);
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let (r, c) = self.value(*a).dims2();
                let scale = match (&node.op, axis) {
                    (Op::Sum(..), _) => 1.0,
                    (_, None) => 1.0 / (r * c) as f64,
                    (_, Some(0)) => 1.0 / r as f64,
                    _ => 1.0 / c as f64,
                };
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        let up = match axis {
                            None => gd[0],
                            Some(0) => gd[j],
                            _ => gd[i],
                        };
                        d[i * c + j] = up * scale;
                    }
                }
                accumulate(grads, *a, like(*a, d)?);
            }
            Op::Concat { inputs, axis } => {
                let total_cols = node.value.cols();
                let mut offset = 0;
                for &v in inputs {
                    let (r, c) = self.value(v).dims2();
                    if want(v) {
                        let d = if *axis == 0 {
                            gd[offset * total_cols..(offset + r) * total_cols].to_vec()
                        } else {
                            (0..r).flat_map(|i| gd[i * total_cols + offset..i * total_cols + offset + c].iter().copied()).collect()
                        };
                        accumulate(grads, v, like(v, d)?);
                    }
                    offset += if *axis == 0 { r } else { c };
                }
            }
            Op::Resample { x, noise, mean, std } => {
                let c = mean.len();
                let xv = self.value(*x).data();
                let m = xv.len() / c.max(1);
                let mut dmu = vec![0.0; c];
                let mut dsig = vec![0.0; c];
                for (grow, nrow) in gd.chunks(c).zip(noise.chunks(c)) {
                    for j in 0..c {
                        dmu[j] += grow[j];
                        dsig[j] += grow[j] * nrow[j];
                    }
                }
                let mf = m as f64;
                let mut dx = vec![0.0; m * c];
                for r in 0..m {
                    for j in 0..c {
                        let from_sigma = if std[j] > 0.0 { dsig[j] * (xv[r * c + j] - mean[j]) / (mf * std[j]) } else { 0.0 };
                        dx[r * c + j] = dmu[j] / mf + from_sigma;
                    }
                }
                accumulate(grads, *x, like(*x, dx)?);
            }
        }
        Ok(())
    }
}

impl Tape {
    /// Gradients of `x·w + b` given the output gradient `g`. With `dx_into`
    /// the input gradient is added to that buffer instead of being recorded.
    #[allow(clippy::too_many_arguments)]
    fn affine_backward(
        &self,
        g: &[f64],
        x: Var,
        w: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
        grads: &mut [Option<Tensor>],
        dx_into: Option<&mut [f64]>,
    ) -> Result<(), DiffError> {
        let want = |v: Var| self.nodes[v.0].requires_grad;
        if want(w) {
            let mut dw = vec![0.0; k * n];
            gemm_tn(k, m, n, self.value(x).data(), g, &mut dw, false);
            accumulate(grads, w, Tensor::new(self.value(w).shape().to_vec(), dw)?);
        }
        if want(b) {
            let mut db = vec![0.0; n];
            for row in g.chunks(n) {
                for (d, &v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            accumulate(grads, b, Tensor::new(self.value(b).shape().to_vec(), db)?);
        }
        match dx_into {
            Some(buf) => gemm_nt(m, n, k, g, self.value(w).data(), buf, true),
            None if want(x) => {
                let mut dx = vec![0.0; m * k];
                gemm_nt(m, n, k, g, self.value(w).data(), &mut dx, false);
                accumulate(grads, x, Tensor::new(self.value(x).shape().to_vec(), dx)?);
            }
            None => {}
        }
        Ok(())
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !mx.is_finite() {
        return mx;
    }
    mx + row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln()
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
