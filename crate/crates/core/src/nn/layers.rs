use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{DiffError, ParamId, Tape, Tensor, Var};

/// Named parameter tensors owned by one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Puts every parameter on `tape`. With `trainable = false` they enter as
    /// constants, so no gradient work is done for them.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| if trainable { tape.param(ParamId(i), v.clone()) } else { tape.constant(v.clone()) })
            .collect();
        Bound(vars)
    }
}

/// Tape handles for a [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps handles created elsewhere, in [`ParamId`] order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `x·W + b` with `W [in × out]`.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        let w: Vec<f64> = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        let weight = store.add(format!("{name}.weight"), Tensor::matrix(in_dim, out_dim, w));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        tape.affine(x, bound.var(self.weight), bound.var(self.bias))
    }
}

/// Elementwise maximum over `K` affine maps of the same input.
#[derive(Clone, Debug)]
pub struct MaxoutLayer {
    pub pieces: Vec<DenseLayer>,
}

impl MaxoutLayer {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, pieces: usize, std: f64, rng: &mut impl Rng) -> Self {
        let pieces = (0..pieces).map(|k| DenseLayer::new(store, &format!("{name}.piece{k}"), in_dim, out_dim, std, rng)).collect();
        Self { pieces }
    }

    pub fn out_dim(&self) -> usize {
        self.pieces[0].out_dim
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        let pieces: Vec<(Var, Var)> = self.pieces.iter().map(|p| (bound.var(p.weight), bound.var(p.bias))).collect();
        tape.maxout(x, &pieces)
    }
}

/// Batch normalization with learnable affine and running statistics for
/// evaluation mode.
#[derive(Clone, Debug)]
pub struct BatchNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Weight kept on the old running value at each update.
    pub momentum: f64,
}

impl BatchNormLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64, momentum: f64) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[dim], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta, running_mean: vec![0.0; dim], running_var: vec![1.0; dim], eps, momentum }
    }

    pub fn forward(&mut self, tape: &mut Tape, bound: &Bound, x: Var, mode: Mode) -> Result<Var, DiffError> {
        match mode {
            Mode::Train => self.forward_train(tape, bound, x),
            Mode::Eval => self.forward_eval(tape, bound, x),
        }
    }

    /// Normalizes with batch statistics and folds them into the running
    /// averages.
    pub fn forward_train(&mut self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        let y = tape.batch_norm(x, bound.var(self.gamma), bound.var(self.beta), self.eps)?;
        let (mean, var) = tape.batch_stats(y).expect("batch_norm node");
        let m = self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(var) {
            *r = m * *r + (1.0 - m) * b;
        }
        Ok(y)
    }

    /// Normalizes with the running statistics; no batch coupling.
    pub fn forward_eval(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        let g = tape.value(bound.var(self.gamma)).data();
        let b = tape.value(bound.var(self.beta)).data();
        let scale: Vec<f64> = g.iter().zip(&self.running_var).map(|(g, v)| g / (v + self.eps).sqrt()).collect();
        let shift: Vec<f64> = b.iter().zip(&self.running_mean).zip(&scale).map(|((b, m), s)| b - m * s).collect();
        let s = tape.constant(Tensor::from_vec(scale));
        let sh = tape.constant(Tensor::from_vec(shift));
        let y = tape.mul_row(x, s)?;
        tape.add_row(y, sh)
    }
}
