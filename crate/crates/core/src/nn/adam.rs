use super::layers::ParamStore;
use super::NnError;
use crate::diffcore::{GradientMap, ParamId, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let m: Vec<Tensor> = params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self { config, v: m.clone(), m, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, id: ParamId) -> &Tensor {
        &self.m[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Tensor {
        &self.v[id.0]
    }

    /// One update. Parameters without an entry in `grads` see a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradientMap) -> Result<(), NnError> {
        for (id, g) in grads.iter() {
            let p = params.get(id);
            if g.shape() != p.shape() {
                return Err(NnError::GradShape { name: params.name(id).into(), want: p.shape().to_vec(), got: g.shape().to_vec() });
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient(params.name(id).into()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let id = ParamId(i);
            let grad = grads.get(id);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let p = params.get_mut(id).data_mut();
            for j in 0..p.len() {
                let gj = grad.map_or(0.0, |g| g.data()[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
