use std::collections::BTreeMap;

use crate::autodiff::{Gradients, Tensor};
use crate::error::{Error, Result};
use crate::networks::ParamStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

/// First and second moments for one tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One decoupled-decay Adam update of `param` in place. `step` is the
/// 1-based count including this update.
pub fn adamw_step(param: &mut [f64], grad: &[f64], state: &mut Moments, step: u64, lr: f64, hp: &AdamWParams) {
    if state.m.len() != param.len() {
        state.m = vec![0.0; param.len()];
        state.v = vec![0.0; param.len()];
    }
    let bc1 = 1.0 - hp.beta1.powi(step as i32);
    let bc2 = 1.0 - hp.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        param[i] -= lr * hp.weight_decay * param[i];
        param[i] -= lr * mh / (vh.sqrt() + hp.eps);
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub hp: AdamWParams,
    step: u64,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(hp: AdamWParams) -> Self {
        Self {
            hp,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every tensor of `params` with learning rate `lr`; tensors
    /// without a gradient see a zero gradient (decay still applies).
    pub fn step<S: Scalar>(&mut self, params: &mut ParamStore<S>, grads: &Gradients<S>, lr: f64) -> Result<()> {
        self.step += 1;
        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let p = params.get(&name)?;
            let g: Vec<f64> = match grads.get(p) {
                Some(g) => g.data().iter().map(|v| v.as_f64()).collect(),
                None => vec![0.0; p.numel()],
            };
            let mut data: Vec<f64> = p.data().iter().map(|v| v.as_f64()).collect();
            let shape = p.shape().to_vec();
            let st = self.state.entry(name.clone()).or_default();
            adamw_step(&mut data, &g, st, self.step, lr, &self.hp);
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: format!("optimizer update of `{name}`"),
                });
            }
            params.set(&name, Tensor::param(data.into_iter().map(S::lit).collect(), &shape)?)?;
        }
        Ok(())
    }
}
