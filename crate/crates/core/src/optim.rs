//! Adam with bias correction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::model::ParamSet;
use crate::{Error, Result, Tensor};

/// Adam hyper-parameters. `Default` gives the customary
/// `lr = 1e-3, β1 = 0.9, β2 = 0.999, ε = 1e-8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub hyper: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, hyper: AdamConfig) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0, hyper }
    }
}

fn check_finite(grad: &[f64], what: &str) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient of {what}")))
    }
}

/// One Adam update of `param` in place. A non-finite gradient leaves both the
/// parameter and the state untouched.
pub fn adam_step(param: &mut Tensor, grad: &[f64], state: &mut AdamState) -> Result<()> {
    if grad.len() != param.len() || state.m.len() != param.len() {
        return Err(Error::shape(format!(
            "adam: parameter has {} values, gradient {}, state {}",
            param.len(),
            grad.len(),
            state.m.len()
        )));
    }
    check_finite(grad, "parameter")?;
    apply(param.data_mut(), grad, state);
    Ok(())
}

fn apply(param: &mut [f64], grad: &[f64], state: &mut AdamState) {
    let AdamConfig { lr, beta1, beta2, eps } = state.hyper;
    state.t += 1;
    let c1 = 1.0 - math::pow(beta1, state.t as f64);
    let c2 = 1.0 - math::pow(beta2, state.t as f64);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
    }
}

/// Adam over every tensor of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &ParamSet, hyper: AdamConfig) -> Self {
        Adam { states: params.iter().map(|(_, t)| AdamState::new(t.len(), hyper)).collect() }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    /// Updates all parameters, or none of them if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.states.len() || params.len() != self.states.len() {
            return Err(Error::contract("adam: gradient list does not match parameter set"));
        }
        for ((name, t), g) in params.iter().zip(grads) {
            if g.len() != t.len() {
                return Err(Error::shape(format!("adam: gradient for {name} has wrong length")));
            }
            check_finite(g, name)?;
        }
        for ((t, g), s) in params.tensors_mut().zip(grads).zip(&mut self.states) {
            apply(t.data_mut(), g, s);
        }
        Ok(())
    }
}
