use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

use super::params::ParamStore;

/// Adam optimizer state: first/second moment estimates per parameter, the
/// step counter, and the hyperparameters including the per-epoch learning
/// rate decay factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub m: BTreeMap<String, Vec<Scalar>>,
    pub v: BTreeMap<String, Vec<Scalar>>,
    pub t: u64,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub eps: Scalar,
    pub lr: Scalar,
    pub lr_decay: Scalar,
}

impl AdamState {
    pub fn new(lr: Scalar, lr_decay: Scalar) -> Self {
        Self {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
            lr_decay,
        }
    }

    /// Multiply the learning rate by the decay factor (called once per epoch).
    pub fn decay_lr(&mut self) {
        self.lr *= self.lr_decay;
    }
}

/// One bias-corrected Adam update over every parameter in the store.
/// Rejects non-finite gradients, naming the offending parameter.
pub fn adam_step(store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        let grad = grads
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing gradient for `{name}`")))?;
        if !grad.is_finite() {
            return Err(Error::NanGradient(name.clone()));
        }
    }

    store.adam.t += 1;
    let t = store.adam.t;
    let (beta1, beta2) = (store.adam.beta1, store.adam.beta2);
    let (eps, lr) = (store.adam.eps, store.adam.lr);
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);

    for name in &names {
        let grad = &grads[name];
        let n = grad.numel();
        let m = store
            .adam
            .m
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; n]);
        let v = store
            .adam
            .v
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; n]);
        debug_assert_eq!(m.len(), n, "moment shape for `{name}`");

        // Two passes keep the borrow checker happy: moments first, then data.
        for ((mi, vi), gi) in m.iter_mut().zip(v.iter_mut()).zip(grad.data()) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let m = store.adam.m[name].clone();
        let v = store.adam.v[name].clone();
        let tensor = store.get_mut(name);
        for ((p, mi), vi) in tensor.data_mut().iter_mut().zip(&m).zip(&v) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
