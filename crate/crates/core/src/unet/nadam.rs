//! Nesterov-accelerated Adam.

use serde::{Deserialize, Serialize};

use super::tensor::Scalar;
use super::Param;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nadam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Nadam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update of every parameter from its stored gradient.
    ///
    /// With `t` the new step count:
    /// `m = b1 m + (1 - b1) g`, `v = b2 v + (1 - b2) g²`,
    /// `m̂ = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)`,
    /// `v̂ = v / (1 - b2^t)` and `θ -= lr m̂ / (√v̂ + eps)`.
    ///
    /// Non-finite gradients reject the whole step and leave the state intact.
    pub fn step<T: Scalar>(&self, params: &mut [Param<T>], state: &mut NadamState<T>) -> Result<()> {
        if state.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer state for {} tensors, model has {}",
                state.m.len(),
                params.len()
            )));
        }
        for p in params.iter() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
        let t = state.step + 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let c_next = T::of(b1 / (1.0 - b1.powi(t as i32 + 1)));
        let c_now = T::of((1.0 - b1) / (1.0 - b1.powi(t as i32)));
        let c_v = T::of(1.0 / (1.0 - b2.powi(t as i32)));
        let (tb1, tb2) = (T::of(b1), T::of(b2));
        let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
            for (((w, &g), mi), vi) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = tb1 * *mi + ob1 * g;
                *vi = tb2 * *vi + ob2 * g * g;
                let m_hat = c_next * *mi + c_now * g;
                let v_hat = c_v * *vi;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        state.step = t;
        Ok(())
    }
}

/// Moments and step count, one moment vector per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NadamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> NadamState<T> {
    pub fn new(params: &[Param<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> NadamState<U> {
        let conv = |v: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            v.iter()
                .map(|x| x.iter().map(|y| U::of(y.to_f64().expect("finite"))).collect())
                .collect()
        };
        NadamState {
            step: self.step,
            m: conv(&self.m),
            v: conv(&self.v),
        }
    }
}
