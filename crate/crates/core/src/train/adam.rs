//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{ModelParams, ParamId};
use crate::scalar::Scalar;
use crate::train::tape::Gradients;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    m: BTreeMap<ParamId, DenseMatrix<S>>,
    v: BTreeMap<ParamId, DenseMatrix<S>>,
    step: usize,
}

impl<S: Scalar> AdamState<S> {
    pub fn new() -> Self {
        AdamState {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

impl<S: Scalar> Default for AdamState<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// One Adam update over every gradient in `grads`. Rejects non-finite
/// gradients, naming the parameter.
pub fn adam_step<S: Scalar>(
    params: &mut ModelParams<S>,
    grads: &Gradients<S>,
    state: &mut AdamState<S>,
    lr: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let beta1 = S::from_f64_lossy(ADAM_BETA1);
    let beta2 = S::from_f64_lossy(ADAM_BETA2);
    let eps = S::from_f64_lossy(ADAM_EPS);
    let lr = S::from_f64_lossy(lr);
    let bias1 = S::one() - S::from_f64_lossy(ADAM_BETA1.powi(t));
    let bias2 = S::one() - S::from_f64_lossy(ADAM_BETA2.powi(t));

    for (&id, grad) in grads.iter() {
        if !grad.is_finite() {
            return Err(Error::NanGradient {
                param: id.name().to_string(),
            });
        }
        let tensor = params.tensor_mut(id);
        let m = state
            .m
            .entry(id)
            .or_insert_with(|| DenseMatrix::zeros(grad.rows(), grad.cols()));
        let v = state
            .v
            .entry(id)
            .or_insert_with(|| DenseMatrix::zeros(grad.rows(), grad.cols()));
        for ((w, &g), (m_i, v_i)) in tensor
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *m_i = beta1 * *m_i + (S::one() - beta1) * g;
            *v_i = beta2 * *v_i + (S::one() - beta2) * g * g;
            let m_hat = *m_i / bias1;
            let v_hat = *v_i / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
