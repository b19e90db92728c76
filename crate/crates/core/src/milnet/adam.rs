use super::model::ModelParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam moments plus hyperparameters. Weight decay is decoupled: weights
/// shrink by `(1 − lr·wd)` before the moment update.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    first_moment: ModelParams<T>,
    second_moment: ModelParams<T>,
    step: u64,
    pub lr: T,
    pub weight_decay: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>, lr: T, weight_decay: T) -> Self {
        let dims = params.dims();
        Self {
            first_moment: ModelParams::zeros(dims),
            second_moment: ModelParams::zeros(dims),
            step: 0,
            lr,
            weight_decay,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) {
        return Err(Error::Shape(
            "optimizer shapes do not match parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = T::one() - b1.powi(t);
    let bias2 = T::one() - b2.powi(t);
    let decay = T::one() - state.lr * state.weight_decay;
    let lr = state.lr;
    let eps = state.eps;

    let grads = grads.buffers();
    let m = state.first_moment.buffers_mut();
    let v = state.second_moment.buffers_mut();
    for (((p, g), m), v) in params.buffers_mut().into_iter().zip(grads).zip(m).zip(v) {
        for i in 0..p.len() {
            p[i] = p[i] * decay;
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
