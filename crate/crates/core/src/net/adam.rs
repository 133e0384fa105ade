use serde::{Deserialize, Serialize};

use super::{NetError, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment accumulators for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<S: Scalar> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step: u64,
    pub lr: f64,
    pub cfg: AdamConfig,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(n: usize, lr: f64, cfg: AdamConfig) -> Self {
        OptimState { m: vec![S::zero(); n], v: vec![S::zero(); n], step: 0, lr, cfg }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Bias-corrected adaptive-moment update at the state's current rate.
pub fn adam_step<S: Scalar>(params: &mut [S], grads: &[S], opt: &mut OptimState<S>) -> Result<(), NetError> {
    if params.len() != grads.len() || params.len() != opt.m.len() || opt.v.len() != opt.m.len() {
        return Err(NetError::ShapeMismatch(format!(
            "params {}, grads {}, moments {}",
            params.len(),
            grads.len(),
            opt.m.len()
        )));
    }
    opt.step += 1;
    let c = opt.cfg;
    let t = opt.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (S::from_f64(c.beta1), S::from_f64(c.beta2));
    let (one_b1, one_b2) = (S::from_f64(1.0 - c.beta1), S::from_f64(1.0 - c.beta2));
    let step = S::from_f64(opt.lr / bc1);
    let inv_bc2 = S::from_f64(1.0 / bc2);
    let eps = S::from_f64(c.eps);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * opt.m[i] + one_b1 * g;
        let v = b2 * opt.v[i] + one_b2 * g * g;
        opt.m[i] = m;
        opt.v[i] = v;
        params[i] = params[i] - step * m / ((v * inv_bc2).sqrt() + eps);
    }
    Ok(())
}
