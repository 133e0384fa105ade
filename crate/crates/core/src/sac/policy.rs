//! Tanh-squashed diagonal Gaussian policy on top of a [`DenseNet`] whose
//! output holds means followed by log standard deviations.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::net::{DenseCache, DenseNet, NetError, Scalar};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln(1 − tanh²u)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

/// Reparameterized draw `a = tanh(μ + σ ε)` for a batch of observations.
#[derive(Clone, Debug)]
pub struct PolicySample<S: Scalar> {
    pub actions: Array2<S>,
    pub log_prob: Array1<S>,
    noise: Array2<S>,
    log_std: Array2<S>,
    /// Whether the raw log-std was inside the clamp range.
    ls_free: Array2<bool>,
    cache: DenseCache<S>,
}

pub fn sample_policy<S: Scalar, R: Rng + ?Sized>(
    actor: &DenseNet<S>,
    obs: ArrayView2<'_, S>,
    rng: &mut R,
) -> Result<PolicySample<S>, NetError> {
    let dim = actor.output_dim() / 2;
    let noise = Array2::from_shape_simple_fn((obs.nrows(), dim), || S::from_f64(rng.sample::<f64, _>(StandardNormal)));
    sample_policy_with_noise(actor, obs, noise)
}

pub fn sample_policy_with_noise<S: Scalar>(
    actor: &DenseNet<S>,
    obs: ArrayView2<'_, S>,
    noise: Array2<S>,
) -> Result<PolicySample<S>, NetError> {
    let dim = actor.output_dim() / 2;
    if noise.dim() != (obs.nrows(), dim) {
        return Err(NetError::ShapeMismatch(format!("noise {:?} for {} actions", noise.dim(), dim)));
    }
    let (out, cache) = actor.forward(obs)?;
    let raw_ls = out.slice(s![.., dim..]);
    let ls_free = raw_ls.mapv(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(&v.as_f64()));
    let log_std = raw_ls.mapv(|v| S::from_f64(v.as_f64().clamp(LOG_STD_MIN, LOG_STD_MAX)));
    let n = obs.nrows();
    let mut actions = Array2::zeros((n, dim));
    let mut log_prob = Array1::zeros(n);
    for b in 0..n {
        let mut lp = 0.0;
        for j in 0..dim {
            let (mu, ls, eps) = (out[[b, j]].as_f64(), log_std[[b, j]].as_f64(), noise[[b, j]].as_f64());
            let u = mu + ls.exp() * eps;
            actions[[b, j]] = S::from_f64(u.tanh());
            lp += -0.5 * eps * eps - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        }
        log_prob[b] = S::from_f64(lp);
    }
    Ok(PolicySample { actions, log_prob, noise, log_std, ls_free, cache })
}

/// Squashed mean action for one observation.
pub fn deterministic_action<S: Scalar>(actor: &DenseNet<S>, obs: &[S]) -> Result<Vec<S>, NetError> {
    let out = actor.predict_one(obs)?;
    let dim = out.len() / 2;
    Ok(out[..dim].iter().map(|m| m.tanh()).collect())
}

/// Parameter gradients of a loss `L(a, log π)` given its partial
/// derivatives with respect to each sampled action and log-probability.
pub fn policy_backward<S: Scalar>(
    actor: &DenseNet<S>,
    sample: &PolicySample<S>,
    dl_da: ArrayView2<'_, S>,
    dl_dlogp: ArrayView1<'_, S>,
) -> Result<Vec<S>, NetError> {
    let (n, dim) = sample.actions.dim();
    if dl_da.dim() != (n, dim) || dl_dlogp.len() != n {
        return Err(NetError::ShapeMismatch("policy loss gradient".into()));
    }
    let mut g = Array2::zeros((n, 2 * dim));
    let two = S::from_f64(2.0);
    for b in 0..n {
        for j in 0..dim {
            let a = sample.actions[[b, j]];
            let dlp = dl_dlogp[b];
            let du = dl_da[[b, j]] * (S::one() - a * a) + dlp * two * a;
            g[[b, j]] = du;
            if sample.ls_free[[b, j]] {
                let sigma_eps = sample.log_std[[b, j]].exp() * sample.noise[[b, j]];
                g[[b, dim + j]] = du * sigma_eps - dlp;
            }
        }
    }
    Ok(actor.backward(&sample.cache, g.view())?.0)
}
