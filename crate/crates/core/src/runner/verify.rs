//! Artifact re-hashing and the fast invariant suite.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exo::{lpf_step, scale_torque, ExoPipelineConfig, ExoPipelineState, REFERENCE_MASS};
use crate::net::{gradient_check, DenseCache, DenseNet, Head, NetError, TcnCache, TcnConfig, TcnNet};

use super::manifest::RunManifest;
use super::RunError;

pub type DenseBackward =
    fn(&DenseNet<f64>, &DenseCache<f64>, ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>), NetError>;
pub type TcnBackward = fn(&TcnNet<f64>, &TcnCache<f64>, &[f64]) -> Result<(Vec<f64>, Vec<f64>), NetError>;

/// Backward passes checked by the gradient invariant.
#[derive(Clone, Copy)]
pub struct GradientHooks {
    pub dense: DenseBackward,
    pub tcn: TcnBackward,
}

impl Default for GradientHooks {
    fn default() -> Self {
        GradientHooks { dense: |n, c, g| n.backward(c, g), tcn: |n, c, g| n.backward(c, g) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> InvariantCheck {
    InvariantCheck { name, passed, detail }
}

fn filter_check() -> InvariantCheck {
    let alpha = 0.05;
    let mut y = 0.0;
    for _ in 0..10 {
        y = lpf_step(y, 1.0, alpha);
    }
    let step_err = (y - (1.0 - 0.95f64.powi(10))).abs();
    let cfg = ExoPipelineConfig::default();
    let n = (20.0 * cfg.tau_lpf / cfg.dt).round() as usize;
    let mut y = 0.0;
    for _ in 0..n {
        y = lpf_step(y, 1.0, cfg.alpha());
    }
    let dc_err = (y - 1.0).abs();
    check("filter", step_err < 1e-12 && dc_err < 1e-6, format!("step error {step_err:e}, dc error {dc_err:e}"))
}

fn clip_check(seed: u64) -> InvariantCheck {
    let cfg = ExoPipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut peak, mut jump) = (0.0f64, 0.0f64);
    for _ in 0..2_000 {
        let mut s = ExoPipelineState::default();
        let scale = rng.random_range(0.1..100.0);
        for _ in 0..50 {
            let prev = s.u_prev_cmd;
            s.command(rng.random_range(-scale..scale), &cfg);
            jump = jump.max((s.u_prev_cmd - prev).abs());
            peak = peak.max(s.advance(&cfg).abs());
        }
    }
    let ok = peak <= cfg.t_max && jump <= cfg.rate_limit + 1e-12;
    check("clip", ok, format!("peak torque {peak:.4} Nm, largest command change {jump:.4}"))
}

fn scaling_check(seed: u64) -> InvariantCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let u = rng.random_range(-12.0..12.0);
        let m = rng.random_range(40.0..120.0);
        worst = worst.max((scale_torque(u, m) - u * (m / REFERENCE_MASS)).abs());
        worst = worst.max((scale_torque(u, REFERENCE_MASS) - u).abs());
    }
    check("scaling", worst == 0.0, format!("largest deviation {worst:e}"))
}

const GRAD_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn dense_grad_error(sizes: &[usize], head: Head, rng: &mut ChaCha8Rng, backward: DenseBackward) -> Result<f64, NetError> {
    let net = DenseNet::<f64>::new(sizes, head, rng)?;
    let x = Array2::from_shape_fn((3, sizes[0]), |_| rng.random_range(-1.0..1.0));
    let c = Array2::from_shape_fn((3, *sizes.last().expect("sizes")), |_| rng.random_range(-1.0..1.0));
    let (_, cache) = net.forward(x.view())?;
    let (grads, _) = backward(&net, &cache, c.view())?;
    let mut probe = net.clone();
    let r = gradient_check(net.params(), &grads, GRAD_H, |p| {
        probe.set_params(p).expect("same length");
        let (y, cache) = probe.forward(x.view()).expect("shapes fixed");
        ((&y * &c).sum(), DenseNet::relu_mask(&cache))
    });
    Ok(r.max_relative_error)
}

fn tcn_grad_error(rng: &mut ChaCha8Rng, backward: TcnBackward) -> Result<f64, NetError> {
    let net = TcnNet::<f64>::new(TcnConfig { channels: 3, kernel: 3, dilations: vec![1, 2] }, rng)?;
    let x: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, cache) = net.forward_sequence(&x);
    let (grads, _) = backward(&net, &cache, &c)?;
    let mut probe = net.clone();
    let r = gradient_check(net.params(), &grads, GRAD_H, |p| {
        probe.set_params(p).expect("same length");
        let (y, cache) = probe.forward_sequence(&x);
        (y.iter().zip(&c).map(|(a, b)| a * b).sum(), TcnNet::relu_mask(&cache))
    });
    Ok(r.max_relative_error)
}

fn gradient_invariant(seed: u64, hooks: &GradientHooks) -> InvariantCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut run = || -> Result<(), NetError> {
        for _ in 0..4 {
            worst = worst.max(dense_grad_error(&[6, 10, 10, 5, 4], Head::Gaussian { action_dim: 2 }, &mut rng, hooks.dense)?);
            worst = worst.max(dense_grad_error(&[7, 10, 10, 5, 1], Head::Linear, &mut rng, hooks.dense)?);
            worst = worst.max(tcn_grad_error(&mut rng, hooks.tcn)?);
        }
        Ok(())
    };
    match run() {
        Ok(()) => check("gradient", worst < GRAD_TOL, format!("max relative error {worst:e}")),
        Err(e) => check("gradient", false, e.to_string()),
    }
}

/// Filter, clip, scaling and gradient invariants.
pub fn invariant_suite(hooks: &GradientHooks) -> Vec<InvariantCheck> {
    vec![filter_check(), clip_check(11), scaling_check(12), gradient_invariant(13, hooks)]
}

/// Checks every manifest entry, then the invariant suite.
pub fn verify_run(dir: &Path, hooks: &GradientHooks) -> Result<Vec<InvariantCheck>, RunError> {
    RunManifest::load(dir)?.check(dir)?;
    let checks = invariant_suite(hooks);
    if let Some(bad) = checks.iter().find(|c| !c.passed) {
        return Err(RunError::VerifyMismatch(format!("invariant `{}` failed: {}", bad.name, bad.detail)));
    }
    Ok(checks)
}
