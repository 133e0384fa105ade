//! Small gradient engine for two fixed architectures: fully connected
//! networks and a causal dilated convolutional network, with analytic
//! backward passes, Adam and a binary checkpoint container.

mod adam;
mod checkpoint;
mod dense;
mod tcn;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use checkpoint::{Checkpoint, CheckpointError, Tensor, CHECKPOINT_MAGIC};
pub use dense::{param_count, DenseCache, DenseNet, Head};
pub use tcn::{TcnCache, TcnConfig, TcnNet, WINDOW_LEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cache was produced by parameter version {cache}, network is at {current}")]
    StaleCache { cache: u64, current: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("window must have {expected} samples, got {got}")]
    WindowLengthMismatch { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
}

/// Floating-point element type of network parameters.
pub trait Scalar:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + num_traits::Float + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Nearest `f32`, used for checkpoint payloads.
    fn as_f32(self) -> f32;
    fn from_f32(x: f32) -> Self;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn as_f32(self) -> f32 {
        self
    }
    fn from_f32(x: f32) -> Self {
        x
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
    fn from_f32(x: f32) -> Self {
        x as f64
    }
}

/// Central finite-difference check of an analytic gradient over every
/// parameter.
///
/// `eval(params)` returns the scalar loss together with a signature of the
/// piecewise-linear regions it visited (for example ReLU masks). Parameters
/// whose `±h` evaluations land in different regions straddle a kink where the
/// derivative does not exist; they are skipped and counted.
pub fn gradient_check<F>(params: &[f64], analytic: &[f64], h: f64, eval: F) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<bool>),
{
    let all: Vec<usize> = (0..params.len()).collect();
    gradient_check_at(params, analytic, &all, h, eval)
}

/// [`gradient_check`] restricted to the listed parameter indices.
pub fn gradient_check_at<F>(params: &[f64], analytic: &[f64], indices: &[usize], h: f64, mut eval: F) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<bool>),
{
    assert_eq!(params.len(), analytic.len());
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    let mut worst_index = None;
    let mut skipped = 0;
    for &i in indices {
        let orig = p[i];
        p[i] = orig + h;
        let (lp, mp) = eval(&p);
        p[i] = orig - h;
        let (lm, mm) = eval(&p);
        p[i] = orig;
        if mp != mm {
            skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > worst {
            worst = err;
            worst_index = Some(i);
        }
    }
    GradCheck { max_relative_error: worst, worst_index, skipped, checked: indices.len() - skipped }
}

/// `|a − b| / max(|a|, |b|)`, with an absolute floor so that two values
/// that are both at rounding-noise level compare as equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        return 0.0;
    }
    (a - b).abs() / scale
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub skipped: usize,
    pub checked: usize,
}
