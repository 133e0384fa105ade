//! Muscle synergies: non-negative matrix factorization by multiplicative
//! updates, basis extraction from activation logs, and expansion of synergy
//! coefficients into muscle excitations.

mod io;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::child_rng;

pub use io::{read_basis_csv, write_basis_csv};

#[derive(Debug, Error)]
pub enum SynergyError {
    #[error("activation matrix contains a negative entry at ({row}, {col})")]
    NegativeInput { row: usize, col: usize },
    #[error("rank {rank} exceeds min(rows, cols) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} strides, found {found}")]
    InsufficientStrides { needed: usize, found: usize },
    #[error("basis file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Relative objective decrease below which iteration stops.
    pub tol: f64,
    pub restarts: usize,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig { rank: 4, max_iters: 2000, tol: 1e-6, restarts: 10 }
    }
}

/// One factorization run.
#[derive(Clone, Debug)]
pub struct NmfFit {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// `‖V − WH‖²_F` at the initial guess and after each iteration.
    pub objective: Vec<f64>,
}

impl NmfFit {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("objective trace is never empty")
    }
}

fn check_nonnegative(v: &Array2<f64>) -> Result<(), SynergyError> {
    for ((row, col), x) in v.indexed_iter() {
        if !(*x >= 0.0) {
            return Err(SynergyError::NegativeInput { row, col });
        }
    }
    Ok(())
}

pub fn frobenius_residual(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let r = v - &w.dot(h);
    r.iter().map(|x| x * x).sum()
}

fn multiplicative(target: &mut Array2<f64>, num: &Array2<f64>, den: &Array2<f64>) {
    ndarray::Zip::from(target).and(num).and(den).for_each(|t, &n, &d| {
        if d > 0.0 {
            *t *= n / d;
        }
    });
}

/// Multiplicative updates from a given non-negative initial guess.
/// Entries that start at zero stay zero.
pub fn nmf_from(
    v: &Array2<f64>,
    w0: Array2<f64>,
    h0: Array2<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<NmfFit, SynergyError> {
    check_nonnegative(v)?;
    let (m, n) = v.dim();
    let rank = w0.ncols();
    if w0.nrows() != m || h0.dim() != (rank, n) {
        return Err(SynergyError::ShapeMismatch(format!(
            "V is {m}x{n}, W0 is {:?}, H0 is {:?}",
            w0.dim(),
            h0.dim()
        )));
    }
    check_nonnegative(&w0)?;
    check_nonnegative(&h0)?;
    let mut w = w0;
    let mut h = h0;
    let mut objective = vec![frobenius_residual(v, &w, &h)];
    for _ in 0..max_iters.max(1) {
        let wt = w.t();
        let num_h = wt.dot(v);
        let den_h = wt.dot(&w).dot(&h);
        multiplicative(&mut h, &num_h, &den_h);
        let ht = h.t();
        let num_w = v.dot(&ht);
        let den_w = w.dot(&h.dot(&ht));
        multiplicative(&mut w, &num_w, &den_w);
        let obj = frobenius_residual(v, &w, &h);
        let prev = *objective.last().unwrap();
        objective.push(obj);
        if prev <= 0.0 || (prev - obj) / prev < tol {
            break;
        }
    }
    Ok(NmfFit { w, h, objective })
}

/// Rescales each W column to unit maximum, pushing the scale into H.
/// All-zero columns are left unchanged.
pub fn normalize_columns(w: &mut Array2<f64>, h: &mut Array2<f64>) {
    for k in 0..w.ncols() {
        let peak = w.column(k).fold(0.0f64, |a, &b| a.max(b));
        if peak > 0.0 {
            w.column_mut(k).mapv_inplace(|x| x / peak);
            h.row_mut(k).mapv_inplace(|x| x * peak);
        }
    }
}

fn random_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    // Uniform on (0, 1].
    Array2::from_shape_fn((rows, cols), |_| 1.0 - rng.random::<f64>())
}

/// Factorizes `V ≈ W H` with `W, H ≥ 0`, keeping the best of several random
/// restarts. W columns are normalized to unit maximum on return.
pub fn nmf(v: &Array2<f64>, cfg: &NmfConfig, seed: u64) -> Result<NmfFit, SynergyError> {
    check_nonnegative(v)?;
    let (m, n) = v.dim();
    if cfg.rank == 0 {
        return Err(SynergyError::ZeroRank);
    }
    if cfg.rank > m.min(n) {
        return Err(SynergyError::RankTooLarge { rank: cfg.rank, limit: m.min(n) });
    }
    let mut best: Option<NmfFit> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = child_rng(seed, &format!("nmf/{restart}"));
        let w0 = random_init(m, cfg.rank, &mut rng);
        let h0 = random_init(cfg.rank, n, &mut rng);
        let fit = nmf_from(v, w0, h0, cfg.max_iters, cfg.tol)?;
        if best.as_ref().is_none_or(|b| fit.final_objective() < b.final_objective()) {
            best = Some(fit);
        }
    }
    let mut fit = best.expect("at least one restart");
    normalize_columns(&mut fit.w, &mut fit.h);
    Ok(fit)
}

/// Variance accounted for: `1 − ‖V − WH‖²_F / ‖V‖²_F`.
pub fn vaf(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64, SynergyError> {
    if w.nrows() != v.nrows() || h.ncols() != v.ncols() || w.ncols() != h.nrows() {
        return Err(SynergyError::ShapeMismatch(format!(
            "V {:?}, W {:?}, H {:?}",
            v.dim(),
            w.dim(),
            h.dim()
        )));
    }
    let total: f64 = v.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Err(SynergyError::ZeroMatrix);
    }
    Ok(1.0 - frobenius_residual(v, w, h) / total)
}

/// Fixed non-negative synergy weights (muscles × rank), each column peaking at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SynergyBasis {
    pub muscles: Vec<String>,
    pub w: Array2<f64>,
    /// Reconstruction quality achieved when the basis was fitted.
    pub vaf: f64,
}

impl SynergyBasis {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_muscles(&self) -> usize {
        self.w.nrows()
    }

    pub fn validate(&self) -> Result<(), SynergyError> {
        if self.rank() == 0 {
            return Err(SynergyError::ZeroRank);
        }
        if self.muscles.len() != self.n_muscles() {
            return Err(SynergyError::LengthMismatch { expected: self.n_muscles(), got: self.muscles.len() });
        }
        check_nonnegative(&self.w)
    }

    /// Identity basis: one synergy per muscle.
    pub fn identity(muscles: Vec<String>) -> Self {
        let n = muscles.len();
        SynergyBasis { muscles, w: Array2::eye(n), vaf: 1.0 }
    }

    /// Hand-built 4-synergy basis for the 8-muscle leg (HFL, GLU, HAM, RF,
    /// VAS, GAS, SOL, TA): weight acceptance, propulsion, early swing and late
    /// swing. Useful before a fitted basis exists.
    pub fn reference_leg() -> Self {
        let muscles = crate::muscle::LEG_MUSCLES.iter().map(|m| m.to_string()).collect();
        #[rustfmt::skip]
        let w = Array2::from_shape_vec((8, 4), vec![
            // acceptance, propulsion, early swing, late swing
            0.0, 0.2, 1.0, 0.0, // HFL
            1.0, 0.0, 0.0, 0.3, // GLU
            0.4, 0.0, 0.0, 1.0, // HAM
            0.3, 0.0, 0.6, 0.0, // RF
            1.0, 0.1, 0.0, 0.2, // VAS
            0.2, 0.8, 0.0, 0.0, // GAS
            0.4, 1.0, 0.0, 0.0, // SOL
            0.3, 0.0, 0.7, 0.6, // TA
        ])
        .expect("static shape");
        SynergyBasis { muscles, w, vaf: f64::NAN }
    }
}

/// `e = clip(W c, 0, 1)`.
pub fn synergy_expand(coeffs: &[f64], basis: &SynergyBasis) -> Result<Vec<f64>, SynergyError> {
    if coeffs.len() != basis.rank() {
        return Err(SynergyError::LengthMismatch { expected: basis.rank(), got: coeffs.len() });
    }
    let c = Array1::from_vec(coeffs.to_vec());
    Ok(basis.w.dot(&c).iter().map(|x| x.clamp(0.0, 1.0)).collect())
}

/// Muscle activations of one leg over time with stride boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    pub muscles: Vec<String>,
    /// muscles × samples, entries in [0, 1].
    pub data: Array2<f64>,
    /// Sample indices of successive heel strikes.
    pub strides: Vec<usize>,
    pub sample_rate: f64,
}

impl ActivationMatrix {
    pub fn stride_count(&self) -> usize {
        self.strides.len().saturating_sub(1)
    }

    /// Columns between the first and last stride boundary.
    pub fn stride_columns(&self) -> Array2<f64> {
        match (self.strides.first(), self.strides.last()) {
            (Some(&a), Some(&b)) if b > a => self.data.slice(ndarray::s![.., a..b.min(self.data.ncols())]).to_owned(),
            _ => Array2::zeros((self.data.nrows(), 0)),
        }
    }
}

pub const MIN_STRIDES: usize = 5;

/// Fits a synergy basis to the strides contained in an activation log.
pub fn extract_basis_from_rollouts(
    logs: &ActivationMatrix,
    cfg: &NmfConfig,
    seed: u64,
) -> Result<SynergyBasis, SynergyError> {
    let found = logs.stride_count();
    if found < MIN_STRIDES {
        return Err(SynergyError::InsufficientStrides { needed: MIN_STRIDES, found });
    }
    let v = logs.stride_columns();
    let fit = nmf(&v, cfg, seed)?;
    let quality = vaf(&v, &fit.w, &fit.h)?;
    Ok(SynergyBasis { muscles: logs.muscles.clone(), w: fit.w, vaf: quality })
}

/// Concatenates several logs column-wise, shifting stride indices.
pub fn concat_logs(logs: &[ActivationMatrix]) -> Option<ActivationMatrix> {
    let first = logs.first()?;
    let mut strides = Vec::new();
    let mut blocks = Vec::new();
    let mut offset = 0;
    for log in logs {
        let cols = log.stride_columns();
        if cols.ncols() == 0 {
            continue;
        }
        let base = log.strides[0];
        for (k, &s) in log.strides.iter().enumerate() {
            // Stride boundaries of consecutive logs coincide at the seam.
            if k == 0 && !strides.is_empty() {
                continue;
            }
            strides.push(offset + s - base);
        }
        offset += cols.ncols();
        blocks.push(cols);
    }
    if blocks.is_empty() {
        return Some(ActivationMatrix { data: Array2::zeros((first.muscles.len(), 0)), strides: vec![], ..first.clone() });
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let data = ndarray::concatenate(Axis(1), &views).ok()?;
    Some(ActivationMatrix { muscles: first.muscles.clone(), data, strides, sample_rate: first.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_examples() {
        let basis = SynergyBasis::identity(vec!["a".into(), "b".into(), "c".into()]);
        assert_eq!(synergy_expand(&[0.0; 3], &basis).unwrap(), vec![0.0; 3]);
        assert_eq!(synergy_expand(&[0.2, 0.5, 1.0], &basis).unwrap(), vec![0.2, 0.5, 1.0]);
        let two = SynergyBasis { muscles: vec!["a".into()], w: Array2::from_elem((1, 2), 1.0), vaf: 1.0 };
        assert_eq!(synergy_expand(&[0.6, 0.7], &two).unwrap(), vec![1.0]);
        assert!(matches!(synergy_expand(&[0.1], &two), Err(SynergyError::LengthMismatch { .. })));
    }

    #[test]
    fn vaf_edge_cases() {
        let v = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Array2::eye(2);
        assert_eq!(vaf(&v, &w, &v).unwrap(), 1.0);
        assert_eq!(vaf(&v, &w, &Array2::zeros((2, 2))).unwrap(), 0.0);
        assert!(matches!(vaf(&Array2::zeros((2, 2)), &w, &v), Err(SynergyError::ZeroMatrix)));
    }

    #[test]
    fn precondition_errors() {
        let mut v = Array2::from_elem((3, 4), 0.5);
        let cfg = NmfConfig { rank: 4, ..NmfConfig::default() };
        assert!(matches!(nmf(&v, &cfg, 0), Err(SynergyError::RankTooLarge { rank: 4, limit: 3 })));
        v[(1, 2)] = -0.1;
        assert!(matches!(nmf(&v, &NmfConfig::default(), 0), Err(SynergyError::NegativeInput { row: 1, col: 2 })));
    }

    #[test]
    fn reference_basis_is_normalized() {
        let b = SynergyBasis::reference_leg();
        b.validate().unwrap();
        for k in 0..b.rank() {
            assert_eq!(b.w.column(k).fold(0.0f64, |a, &x| a.max(x)), 1.0);
        }
    }

    #[test]
    fn too_few_strides() {
        let logs = ActivationMatrix {
            muscles: vec!["a".into(), "b".into()],
            data: Array2::from_elem((2, 50), 0.3),
            strides: vec![0, 10, 20, 30, 40],
            sample_rate: 100.0,
        };
        assert!(matches!(
            extract_basis_from_rollouts(&logs, &NmfConfig { rank: 1, ..NmfConfig::default() }, 0),
            Err(SynergyError::InsufficientStrides { needed: 5, found: 4 })
        ));
    }
}
