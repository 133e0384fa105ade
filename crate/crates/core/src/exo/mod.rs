//! Exoskeleton command shaping: clamp, rate limit, torque scaling, body-mass
//! scaling, first-order low-pass filtering and final saturation.
//!
//! The stages run in this fixed order:
//!
//! ```text
//! raw ∈ ℝ ──clamp[-1,1]──► rate limit (±c per command) ──×T_max──► ×m/74.5 ──LPF(α)──► saturate ±T_max
//! ```
//!
//! Rate limiting acts on normalized commands each time a new command is
//! issued. Filtering runs once per actuator update, which may be faster than
//! the command rate (commands are then held).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Body mass of the reference model that torque commands are expressed for.
pub const REFERENCE_MASS: f64 = 74.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExoError {
    #[error("filter time step {dt} s is not in (0, tau_lpf = {tau} s]")]
    InvalidTimeConstant { dt: f64, tau: f64 },
    #[error("invalid exoskeleton configuration: {0}")]
    InvalidConfig(String),
}

/// Smoothing coefficient `α = dt / τ_LPF`.
pub fn alpha_from(dt: f64, tau_lpf: f64) -> Result<f64, ExoError> {
    if !(dt > 0.0 && tau_lpf > 0.0 && dt <= tau_lpf) {
        return Err(ExoError::InvalidTimeConstant { dt, tau: tau_lpf });
    }
    Ok(dt / tau_lpf)
}

/// One update of the discrete first-order low-pass filter.
#[inline]
pub fn lpf_step(u_prev: f64, u_cmd: f64, alpha: f64) -> f64 {
    u_prev + alpha * (u_cmd - u_prev)
}

/// `clip(u, u_prev - c, u_prev + c)`.
#[inline]
pub fn rate_limit(u: f64, u_prev: f64, c: f64) -> f64 {
    u.clamp(u_prev - c, u_prev + c)
}

/// Scales a torque expressed for the reference model to a subject of mass `m_subject`.
#[inline]
pub fn scale_torque(u_cmd: f64, m_subject: f64) -> f64 {
    u_cmd * (m_subject / REFERENCE_MASS)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExoPipelineConfig {
    pub tau_lpf: f64,
    /// Filter update interval (s).
    pub dt: f64,
    /// Peak torque (Nm).
    pub t_max: f64,
    /// Rate limit in normalized units per command.
    pub rate_limit: f64,
    pub subject_mass: f64,
}

impl Default for ExoPipelineConfig {
    /// Simulation settings: 200 Hz filter updates, 0.1 s time constant, 12 Nm.
    fn default() -> Self {
        ExoPipelineConfig { tau_lpf: 0.1, dt: 0.005, t_max: 12.0, rate_limit: 0.5, subject_mass: REFERENCE_MASS }
    }
}

impl ExoPipelineConfig {
    /// Hardware settings: 100 Hz, 0.15 s time constant.
    pub fn hardware(subject_mass: f64) -> Self {
        ExoPipelineConfig { tau_lpf: 0.15, dt: 0.01, subject_mass, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ExoError> {
        alpha_from(self.dt, self.tau_lpf)?;
        if !(self.t_max > 0.0) {
            return Err(ExoError::InvalidConfig("t_max must be positive".into()));
        }
        if !(self.rate_limit > 0.0) {
            return Err(ExoError::InvalidConfig("rate limit must be positive".into()));
        }
        if !(self.subject_mass > 0.0) {
            return Err(ExoError::InvalidConfig("subject mass must be positive".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.dt / self.tau_lpf
    }
}

/// Memory of one actuator's pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExoPipelineState {
    /// Last filter output (Nm).
    pub u_prev_filtered: f64,
    /// Last rate-limited command (normalized).
    pub u_prev_cmd: f64,
}

impl ExoPipelineState {
    /// Clamps and rate-limits a new raw command, stores it, and returns it.
    pub fn command(&mut self, raw: f64, cfg: &ExoPipelineConfig) -> f64 {
        let raw = if raw.is_nan() { 0.0 } else { raw.clamp(-1.0, 1.0) };
        self.u_prev_cmd = rate_limit(raw, self.u_prev_cmd, cfg.rate_limit);
        self.u_prev_cmd
    }

    /// One filter update with the held command; returns the applied torque (Nm).
    pub fn advance(&mut self, cfg: &ExoPipelineConfig) -> f64 {
        let target = scale_torque(self.u_prev_cmd * cfg.t_max, cfg.subject_mass);
        let filtered = lpf_step(self.u_prev_filtered, target, cfg.alpha());
        self.u_prev_filtered = filtered.clamp(-cfg.t_max, cfg.t_max);
        self.u_prev_filtered
    }
}

/// Full pipeline for one tick where command and filter rates coincide.
pub fn pipeline_step(raw: f64, state: &ExoPipelineState, cfg: &ExoPipelineConfig) -> (f64, ExoPipelineState) {
    let mut next = *state;
    next.command(raw, cfg);
    let torque = next.advance(cfg);
    (torque, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_values() {
        assert!((alpha_from(0.005, 0.1).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(alpha_from(0.1, 0.1).unwrap(), 1.0);
        assert!((alpha_from(0.01, 0.15).unwrap() - 1.0 / 15.0).abs() < 1e-15);
        assert!(alpha_from(0.2, 0.1).is_err());
        assert!(alpha_from(0.0, 0.1).is_err());
        assert!(alpha_from(-0.01, 0.1).is_err());
    }

    #[test]
    fn filter_and_clip_examples() {
        assert_eq!(lpf_step(0.0, 1.0, 0.05), 0.05);
        assert_eq!(lpf_step(0.3, 0.3, 0.05), 0.3);
        assert_eq!(rate_limit(2.0, 1.0, 0.5), 1.5);
        assert_eq!(rate_limit(1.1, 1.0, 0.5), 1.1);
        assert_eq!(rate_limit(-2.0, 0.0, 0.5), -0.5);
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_torque(1.0, 74.5), 1.0);
        assert_eq!(scale_torque(1.0, 37.25), 0.5);
        assert!((scale_torque(-6.0, 74.5 * 1.2) + 7.2).abs() < 1e-12);
    }

    #[test]
    fn zero_command_stays_zero() {
        let cfg = ExoPipelineConfig::default();
        let mut st = ExoPipelineState::default();
        for _ in 0..1000 {
            let (u, next) = pipeline_step(0.0, &st, &cfg);
            assert_eq!(u, 0.0);
            st = next;
        }
    }

    #[test]
    fn held_full_command_rises_monotonically_below_peak() {
        let cfg = ExoPipelineConfig::default();
        let mut st = ExoPipelineState::default();
        let mut prev = 0.0;
        for _ in 0..2000 {
            let (u, next) = pipeline_step(1.0, &st, &cfg);
            assert!(u >= prev && u <= 12.0);
            prev = u;
            st = next;
        }
        assert!((prev - 12.0).abs() < 1e-6);
    }

    #[test]
    fn alternating_command_moves_by_rate_limit() {
        let cfg = ExoPipelineConfig::default();
        let mut st = ExoPipelineState::default();
        let mut prev_cmd = 0.0;
        for k in 0..50 {
            let raw = if k % 2 == 0 { 1.0 } else { -1.0 };
            let (_, next) = pipeline_step(raw, &st, &cfg);
            assert!(((next.u_prev_cmd - prev_cmd).abs() - 0.5).abs() < 1e-15);
            prev_cmd = next.u_prev_cmd;
            st = next;
        }
    }
}
