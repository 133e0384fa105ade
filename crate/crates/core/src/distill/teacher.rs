//! Teachers that drive the walking environment: a trained policy or a
//! scripted phase oscillator on the harness-carried plant.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dynamics::BaseMode;
use crate::env::{ActionVector, Env, EnvConfig};
use crate::sac::WalkPolicy;

use super::DistillError;

pub trait Teacher {
    /// Called after every environment reset.
    fn reset(&mut self, env: &Env);
    fn act(&mut self, env: &Env, obs: &[f64]) -> Result<ActionVector, DistillError>;
    /// Adapts the base environment configuration to what this teacher needs.
    fn env_config(&self, base: &EnvConfig) -> EnvConfig {
        base.clone()
    }
}

/// A trained walking policy acting deterministically.
#[derive(Clone)]
pub struct PolicyTeacher {
    pub policy: WalkPolicy,
}

impl Teacher for PolicyTeacher {
    fn reset(&mut self, _env: &Env) {}

    fn act(&mut self, env: &Env, obs: &[f64]) -> Result<ActionVector, DistillError> {
        let y = self.policy.act(obs)?;
        Ok(ActionVector::from_policy_output(&y, env.rank())?)
    }
}

/// Phase-oscillator gait script. Each synergy coefficient is a raised-cosine
/// burst centred at a fixed cycle fraction; the exo command is a sinusoid of
/// the same phase. The left leg runs half a cycle behind the right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedGait {
    /// Stride frequency `f = base + gain · speed` (Hz).
    pub stride_hz_base: f64,
    pub stride_hz_gain: f64,
    /// Burst centres as cycle fractions, one per synergy.
    pub centers: Vec<f64>,
    /// Burst half-width as a cycle fraction.
    pub half_width: f64,
    pub amplitude: Vec<f64>,
    /// Constant trunk excitations (extensor, flexor).
    pub trunk: [f64; 2],
    pub exo_amplitude: f64,
    /// Cycle fraction at which the exo command peaks in flexion.
    pub exo_peak: f64,
}

impl Default for ScriptedGait {
    fn default() -> Self {
        ScriptedGait {
            stride_hz_base: 0.5,
            stride_hz_gain: 0.35,
            centers: vec![0.05, 0.40, 0.65, 0.90],
            half_width: 0.15,
            amplitude: vec![0.35, 0.45, 0.5, 0.35],
            trunk: [0.0, 0.0],
            exo_amplitude: 0.8,
            exo_peak: 0.7,
        }
    }
}

impl ScriptedGait {
    pub fn stride_hz(&self, speed: f64) -> f64 {
        self.stride_hz_base + self.stride_hz_gain * speed
    }

    fn burst(&self, phase: f64, center: f64) -> f64 {
        let d = (phase - center + 0.5).rem_euclid(1.0) - 0.5;
        if d.abs() >= self.half_width {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * d / self.half_width).cos())
        }
    }

    /// Synergy coefficients for one leg at a cycle fraction.
    pub fn coefficients(&self, phase: f64) -> Vec<f64> {
        self.centers.iter().zip(&self.amplitude).map(|(&c, &a)| a * self.burst(phase, c)).collect()
    }

    pub fn exo_command(&self, phase: f64) -> f64 {
        self.exo_amplitude * (TAU * (phase - self.exo_peak)).cos()
    }
}

#[derive(Clone, Debug)]
pub struct ScriptedTeacher {
    pub gait: ScriptedGait,
    /// Right-leg cycle fraction in `[0, 1)`.
    phase: f64,
}

impl ScriptedTeacher {
    pub fn new(gait: ScriptedGait) -> Self {
        ScriptedTeacher { gait, phase: 0.0 }
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }
}

impl Teacher for ScriptedTeacher {
    fn reset(&mut self, _env: &Env) {
        self.phase = 0.0;
    }

    fn act(&mut self, env: &Env, _obs: &[f64]) -> Result<ActionVector, DistillError> {
        let rank = env.rank();
        if self.gait.centers.len() != rank || self.gait.amplitude.len() != rank {
            return Err(DistillError::Config(format!("scripted gait needs {rank} synergy bursts")));
        }
        let right = self.phase;
        let left = (right + 0.5).rem_euclid(1.0);
        let a = ActionVector {
            syn_left: self.gait.coefficients(left),
            syn_right: self.gait.coefficients(right),
            trunk: self.gait.trunk,
            exo: [self.gait.exo_command(left), self.gait.exo_command(right)],
        };
        self.phase = (self.phase + self.gait.stride_hz(env.target_speed()) / env.config().control_hz).rem_euclid(1.0);
        Ok(a)
    }

    fn env_config(&self, base: &EnvConfig) -> EnvConfig {
        let mut cfg = base.clone();
        cfg.model.base = BaseMode::Pinned;
        cfg
    }
}
