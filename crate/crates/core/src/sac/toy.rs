//! One-degree-of-freedom torque-tracking task for exercising the learner.
//!
//! A first-order actuator `y ← y + gain·(u − y)` must follow a sinusoidal
//! reference. The observation holds the actuator output and the next two
//! reference values; the reward is the negative squared tracking error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{EnvStep, RlEnv};
use super::SacError;
use crate::rng::{child_rng, RngSnapshot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub gain: f64,
    pub amplitude: f64,
    /// Reference period in steps.
    pub period: f64,
    pub episode_len: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig { gain: 0.5, amplitude: 0.4, period: 40.0, episode_len: 100 }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        if !(self.gain > 0.0 && self.gain <= 1.0) || !(self.amplitude > 0.0) || !(self.period > 0.0) || self.episode_len == 0
        {
            return Err(SacError::Config("toy task needs gain in (0, 1], positive amplitude, period and length".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ToyEnv {
    cfg: ToyConfig,
    y: f64,
    t: usize,
    phase: f64,
    rng: ChaCha8Rng,
}

impl ToyEnv {
    pub fn new(cfg: ToyConfig, seed: u64, name: &str) -> Self {
        ToyEnv { cfg, y: 0.0, t: 0, phase: 0.0, rng: child_rng(seed, name) }
    }

    pub fn reference(&self, t: usize) -> f64 {
        self.cfg.amplitude * (std::f64::consts::TAU * t as f64 / self.cfg.period + self.phase).sin()
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.y, self.reference(self.t + 1), self.reference(self.t + 2)]
    }

    /// Starts an episode at a given reference phase.
    pub fn reset_to(&mut self, phase: f64) -> Vec<f64> {
        self.phase = phase;
        self.y = 0.0;
        self.t = 0;
        self.obs()
    }
}

impl RlEnv for ToyEnv {
    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Result<Vec<f64>, SacError> {
        let phase = self.rng.random_range(0.0..std::f64::consts::TAU);
        Ok(self.reset_to(phase))
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SacError> {
        let u = action.first().copied().unwrap_or(0.0).clamp(-1.0, 1.0);
        self.y += self.cfg.gain * (u - self.y);
        self.t += 1;
        let e = self.y - self.reference(self.t);
        let truncated = self.t >= self.cfg.episode_len;
        Ok(EnvStep { obs: self.obs(), reward: -e * e, terminal: false, truncated, ..Default::default() })
    }

    fn snapshot(&self) -> String {
        RngSnapshot::capture(&self.rng).to_hex()
    }

    fn restore(&mut self, s: &str) -> Result<(), SacError> {
        let snap = RngSnapshot::from_hex(s).ok_or_else(|| SacError::Checkpoint("toy rng state".into()))?;
        self.rng = snap.restore();
        Ok(())
    }
}

/// Mean deterministic return over evenly spaced reference phases.
pub fn evaluate_toy<F>(cfg: &ToyConfig, episodes: usize, mut policy: F) -> Result<f64, SacError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, SacError>,
{
    let mut env = ToyEnv::new(cfg.clone(), 0, "toy/eval");
    let mut total = 0.0;
    for k in 0..episodes {
        let mut obs = env.reset_to(std::f64::consts::TAU * k as f64 / episodes as f64);
        loop {
            let a = policy(&obs)?;
            let s = env.step(&a)?;
            total += s.reward;
            obs = s.obs;
            if s.terminal || s.truncated {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}
