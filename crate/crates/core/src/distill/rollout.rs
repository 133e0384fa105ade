//! Fixed-duration rollouts of a teacher on one terrain and speed profile.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::env::{Env, ExoController};
use crate::gait::RolloutLog;

use super::{DistillError, Teacher};

/// Target speed over a trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant(f64),
    /// Cosine sweep between `low` and `high`, starting at `low`.
    Sweep { low: f64, high: f64, period_s: f64 },
}

impl SpeedProfile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            SpeedProfile::Constant(v) => v,
            SpeedProfile::Sweep { low, high, period_s } => low + 0.5 * (high - low) * (1.0 - (TAU * t / period_s).cos()),
        }
    }

    /// Speed recorded as the trial's condition.
    pub fn nominal(&self) -> f64 {
        match *self {
            SpeedProfile::Constant(v) => v,
            SpeedProfile::Sweep { low, high, .. } => 0.5 * (low + high),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SpeedProfile::Constant(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub slope: i32,
    pub speed: SpeedProfile,
    pub duration_s: f64,
}

/// Runs `teacher` for one trial. With `exo`, the exo commands come from that
/// controller while the teacher keeps driving the muscles. Stops early on a
/// fall; the log's `fell` flag records it.
pub fn run_trial(
    teacher: &mut dyn Teacher,
    env: &mut Env,
    trial: &TrialSpec,
    mut exo: Option<&mut dyn ExoController>,
) -> Result<RolloutLog, DistillError> {
    let ticks = (trial.duration_s * env.config().control_hz).round() as usize;
    if ticks > env.config().horizon_ticks() {
        return Err(DistillError::Config(format!(
            "trial of {} s exceeds the {} s episode horizon",
            trial.duration_s,
            env.config().horizon_s
        )));
    }
    let mut obs = env.reset_to(trial.slope, trial.speed.at(0.0))?;
    teacher.reset(env);
    let mut log = RolloutLog::for_env(env);
    log.speed = trial.speed.nominal();
    let dt = 1.0 / env.config().control_hz;
    for tick in 0..ticks {
        if !trial.speed.is_constant() {
            env.set_target_speed(trial.speed.at(tick as f64 * dt));
        }
        let action = teacher.act(env, &obs)?;
        let step = env.step_with(&action, exo.as_deref_mut())?;
        log.record(env, &step.info);
        obs = step.obs;
        if step.info.fell || step.info.unstable {
            break;
        }
    }
    Ok(log)
}
