//! Weighted multi-term reward evaluated once per control tick.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub vel: f64,
    pub eff: f64,
    pub rom: f64,
    pub sm: f64,
    pub fall: f64,
    pub knee: f64,
    /// Half-width of the zero-error band around the target speed (m/s).
    pub speed_flat: f64,
    pub sigma_forward: f64,
    pub sigma_vertical: f64,
    pub sigma_pitch_deg: f64,
    pub sigma_pitch_rate_deg: f64,
    /// Knee load (body weights) above which the stance penalty applies.
    pub knee_load_threshold: f64,
    pub lumbar_min_deg: f64,
    pub lumbar_max_deg: f64,
    /// Fall when COM height drops below this fraction of standing height.
    pub fall_fraction: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            vel: 1.0,
            eff: 0.2,
            rom: 0.1,
            sm: 0.05,
            fall: 100.0,
            knee: 0.1,
            speed_flat: 0.05,
            sigma_forward: 0.3,
            sigma_vertical: 0.3,
            sigma_pitch_deg: 15.0,
            sigma_pitch_rate_deg: 60.0,
            knee_load_threshold: 3.0,
            lumbar_min_deg: -30.0,
            lumbar_max_deg: 2.5,
            fall_fraction: 0.6,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        let weights = [self.vel, self.eff, self.rom, self.sm, self.fall, self.knee];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err("reward weights must be non-negative".into());
        }
        if !(self.speed_flat >= 0.0) {
            return Err("speed_flat must be non-negative".into());
        }
        let sigmas = [self.sigma_forward, self.sigma_vertical, self.sigma_pitch_deg, self.sigma_pitch_rate_deg];
        if sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err("Gaussian widths must be positive".into());
        }
        if !(self.lumbar_min_deg < self.lumbar_max_deg) {
            return Err("lumbar_min_deg must be below lumbar_max_deg".into());
        }
        if !(self.fall_fraction > 0.0 && self.fall_fraction < 1.0) {
            return Err("fall_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// Post-tick quantities the reward depends on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RewardSnapshot {
    /// COM velocity along the terrain tangent (m/s).
    pub forward_speed: f64,
    /// COM velocity along the terrain normal (m/s).
    pub vertical_speed: f64,
    /// Trunk pitch (rad), positive leaning backward.
    pub trunk_pitch: f64,
    pub trunk_rate: f64,
    /// Knee flexion angles (rad), left then right.
    pub knee_angles: [f64; 2],
    /// Peak stance knee reaction force this tick, in body weights.
    pub knee_load: [f64; 2],
    pub activations: Vec<f64>,
    /// Rate-limited normalized exo commands this tick and the previous tick.
    pub exo_cmd: [f64; 2],
    pub exo_cmd_prev: [f64; 2],
    /// True only on the tick the fall is first detected.
    pub fell: bool,
}

/// Unweighted components and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub vel: f64,
    pub eff: f64,
    pub rom: f64,
    pub sm: f64,
    pub fall: f64,
    pub knee: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const NAMES: [&'static str; 6] = ["vel", "eff", "rom", "sm", "fall", "knee"];

    pub fn components(&self) -> [f64; 6] {
        [self.vel, self.eff, self.rom, self.sm, self.fall, self.knee]
    }

    pub fn weighted_sum(&self, w: &RewardWeights) -> f64 {
        w.vel * self.vel + w.eff * self.eff + w.rom * self.rom + w.sm * self.sm + w.fall * self.fall + w.knee * self.knee
    }
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp()
}

pub fn compute_reward(snap: &RewardSnapshot, target_speed: f64, w: &RewardWeights) -> RewardBreakdown {
    let speed_err = ((snap.forward_speed - target_speed).abs() - w.speed_flat).max(0.0);
    let vel = gaussian(speed_err, w.sigma_forward)
        * gaussian(snap.vertical_speed, w.sigma_vertical)
        * gaussian(snap.trunk_pitch.to_degrees(), w.sigma_pitch_deg)
        * gaussian(snap.trunk_rate.to_degrees(), w.sigma_pitch_rate_deg);
    let eff = -snap.activations.iter().map(|a| a * a).sum::<f64>();
    let hyperextension: f64 = snap.knee_angles.iter().map(|k| k.min(0.0).powi(2)).sum();
    let pitch = snap.trunk_pitch.to_degrees();
    let lumbar_excess = if pitch < w.lumbar_min_deg {
        (w.lumbar_min_deg - pitch).to_radians()
    } else if pitch > w.lumbar_max_deg {
        (pitch - w.lumbar_max_deg).to_radians()
    } else {
        0.0
    };
    let rom = -(hyperextension + lumbar_excess * lumbar_excess);
    let sm = -snap.exo_cmd.iter().zip(&snap.exo_cmd_prev).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let knee = -snap.knee_load.iter().map(|l| (l - w.knee_load_threshold).max(0.0).powi(2)).sum::<f64>();
    let fall = if snap.fell { -1.0 } else { 0.0 };
    let mut r = RewardBreakdown { vel, eff, rom, sm, fall, knee, total: 0.0 };
    r.total = r.weighted_sum(w);
    r
}
