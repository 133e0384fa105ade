//! Gait-event detection, gait-cycle normalization, waveform agreement,
//! peak timing and assistance-effect metrics.

mod log;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{RolloutLog, LOG_RATE_HZ};
pub use report::{assistance_effect, write_effect_csv, write_waveform_bundle, ConditionMetrics, EffectReport, EffectRow};

/// Points per normalized gait cycle (0 to 100 %).
pub const CYCLE_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum GaitError {
    #[error("found {found} gait events, need at least 2")]
    NoEvents { found: usize },
    #[error("need {needed} strides, found {found}")]
    InsufficientStrides { needed: usize, found: usize },
    #[error("waveform has zero variance")]
    ZeroVariance,
    #[error("rollout covers {got_s:.2} s, need {needed_s:.2} s")]
    RolloutTooShort { needed_s: f64, got_s: f64 },
    #[error("condition grids differ: {0}")]
    GridMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid gait analysis setting: {0}")]
    Config(String),
    #[error("malformed rollout log: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitConfig {
    /// Vertical GRF level (N) whose upward crossing marks a heel strike.
    pub threshold: f64,
    pub refractory_s: f64,
    pub n_cycles: usize,
    /// Initial transient excluded from averaged metrics (s).
    pub discard_s: f64,
    pub window_s: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig { threshold: 50.0, refractory_s: 0.3, n_cycles: 5, discard_s: 2.0, window_s: 15.0 }
    }
}

impl GaitConfig {
    pub fn validate(&self) -> Result<(), GaitError> {
        if !(self.threshold > 0.0) || !(self.refractory_s >= 0.0) || self.n_cycles == 0 {
            return Err(GaitError::Config("threshold > 0, refractory >= 0 and n_cycles > 0 required".into()));
        }
        if !(self.discard_s >= 0.0 && self.window_s > 0.0) {
            return Err(GaitError::Config("discard_s >= 0 and window_s > 0 required".into()));
        }
        Ok(())
    }
}

/// A signal averaged over normalized gait cycles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitWaveform {
    pub values: Vec<f64>,
    pub units: String,
    pub strides: usize,
    /// First and last sample index of the strides used.
    pub span: (usize, usize),
    /// Mean stride duration in samples.
    pub mean_stride_samples: f64,
    /// Terrain slope (deg) and target speed (m/s) of the source rollout.
    pub condition: (f64, f64),
}

impl GaitWaveform {
    pub fn from_values(values: Vec<f64>, units: &str) -> Result<Self, GaitError> {
        if values.len() != CYCLE_POINTS {
            return Err(GaitError::LengthMismatch(values.len(), CYCLE_POINTS));
        }
        Ok(GaitWaveform { values, units: units.into(), strides: 1, span: (0, 0), mean_stride_samples: 0.0, condition: (0.0, 0.0) })
    }

    pub fn with_units(mut self, units: &str) -> Self {
        self.units = units.into();
        self
    }

    pub fn with_condition(mut self, slope: f64, speed: f64) -> Self {
        self.condition = (slope, speed);
        self
    }
}

/// Indices where `grf` rises through `threshold`, ignoring crossings
/// within `refractory_s` of the previous event.
pub fn detect_gait_events(grf: &[f64], rate_hz: f64, threshold: f64, refractory_s: f64) -> Result<Vec<usize>, GaitError> {
    if !(threshold > 0.0) {
        return Err(GaitError::Config("threshold must be positive".into()));
    }
    let refractory = (refractory_s * rate_hz).round() as usize;
    let mut events: Vec<usize> = Vec::new();
    for i in 1..grf.len() {
        if grf[i - 1] < threshold && grf[i] >= threshold {
            if let Some(&last) = events.last() {
                if i - last < refractory {
                    continue;
                }
            }
            events.push(i);
        }
    }
    if events.len() < 2 {
        return Err(GaitError::NoEvents { found: events.len() });
    }
    Ok(events)
}

/// Linear interpolation of `signal` at fractional index `x`.
fn sample_at(signal: &[f64], x: f64) -> f64 {
    let i = x.floor() as usize;
    if i + 1 >= signal.len() {
        return signal[signal.len() - 1];
    }
    let f = x - i as f64;
    signal[i] + f * (signal[i + 1] - signal[i])
}

/// Resamples each of the last `n_cycles` complete strides to 101 points and
/// averages them pointwise.
pub fn normalize_cycle(signal: &[f64], events: &[usize], n_cycles: usize) -> Result<GaitWaveform, GaitError> {
    let strides = events.len().saturating_sub(1);
    if n_cycles == 0 || strides < n_cycles {
        return Err(GaitError::InsufficientStrides { needed: n_cycles, found: strides });
    }
    if let Some(&last) = events.last() {
        if last >= signal.len() {
            return Err(GaitError::LengthMismatch(last + 1, signal.len()));
        }
    }
    let used = &events[events.len() - 1 - n_cycles..];
    // Running mean so that constant signals come back bit-exact.
    let mut values = vec![0.0; CYCLE_POINTS];
    for (count, w) in used.windows(2).enumerate() {
        let (a, b) = (w[0] as f64, w[1] as f64);
        for (k, v) in values.iter_mut().enumerate() {
            let x = sample_at(signal, a + (b - a) * k as f64 / (CYCLE_POINTS - 1) as f64);
            *v += (x - *v) / (count + 1) as f64;
        }
    }
    Ok(GaitWaveform {
        values,
        units: String::new(),
        strides: n_cycles,
        span: (used[0], used[n_cycles]),
        mean_stride_samples: (used[n_cycles] - used[0]) as f64 / n_cycles as f64,
        condition: (0.0, 0.0),
    })
}

/// Agreement between two waveforms. `r` is `None` when either has zero
/// variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveStats {
    pub r: Option<f64>,
    pub rmse: f64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, GaitError> {
    if a.len() != b.len() {
        return Err(GaitError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(GaitError::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn waveform_stats(a: &GaitWaveform, b: &GaitWaveform) -> Result<WaveStats, GaitError> {
    if a.values.len() != CYCLE_POINTS || b.values.len() != CYCLE_POINTS {
        return Err(GaitError::LengthMismatch(a.values.len(), b.values.len()));
    }
    if a.units != b.units {
        return Err(GaitError::Config(format!("units differ: `{}` vs `{}`", a.units, b.units)));
    }
    let rmse = (a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / CYCLE_POINTS as f64).sqrt();
    let r = match pearson(&a.values, &b.values) {
        Ok(r) => Some(r),
        Err(GaitError::ZeroVariance) => None,
        Err(e) => return Err(e),
    };
    Ok(WaveStats { r, rmse })
}

/// Percent of the cycle at the global minimum (extension peak) and maximum
/// (flexion peak), earliest index on ties.
pub fn peak_timing(w: &GaitWaveform) -> (f64, f64) {
    let (mut imin, mut imax) = (0, 0);
    for (i, &v) in w.values.iter().enumerate() {
        if v < w.values[imin] {
            imin = i;
        }
        if v > w.values[imax] {
            imax = i;
        }
    }
    let pct = |i: usize| i as f64 * 100.0 / (w.values.len() - 1) as f64;
    (pct(imin), pct(imax))
}

/// Wraps a cycle-percent difference into `(-50, 50]`.
pub fn wrap_percent(d: f64) -> f64 {
    let w = d.rem_euclid(100.0);
    if w > 50.0 {
        w - 100.0
    } else {
        w
    }
}

/// Timing lag of the exo peaks after the biological peaks, in ms.
pub fn peak_lag(bio: &GaitWaveform, exo: &GaitWaveform, stride_s: f64) -> (f64, f64) {
    let (be, bf) = peak_timing(bio);
    let (ee, ef) = peak_timing(exo);
    let ms = |d: f64| wrap_percent(d) / 100.0 * stride_s * 1000.0;
    (ms(ee - be), ms(ef - bf))
}

/// Time-and-muscle mean of activations sampled at `rate_hz`, over
/// `window_s` after discarding `discard_s`.
pub fn mean_activation(activations: &[Vec<f64>], rate_hz: f64, discard_s: f64, window_s: f64) -> Result<f64, GaitError> {
    let start = (discard_s * rate_hz).round() as usize;
    let n = (window_s * rate_hz).round() as usize;
    if n == 0 || activations.len() < start + n {
        return Err(GaitError::RolloutTooShort {
            needed_s: discard_s + window_s,
            got_s: activations.len() as f64 / rate_hz,
        });
    }
    let rows = &activations[start..start + n];
    let count: usize = rows.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(GaitError::Format("no activation channels".into()));
    }
    Ok(rows.iter().flatten().sum::<f64>() / count as f64)
}

/// Time mean of `Σ_j max(τ_j ω_j, 0)` divided by body mass (W/kg).
pub fn mean_positive_power<T: AsRef<[f64]>>(torque: &[T], rate: &[T], mass: f64) -> Result<f64, GaitError> {
    if torque.len() != rate.len() {
        return Err(GaitError::LengthMismatch(torque.len(), rate.len()));
    }
    if torque.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (t, w) in torque.iter().zip(rate) {
        let (t, w) = (t.as_ref(), w.as_ref());
        if t.len() != w.len() {
            return Err(GaitError::LengthMismatch(t.len(), w.len()));
        }
        total += t.iter().zip(w).map(|(a, b)| (a * b).max(0.0)).sum::<f64>();
    }
    Ok(total / torque.len() as f64 / mass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_wave_events() {
        let grf: Vec<f64> = (0..1000).map(|i| if (i % 110) < 60 && i >= 110 { 800.0 } else { 0.0 }).collect();
        let ev = detect_gait_events(&grf, 100.0, 50.0, 0.3).unwrap();
        assert_eq!(ev[0], 110);
        assert!(ev.windows(2).all(|w| w[1] - w[0] == 110));
        assert!(matches!(detect_gait_events(&[0.0; 50], 100.0, 50.0, 0.3), Err(GaitError::NoEvents { .. })));
        assert!(detect_gait_events(&grf, 100.0, 900.0, 0.3).is_err());
    }

    #[test]
    fn refractory_suppresses_chatter() {
        let mut grf = vec![0.0; 300];
        for i in [10, 14, 18, 150, 152] {
            grf[i] = 100.0;
        }
        assert_eq!(detect_gait_events(&grf, 100.0, 50.0, 0.3).unwrap(), vec![10, 150]);
    }

    #[test]
    fn stride_count_checks() {
        let s = vec![1.0; 100];
        let w = normalize_cycle(&s, &[0, 10, 20, 30, 40, 50], 5).unwrap();
        assert!(w.values.iter().all(|v| *v == 1.0));
        assert!(matches!(normalize_cycle(&s, &[0, 10, 20, 30, 40], 5), Err(GaitError::InsufficientStrides { .. })));
    }

    #[test]
    fn wrap_rule() {
        assert_eq!(wrap_percent(3.0 - 95.0), 8.0);
        assert_eq!(wrap_percent(50.0), 50.0);
        assert_eq!(wrap_percent(-50.0), 50.0);
        assert_eq!(wrap_percent(-49.0), -49.0);
    }

    #[test]
    fn constant_waveform_peaks_at_zero() {
        let w = GaitWaveform::from_values(vec![2.0; 101], "").unwrap();
        assert_eq!(peak_timing(&w), (0.0, 0.0));
    }
}
