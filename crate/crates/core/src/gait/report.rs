//! Assisted-versus-baseline comparison and CSV report bundles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{pearson, GaitError, GaitWaveform};

/// Averaged metrics of one (slope, speed) condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub slope: f64,
    pub speed: f64,
    pub activation: f64,
    /// Mean positive joint power (W/kg).
    pub power: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub slope: f64,
    pub speed: f64,
    pub activation_assisted: f64,
    pub activation_baseline: f64,
    pub power_assisted: f64,
    pub power_baseline: f64,
    /// Percent reductions relative to the baseline.
    pub activation_reduction: f64,
    pub power_reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub rows: Vec<EffectRow>,
    pub mean_activation_reduction: f64,
    pub mean_power_reduction: f64,
    /// Pearson correlation between speed and reduction over all
    /// conditions; `None` when undefined.
    pub activation_speed_r: Option<f64>,
    pub power_speed_r: Option<f64>,
}

fn key(m: &ConditionMetrics) -> (i64, i64) {
    ((m.slope * 1000.0).round() as i64, (m.speed * 1000.0).round() as i64)
}

fn percent_reduction(baseline: f64, assisted: f64) -> f64 {
    (baseline - assisted) / baseline * 100.0
}

/// Pairs assisted and baseline metrics by condition; both sets must cover
/// the same grid.
pub fn assistance_effect(assisted: &[ConditionMetrics], baseline: &[ConditionMetrics]) -> Result<EffectReport, GaitError> {
    let mut a: Vec<&ConditionMetrics> = assisted.iter().collect();
    let mut b: Vec<&ConditionMetrics> = baseline.iter().collect();
    a.sort_by_key(|m| key(m));
    b.sort_by_key(|m| key(m));
    let ka: Vec<_> = a.iter().map(|m| key(m)).collect();
    let kb: Vec<_> = b.iter().map(|m| key(m)).collect();
    if ka.is_empty() || ka != kb || ka.windows(2).any(|w| w[0] == w[1]) {
        return Err(GaitError::GridMismatch(format!(
            "{} assisted vs {} baseline conditions, or duplicated/unmatched (slope, speed) pairs",
            a.len(),
            b.len()
        )));
    }
    let rows: Vec<EffectRow> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| EffectRow {
            slope: x.slope,
            speed: x.speed,
            activation_assisted: x.activation,
            activation_baseline: y.activation,
            power_assisted: x.power,
            power_baseline: y.power,
            activation_reduction: percent_reduction(y.activation, x.activation),
            power_reduction: percent_reduction(y.power, x.power),
        })
        .collect();
    let n = rows.len() as f64;
    let speeds: Vec<f64> = rows.iter().map(|r| r.speed).collect();
    let act: Vec<f64> = rows.iter().map(|r| r.activation_reduction).collect();
    let pow: Vec<f64> = rows.iter().map(|r| r.power_reduction).collect();
    Ok(EffectReport {
        mean_activation_reduction: act.iter().sum::<f64>() / n,
        mean_power_reduction: pow.iter().sum::<f64>() / n,
        activation_speed_r: pearson(&speeds, &act).ok(),
        power_speed_r: pearson(&speeds, &pow).ok(),
        rows,
    })
}

pub fn write_effect_csv(report: &EffectReport, path: &Path) -> Result<(), GaitError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One long-format CSV (`label,units,percent,value`) holding every
/// waveform, ready for plotting.
pub fn write_waveform_bundle(waves: &[(String, GaitWaveform)], path: &Path) -> Result<(), GaitError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "units", "percent", "value"])?;
    for (label, wave) in waves {
        let last = (wave.values.len() - 1).max(1) as f64;
        for (i, v) in wave.values.iter().enumerate() {
            w.write_record([label.clone(), wave.units.clone(), format!("{}", i as f64 * 100.0 / last), format!("{v:?}")])?;
        }
    }
    w.flush()?;
    Ok(())
}
