//! Rollout logging at the analysis rate and its CSV form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::NJOINT;
use crate::env::{Env, StepInfo};

use super::GaitError;

/// Rate of the gait analysis log.
pub const LOG_RATE_HZ: f64 = 100.0;

/// Signals of one rollout. Per-side arrays are `[left, right]`. Kinematic
/// and force channels are sampled at `sample_rate`, activations at
/// `control_rate` (leg muscles only).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutLog {
    pub slope: f64,
    pub speed: f64,
    pub sample_rate: f64,
    pub control_rate: f64,
    pub body_mass: f64,
    pub fell: bool,
    pub t: Vec<f64>,
    pub grf: [Vec<f64>; 2],
    pub exo_torque: [Vec<f64>; 2],
    pub exo_cmd: [Vec<f64>; 2],
    pub thigh_rate: [Vec<f64>; 2],
    pub hip_angle: [Vec<f64>; 2],
    pub target_speed: Vec<f64>,
    pub muscle_torque: Vec<[f64; NJOINT]>,
    pub joint_rate: Vec<[f64; NJOINT]>,
    pub activations: Vec<Vec<f64>>,
    pub muscle_names: Vec<String>,
}

impl RolloutLog {
    /// Empty log for a rollout of `env`, which should already be reset.
    pub fn for_env(env: &Env) -> Self {
        let cfg = env.config();
        let names: Vec<String> = cfg.muscles.muscles.iter().map(|m| m.name.clone()).collect();
        RolloutLog {
            slope: env.slope_deg() as f64,
            speed: env.target_speed(),
            sample_rate: LOG_RATE_HZ,
            control_rate: cfg.control_hz,
            body_mass: cfg.model.body_mass(),
            muscle_names: names,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Appends one control tick, keeping substeps whose index is a multiple
    /// of the physics-to-log decimation.
    pub fn record(&mut self, env: &Env, info: &StepInfo) {
        let decim = ((1.0 / env.config().physics_dt()) / self.sample_rate).round().max(1.0) as usize;
        for s in &info.substeps {
            if s.step_index % decim != 0 {
                continue;
            }
            self.t.push(s.t);
            for k in 0..2 {
                self.grf[k].push(s.grf[k].normal);
                self.exo_torque[k].push(s.exo_torque[k]);
                self.exo_cmd[k].push(s.exo_cmd[k]);
                self.thigh_rate[k].push(s.thigh_rate[k]);
                self.hip_angle[k].push(s.hip_angle[k]);
            }
            self.target_speed.push(env.target_speed());
            self.muscle_torque.push(s.muscle_torque);
            self.joint_rate.push(s.joint_rate);
        }
        self.activations.push(info.activations[..self.muscle_names.len()].to_vec());
        self.fell |= info.fell || info.unstable;
    }

    fn activation_path(path: &Path) -> PathBuf {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("rollout");
        path.with_file_name(format!("{stem}.activations.csv"))
    }

    fn meta_path(path: &Path) -> PathBuf {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("rollout");
        path.with_file_name(format!("{stem}.meta.toml"))
    }

    /// Writes `<stem>.csv`, `<stem>.activations.csv` and `<stem>.meta.toml`.
    pub fn write_csv(&self, path: &Path) -> Result<(), GaitError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = vec!["t".into()];
        for ch in ["grf", "exo_torque", "exo_cmd", "thigh_rate", "hip_angle"] {
            header.push(format!("{ch}_l"));
            header.push(format!("{ch}_r"));
        }
        header.push("target_speed".into());
        header.extend((0..NJOINT).map(|j| format!("muscle_torque_{j}")));
        header.extend((0..NJOINT).map(|j| format!("joint_rate_{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.t[i]];
            for ch in [&self.grf, &self.exo_torque, &self.exo_cmd, &self.thigh_rate, &self.hip_angle] {
                row.push(ch[0][i]);
                row.push(ch[1][i]);
            }
            row.push(self.target_speed[i]);
            row.extend_from_slice(&self.muscle_torque[i]);
            row.extend_from_slice(&self.joint_rate[i]);
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;

        let mut a = csv::Writer::from_path(Self::activation_path(path))?;
        a.write_record(&self.muscle_names)?;
        for row in &self.activations {
            a.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        a.flush()?;

        let meta = LogMeta {
            slope: self.slope,
            speed: self.speed,
            sample_rate: self.sample_rate,
            control_rate: self.control_rate,
            body_mass: self.body_mass,
            fell: self.fell,
        };
        let text = toml::to_string(&meta).map_err(|e| GaitError::Format(e.to_string()))?;
        fs::write(Self::meta_path(path), text)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, GaitError> {
        let meta_text = fs::read_to_string(Self::meta_path(path))?;
        let meta: LogMeta = toml::from_str(&meta_text).map_err(|e| GaitError::Format(e.to_string()))?;
        let mut log = RolloutLog {
            slope: meta.slope,
            speed: meta.speed,
            sample_rate: meta.sample_rate,
            control_rate: meta.control_rate,
            body_mass: meta.body_mass,
            fell: meta.fell,
            ..Default::default()
        };
        let width = 1 + 10 + 1 + 2 * NJOINT;
        let mut r = csv::Reader::from_path(path)?;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != width {
                return Err(GaitError::Format(format!("expected {width} columns, found {}", rec.len())));
            }
            let v: Vec<f64> = parse_row(&rec)?;
            log.t.push(v[0]);
            let chans = [&mut log.grf, &mut log.exo_torque, &mut log.exo_cmd, &mut log.thigh_rate, &mut log.hip_angle];
            for (c, ch) in chans.into_iter().enumerate() {
                ch[0].push(v[1 + 2 * c]);
                ch[1].push(v[2 + 2 * c]);
            }
            log.target_speed.push(v[11]);
            let mut tq = [0.0; NJOINT];
            let mut wr = [0.0; NJOINT];
            tq.copy_from_slice(&v[12..12 + NJOINT]);
            wr.copy_from_slice(&v[12 + NJOINT..]);
            log.muscle_torque.push(tq);
            log.joint_rate.push(wr);
        }
        let mut a = csv::Reader::from_path(Self::activation_path(path))?;
        log.muscle_names = a.headers()?.iter().map(String::from).collect();
        for rec in a.records() {
            log.activations.push(parse_row(&rec?)?);
        }
        Ok(log)
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<Vec<f64>, GaitError> {
    rec.iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| GaitError::Format(format!("bad number `{s}`"))))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogMeta {
    slope: f64,
    speed: f64,
    sample_rate: f64,
    control_rate: f64,
    body_mass: f64,
    fell: bool,
}
