//! Gyroscope-window datasets built from teacher rollouts, and their binary
//! file form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, Stage};
use crate::gait::RolloutLog;
use crate::net::WINDOW_LEN;
use crate::rng::child_rng;
use crate::synergy::SynergyBasis;

use super::rollout::{run_trial, SpeedProfile, TrialSpec};
use super::{DistillError, Teacher};

pub const DATASET_MAGIC: &str = "myoexo-dataset v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub slopes: Vec<i32>,
    pub speeds: Vec<f64>,
    pub trial_s: f64,
    /// Speed-sweep trials per slope, spanning the speed range.
    pub sweep_trials: usize,
    pub sweep_period_s: f64,
    /// Fraction of each trial's samples, taken from its end, held out.
    pub val_fraction: f64,
    pub max_fall_rate: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            slopes: vec![-5, 0, 5],
            speeds: vec![0.9, 1.2, 1.5],
            trial_s: 10.0,
            sweep_trials: 1,
            sweep_period_s: 8.0,
            val_fraction: 0.2,
            max_fall_rate: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        let bad = |m: &str| Err(DistillError::Config(m.into()));
        if self.slopes.is_empty() || self.speeds.is_empty() {
            return bad("need at least one slope and one speed");
        }
        if self.speeds.iter().any(|v| !(*v > 0.0)) {
            return bad("speeds must be positive");
        }
        if !(self.trial_s * 100.0 > WINDOW_LEN as f64) {
            return bad("trials must be longer than one input window");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if !(self.max_fall_rate >= 0.0 && self.max_fall_rate <= 1.0) || !(self.sweep_period_s > 0.0) {
            return bad("max_fall_rate must lie in [0, 1] and sweep_period_s must be positive");
        }
        Ok(())
    }

    /// Constant-speed trials for every (slope, speed), then sweep trials.
    pub fn trials(&self) -> Vec<TrialSpec> {
        let mut out = Vec::new();
        for &slope in &self.slopes {
            for &v in &self.speeds {
                out.push(TrialSpec { slope, speed: SpeedProfile::Constant(v), duration_s: self.trial_s });
            }
        }
        let low = self.speeds.iter().copied().fold(f64::INFINITY, f64::min);
        let high = self.speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for &slope in &self.slopes {
            for _ in 0..self.sweep_trials {
                out.push(TrialSpec {
                    slope,
                    speed: SpeedProfile::Sweep { low, high, period_s: self.sweep_period_s },
                    duration_s: self.trial_s,
                });
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub slope: f64,
    pub speed: f64,
    pub sweep: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillSample {
    /// Right-thigh angular velocity (rad/s), oldest first; the last entry is
    /// simultaneous with the label.
    pub window: Vec<f32>,
    /// Rate-limited normalized exo command in `[-1, 1]`.
    pub label: f32,
    pub condition: usize,
    pub trial: usize,
    /// Time of the last window sample (s).
    pub t: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Normalization {
    pub fn apply(&self, x: f32) -> f32 {
        (x - self.mean) / self.std
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillDataset {
    pub samples: Vec<DistillSample>,
    pub conditions: Vec<Condition>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub norm: Normalization,
}

/// Windows ending at every sample after the first `WINDOW_LEN`, labelled by
/// the right exo command at the window's last sample.
pub fn windows_from_log(log: &RolloutLog, condition: usize, trial: usize) -> Vec<DistillSample> {
    let x = &log.thigh_rate[1];
    let y = &log.exo_cmd[1];
    (WINDOW_LEN..x.len())
        .map(|i| DistillSample {
            window: x[i + 1 - WINDOW_LEN..=i].iter().map(|&v| v as f32).collect(),
            label: y[i].clamp(-1.0, 1.0) as f32,
            condition,
            trial,
            t: log.t[i] as f32,
        })
        .collect()
}

/// Scalar mean and standard deviation over every value of the selected
/// windows.
pub fn window_stats(samples: &[DistillSample], idx: &[usize]) -> Normalization {
    let (mut n, mut sum, mut sq) = (0f64, 0f64, 0f64);
    for &i in idx {
        for &v in &samples[i].window {
            n += 1.0;
            sum += v as f64;
            sq += (v as f64) * (v as f64);
        }
    }
    if n == 0.0 {
        return Normalization { mean: 0.0, std: 1.0 };
    }
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0);
    let std = if var > 1e-12 { var.sqrt() } else { 1.0 };
    Normalization { mean: mean as f32, std: std as f32 }
}

impl DistillDataset {
    /// Splits each trial into a leading training part and a trailing
    /// validation part, then fits the normalization on training windows.
    pub fn from_samples(samples: Vec<DistillSample>, conditions: Vec<Condition>, val_fraction: f64) -> Self {
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut start = 0;
        while start < samples.len() {
            let trial = samples[start].trial;
            let end = samples[start..].iter().position(|s| s.trial != trial).map_or(samples.len(), |p| start + p);
            let n = end - start;
            let n_val = ((n as f64) * val_fraction).round() as usize;
            train.extend(start..end - n_val);
            val.extend(end - n_val..end);
            start = end;
        }
        let norm = window_stats(&samples, &train);
        DistillDataset { samples, conditions, train, val, norm }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn save(&self, path: &Path) -> Result<(), DistillError> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            writeln!(w, "{DATASET_MAGIC}")?;
            writeln!(w, "samples {}", self.samples.len())?;
            writeln!(w, "window {WINDOW_LEN}")?;
            writeln!(w, "norm {:?} {:?}", self.norm.mean, self.norm.std)?;
            for (i, c) in self.conditions.iter().enumerate() {
                writeln!(w, "condition {i} {:?} {:?} {}", c.slope, c.speed, c.sweep as u8)?;
            }
            writeln!(w, "end")?;
            let mut is_val = vec![false; self.samples.len()];
            for &i in &self.val {
                is_val[i] = true;
            }
            for (s, v) in self.samples.iter().zip(is_val) {
                let head = [s.condition as f32, s.trial as f32, v as u8 as f32, s.t, s.label];
                for x in head.iter().chain(&s.window) {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            w.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        let bad = |m: String| DistillError::Format(m);
        let mut r = BufReader::new(File::open(path)?);
        let mut line = String::new();
        let mut next_line = |r: &mut BufReader<File>| -> Result<String, DistillError> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(DistillError::Format("unexpected end of header".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if next_line(&mut r)? != DATASET_MAGIC {
            return Err(bad("not a dataset file".into()));
        }
        let mut count = None;
        let mut norm = None;
        let mut conditions = Vec::new();
        loop {
            let l = next_line(&mut r)?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number in `{l}`")));
            match parts.as_slice() {
                ["end"] => break,
                ["samples", n] => count = Some(num(n)? as usize),
                ["window", n] => {
                    if num(n)? as usize != WINDOW_LEN {
                        return Err(bad(format!("window length {n}, expected {WINDOW_LEN}")));
                    }
                }
                ["norm", m, s] => norm = Some(Normalization { mean: num(m)? as f32, std: num(s)? as f32 }),
                ["condition", i, slope, speed, sweep] => {
                    if num(i)? as usize != conditions.len() {
                        return Err(bad("conditions out of order".into()));
                    }
                    conditions.push(Condition { slope: num(slope)?, speed: num(speed)?, sweep: num(sweep)? != 0.0 });
                }
                _ => return Err(bad(format!("unrecognized header line `{l}`"))),
            }
        }
        let count = count.ok_or_else(|| bad("missing sample count".into()))?;
        let norm = norm.ok_or_else(|| bad("missing normalization".into()))?;
        let width = 5 + WINDOW_LEN;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * width * 4 {
            return Err(bad(format!("payload is {} bytes, expected {}", bytes.len(), count * width * 4)));
        }
        let vals: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let mut samples = Vec::with_capacity(count);
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (i, rec) in vals.chunks_exact(width).enumerate() {
            let condition = rec[0] as usize;
            if condition >= conditions.len() {
                return Err(bad(format!("sample {i} refers to unknown condition {condition}")));
            }
            if rec[2] != 0.0 {
                val.push(i);
            } else {
                train.push(i);
            }
            samples.push(DistillSample {
                condition,
                trial: rec[1] as usize,
                t: rec[3],
                label: rec[4],
                window: rec[5..].to_vec(),
            });
        }
        Ok(DistillDataset { samples, conditions, train, val, norm })
    }
}

/// Rolls out `teacher` over every configured trial, one environment per
/// trial, spread over `workers` threads, and builds the dataset. Trials
/// that end in a fall contribute no samples.
pub fn generate_dataset<T: Teacher + Clone + Send>(
    teacher: &T,
    cfg: &DatasetConfig,
    env_cfg: &EnvConfig,
    basis: &SynergyBasis,
    seed: u64,
    workers: usize,
) -> Result<(DistillDataset, Vec<RolloutLog>), DistillError> {
    cfg.validate()?;
    let mut env_cfg = teacher.env_config(env_cfg);
    env_cfg.horizon_s = env_cfg.horizon_s.max(cfg.trial_s);
    let trials = cfg.trials();
    let workers = workers.clamp(1, trials.len());
    let mut logs: Vec<Option<Result<RolloutLog, DistillError>>> = (0..trials.len()).map(|_| None).collect();
    let chunk = trials.len().div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slots) in logs.chunks_mut(chunk).enumerate() {
            let (teacher, env_cfg, trials) = (teacher.clone(), &env_cfg, &trials);
            scope.spawn(move || {
                let mut teacher = teacher;
                for (j, slot) in slots.iter_mut().enumerate() {
                    let i = w * chunk + j;
                    let mut run = || -> Result<RolloutLog, DistillError> {
                        let mut env = Env::new(env_cfg.clone(), basis.clone(), Stage::TwoA, seed)?;
                        env.set_rng(child_rng(seed, &format!("distill/trial/{i}")));
                        run_trial(&mut teacher, &mut env, &trials[i], None)
                    };
                    *slot = Some(run());
                }
            });
        }
    });
    let logs: Vec<RolloutLog> = logs.into_iter().map(|l| l.expect("every trial ran")).collect::<Result<_, _>>()?;
    let falls = logs.iter().filter(|l| l.fell).count();
    if falls as f64 > cfg.max_fall_rate * logs.len() as f64 {
        return Err(DistillError::TeacherUnstable { falls, episodes: logs.len() });
    }
    let mut conditions: Vec<Condition> = Vec::new();
    let mut samples = Vec::new();
    for (i, (log, trial)) in logs.iter().zip(&trials).enumerate() {
        let cond = Condition { slope: trial.slope as f64, speed: trial.speed.nominal(), sweep: !trial.speed.is_constant() };
        let ci = match conditions.iter().position(|c| *c == cond) {
            Some(ci) => ci,
            None => {
                conditions.push(cond);
                conditions.len() - 1
            }
        };
        if !log.fell {
            samples.extend(windows_from_log(log, ci, i));
        }
    }
    Ok((DistillDataset::from_samples(samples, conditions, cfg.val_fraction), logs))
}
