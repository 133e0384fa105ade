//! The gyroscope-only student: training, agreement metrics and closed-loop
//! control.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::{Env, ExoController, SubstepView};
use crate::gait::RolloutLog;
use crate::net::{adam_step, AdamConfig, Checkpoint, OptimState, TcnConfig, TcnNet, WINDOW_LEN};
use crate::rng::child_rng;

use super::dataset::{DistillDataset, Normalization};
use super::rollout::{run_trial, TrialSpec};
use super::{DistillError, Teacher};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub tcn: TcnConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig { tcn: TcnConfig::default(), epochs: 5, lr: 1e-3, batch_size: 128 }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        self.tcn.validate().map_err(|e| DistillError::Config(e.to_string()))?;
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(DistillError::Config("epochs, batch_size and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Trained network plus the input standardization it expects.
#[derive(Clone, Debug)]
pub struct Student {
    pub net: TcnNet<f32>,
    pub norm: Normalization,
}

impl Student {
    /// Command for a window of raw thigh rates (rad/s).
    pub fn predict(&self, raw: &[f32]) -> Result<f32, DistillError> {
        let z: Vec<f32> = raw.iter().map(|&v| self.norm.apply(v)).collect();
        self.net.forward_window(&z).map_err(|e| DistillError::Config(e.to_string()))
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(seed);
        ck.set_meta("input_mean", format!("{:?}", self.norm.mean));
        ck.set_meta("input_std", format!("{:?}", self.norm.std));
        ck.push_tcn("student", &self.net);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, DistillError> {
        let err = |e: crate::net::CheckpointError| DistillError::Format(e.to_string());
        Ok(Student {
            net: ck.tcn("student").map_err(err)?,
            norm: Normalization { mean: ck.meta_parse("input_mean").map_err(err)?, std: ck.meta_parse("input_std").map_err(err)? },
        })
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<(), DistillError> {
        self.to_checkpoint(seed).save(path).map_err(|e| DistillError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DistillError> {
        Self::from_checkpoint(&Checkpoint::load(path).map_err(|e| DistillError::Format(e.to_string()))?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean squared error over the whole split after the epoch.
    pub train: f64,
    pub val: f64,
}

fn normalized(ds: &DistillDataset, i: usize) -> Vec<f32> {
    ds.samples[i].window.iter().map(|&v| ds.norm.apply(v)).collect()
}

/// Mean squared error of `net` over the selected samples.
pub fn split_mse(net: &TcnNet<f32>, ds: &DistillDataset, idx: &[usize]) -> Result<f64, DistillError> {
    if idx.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for &i in idx {
        let y = net.forward_window(&normalized(ds, i)).map_err(|e| DistillError::Config(e.to_string()))?;
        total += ((y - ds.samples[i].label) as f64).powi(2);
    }
    Ok(total / idx.len() as f64)
}

/// Minibatch MSE training with Adam. Returns the final parameters and the
/// per-epoch losses.
pub fn train_student(
    ds: &DistillDataset,
    mut net: TcnNet<f32>,
    cfg: &StudentConfig,
    seed: u64,
) -> Result<(Student, Vec<EpochLoss>), DistillError> {
    cfg.validate()?;
    if ds.train.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    let rf = net.receptive_field();
    if rf > WINDOW_LEN {
        return Err(DistillError::Config(format!("receptive field {rf} exceeds the {WINDOW_LEN}-sample window")));
    }
    let net_err = |e: crate::net::NetError| DistillError::Config(e.to_string());
    let mut opt = OptimState::<f32>::new(net.params().len(), cfg.lr, AdamConfig::default());
    let mut rng = child_rng(seed, "distill/shuffle");
    let mut order = ds.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 2.0 / batch.len() as f32;
            let mut grads = vec![0f32; net.params().len()];
            for &i in batch {
                let z = normalized(ds, i);
                let (out, cache) = net.forward_sequence(&z[WINDOW_LEN - rf..]);
                let mut g_out = vec![0f32; rf];
                g_out[rf - 1] = scale * (out[rf - 1] - ds.samples[i].label);
                let (g, _) = net.backward(&cache, &g_out).map_err(net_err)?;
                grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            adam_step(net.params_mut(), &grads, &mut opt).map_err(net_err)?;
        }
        let train = split_mse(&net, ds, &ds.train)?;
        let val = split_mse(&net, ds, &ds.val)?;
        log::info!("student epoch {epoch}: train mse {train:.5}, val mse {val:.5}");
        history.push(EpochLoss { epoch, train, val });
    }
    Ok((Student { net, norm: ds.norm }, history))
}

/// Coefficient of determination of `student` against `teacher`.
pub fn evaluate_agreement(teacher: &[f64], student: &[f64]) -> Result<f64, DistillError> {
    if teacher.len() != student.len() {
        return Err(DistillError::LengthMismatch(teacher.len(), student.len()));
    }
    if teacher.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    let mean = teacher.iter().sum::<f64>() / teacher.len() as f64;
    let ss_tot: f64 = teacher.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(DistillError::ZeroVarianceTeacher);
    }
    let ss_res: f64 = teacher.iter().zip(student).map(|(t, s)| (t - s).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Held-out agreement between labels and student predictions.
pub fn split_agreement(student: &Student, ds: &DistillDataset, idx: &[usize]) -> Result<f64, DistillError> {
    let mut labels = Vec::with_capacity(idx.len());
    let mut preds = Vec::with_capacity(idx.len());
    for &i in idx {
        labels.push(ds.samples[i].label as f64);
        preds.push(student.predict(&ds.samples[i].window)? as f64);
    }
    evaluate_agreement(&labels, &preds)
}

/// Runs the student at the gyroscope rate inside the physics loop. Each leg
/// feeds its own thigh rate through the same network; commands stay zero
/// until a full window has elapsed.
pub struct StudentController<'a> {
    student: &'a Student,
    decimation: usize,
    history: [VecDeque<f32>; 2],
    samples: usize,
}

impl<'a> StudentController<'a> {
    /// `decimation` is physics steps per gyroscope sample.
    pub fn new(student: &'a Student, decimation: usize) -> Self {
        StudentController {
            student,
            decimation: decimation.max(1),
            history: [VecDeque::with_capacity(WINDOW_LEN), VecDeque::with_capacity(WINDOW_LEN)],
            samples: 0,
        }
    }

    pub fn for_env(student: &'a Student, env: &Env) -> Self {
        let physics_hz = 1.0 / env.config().physics_dt();
        Self::new(student, (physics_hz / crate::gait::LOG_RATE_HZ).round() as usize)
    }
}

impl ExoController for StudentController<'_> {
    fn on_substep(&mut self, view: &SubstepView) -> Option<[f64; 2]> {
        if view.step_index == 0 || view.step_index % self.decimation != 0 {
            return None;
        }
        for side in 0..2 {
            let h = &mut self.history[side];
            if h.len() == WINDOW_LEN {
                h.pop_front();
            }
            h.push_back(view.thigh_rate[side] as f32);
        }
        let k = self.samples;
        self.samples += 1;
        if k < WINDOW_LEN {
            return Some([0.0; 2]);
        }
        let mut cmd = [0.0; 2];
        for (side, c) in cmd.iter_mut().enumerate() {
            let window: Vec<f32> = self.history[side].iter().copied().collect();
            *c = self.student.predict(&window).unwrap_or(0.0) as f64;
        }
        Some(cmd)
    }
}

/// Teacher drives the muscles, the student drives the exo.
pub fn closed_loop_student_rollout(
    student: &Student,
    teacher: &mut dyn Teacher,
    env: &mut Env,
    trial: &TrialSpec,
) -> Result<RolloutLog, DistillError> {
    let mut ctl = StudentController::for_env(student, env);
    run_trial(teacher, env, trial, Some(&mut ctl))
}
