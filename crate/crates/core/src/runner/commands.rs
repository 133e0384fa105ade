//! Workflow commands. Each one writes only below the configured run
//! directory and refreshes its manifest on success.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::distill::{
    closed_loop_student_rollout, generate_dataset, run_trial, split_agreement, train_student, EpochLoss, PolicyTeacher,
    ScriptedTeacher, SpeedProfile, Student, Teacher, TrialSpec,
};
use crate::dynamics::Joint;
use crate::env::{Env, EnvConfig, Stage};
use crate::gait::{
    assistance_effect, detect_gait_events, mean_activation, mean_positive_power, normalize_cycle, peak_lag,
    waveform_stats, write_effect_csv, write_waveform_bundle, ConditionMetrics, EffectReport, GaitWaveform, RolloutLog,
};
use crate::net::{Checkpoint, TcnNet};
use crate::rng::child_rng;
use crate::sac::{load_walk_policy, train_walking, WalkSetup};
use crate::synergy::{
    concat_logs, extract_basis_from_rollouts, nmf, read_basis_csv, vaf, write_basis_csv, ActivationMatrix, NmfConfig,
    SynergyBasis,
};

use super::config::{BasisSource, RunConfig, Stage0Source, TeacherSource};
use super::manifest::RunManifest;
use super::RunError;

pub const CONFIG_FILE: &str = "config.toml";

/// Creates `out/<stage>` and stores the resolved config at the run root and
/// in the stage directory.
fn begin(cfg: &RunConfig, stage: &str) -> Result<PathBuf, RunError> {
    let dir = cfg.out.join(stage);
    std::fs::create_dir_all(&dir)?;
    let text = cfg.to_toml()?;
    std::fs::write(cfg.out.join(CONFIG_FILE), &text)?;
    std::fs::write(dir.join(CONFIG_FILE), &text)?;
    Ok(dir)
}

fn finish(cfg: &RunConfig) -> Result<(), RunError> {
    RunManifest::refresh(&cfg.out).map(|_| ())
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = toml::to_string(value).map_err(|e| RunError::Other(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn basis_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("synergy").join("basis.csv")
}

/// Basis the walking environment decodes actions with.
pub fn load_basis(cfg: &RunConfig) -> Result<SynergyBasis, RunError> {
    match cfg.train.basis {
        BasisSource::Reference => Ok(SynergyBasis::reference_leg()),
        BasisSource::Fitted => {
            let path = basis_path(cfg);
            if !path.is_file() {
                return Err(RunError::Config(format!(
                    "no synergy basis at {}; run `synergy` first or set train.basis = \"reference\"",
                    path.display()
                )));
            }
            let basis = read_basis_csv(std::fs::File::open(&path)?)?;
            basis.validate()?;
            Ok(basis)
        }
    }
}

fn stage0_env(cfg: &RunConfig, teacher: &dyn Teacher, duration_s: f64) -> EnvConfig {
    let mut env = teacher.env_config(&cfg.env);
    env.horizon_s = env.horizon_s.max(duration_s);
    env
}

/// Scripted stage-0 rollouts over the configured slopes and speeds.
fn stage0_scripted(cfg: &RunConfig) -> Result<Vec<RolloutLog>, RunError> {
    let s = &cfg.synergy;
    let mut teacher = ScriptedTeacher::new(s.gait.clone());
    let env_cfg = stage0_env(cfg, &teacher, s.trial_s);
    let mut logs = Vec::new();
    for (i, (slope, speed)) in s.slopes.iter().flat_map(|&a| s.speeds.iter().map(move |&v| (a, v))).enumerate() {
        let mut env = Env::new(env_cfg.clone(), SynergyBasis::reference_leg(), Stage::One, cfg.seed)?;
        env.set_rng(child_rng(cfg.seed, &format!("synergy/trial/{i}")));
        let trial = TrialSpec { slope, speed: SpeedProfile::Constant(speed), duration_s: s.trial_s };
        logs.push(run_trial(&mut teacher, &mut env, &trial, None)?);
    }
    Ok(logs)
}

/// Right-leg activations at the control rate with heel strikes mapped onto
/// control ticks.
pub fn right_leg_activations(log: &RolloutLog, threshold: f64, refractory_s: f64) -> Result<ActivationMatrix, RunError> {
    let rows: Vec<usize> = log.muscle_names.iter().enumerate().filter(|(_, n)| n.ends_with("_r")).map(|(i, _)| i).collect();
    if rows.is_empty() {
        return Err(RunError::Config("rollout log has no right-leg muscles (`*_r`)".into()));
    }
    let cols = log.activations.len();
    let data = Array2::from_shape_fn((rows.len(), cols), |(r, c)| log.activations[c][rows[r]]);
    let events = detect_gait_events(&log.grf[1], log.sample_rate, threshold, refractory_s)?;
    let mut strides: Vec<usize> = events
        .iter()
        .map(|&i| (i as f64 * log.control_rate / log.sample_rate).round() as usize)
        .filter(|&j| j < cols)
        .collect();
    strides.dedup();
    let muscles = rows.iter().map(|&i| log.muscle_names[i].trim_end_matches("_r").to_string()).collect();
    Ok(ActivationMatrix { muscles, data, strides, sample_rate: log.control_rate })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynergyReport {
    pub rank: usize,
    pub vaf: f64,
    pub strides: usize,
    pub samples: usize,
    pub logs: usize,
}

/// Fits the synergy basis to stage-0 activations; writes `synergy/basis.csv`,
/// `synergy/vaf.csv` and `synergy/report.toml`.
pub fn cmd_synergy(cfg: &RunConfig) -> Result<SynergyReport, RunError> {
    let dir = begin(cfg, "synergy")?;
    let s = &cfg.synergy;
    let logs = match s.source {
        Stage0Source::Scripted => stage0_scripted(cfg)?,
        Stage0Source::Logs => s.logs.iter().map(|p| RolloutLog::read_csv(p)).collect::<Result<_, _>>()?,
    };
    let mut mats = Vec::new();
    for log in &logs {
        match right_leg_activations(log, s.event_threshold, s.refractory_s) {
            Ok(m) => mats.push(m),
            Err(RunError::InsufficientData(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let all = concat_logs(&mats).ok_or_else(|| RunError::InsufficientData("no rollout produced a stride".into()))?;
    let basis = extract_basis_from_rollouts(&all, &s.nmf, cfg.seed)?;
    log::info!("synergy basis: rank {} VAF {:.4} from {} strides", basis.rank(), basis.vaf, all.stride_count());
    write_basis_csv(std::fs::File::create(dir.join("basis.csv"))?, &basis)?;
    let v = all.stride_columns();
    let mut table = csv::Writer::from_path(dir.join("vaf.csv"))?;
    table.write_record(["rank", "vaf"])?;
    for rank in 1..=s.max_report_rank.min(v.nrows()) {
        let fit = nmf(&v, &NmfConfig { rank, ..s.nmf.clone() }, cfg.seed)?;
        table.write_record([rank.to_string(), format!("{:?}", vaf(&v, &fit.w, &fit.h)?)])?;
    }
    table.flush()?;
    let report =
        SynergyReport { rank: basis.rank(), vaf: basis.vaf, strides: all.stride_count(), samples: v.ncols(), logs: logs.len() };
    write_toml(&dir.join("report.toml"), &report)?;
    finish(cfg)?;
    Ok(report)
}

/// Which stage-2 arm to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Condition {
    /// Policy-controlled exoskeleton.
    Exo,
    /// Exoskeleton clamped to zero.
    Noexo,
}

impl Condition {
    pub fn stage(self) -> Stage {
        match self {
            Condition::Exo => Stage::TwoA,
            Condition::Noexo => Stage::TwoB,
        }
    }
}

pub fn train_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("train")
}

/// Final checkpoint of a stage-2 arm.
pub fn policy_path(cfg: &RunConfig, stage: Stage) -> PathBuf {
    train_dir(cfg).join(stage.to_string()).join("final.ckpt")
}

fn latest_periodic(dir: &Path) -> Result<Option<PathBuf>, RunError> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut ck: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("ckpt_") && n.ends_with(".ckpt")))
        .collect();
    ck.sort();
    Ok(ck.pop())
}

/// Drops metric rows logged after the checkpoint being resumed from.
fn truncate_metrics(path: &Path, last_step: u64) -> Result<(), RunError> {
    if !path.is_file() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path)?;
    let mut kept = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        let step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
        if i == 0 || step.is_some_and(|s| s <= last_step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept)?;
    Ok(())
}

/// Checkpoint an interrupted run continues from, if any.
fn resume_point(dir: &Path, stage: Stage) -> Result<Option<PathBuf>, RunError> {
    let stage_dir = dir.join(stage.to_string());
    if let Some(p) = latest_periodic(&stage_dir)? {
        return Ok(Some(p));
    }
    if dir.join("stage1").join("final.ckpt").is_file() {
        return Ok(None);
    }
    latest_periodic(&dir.join("stage1"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub final_checkpoint: PathBuf,
    pub metrics: Vec<PathBuf>,
    pub resumed_from: Option<PathBuf>,
}

/// Stage 1 (shared between arms) then stage 2 under `condition`.
pub fn cmd_train(cfg: &RunConfig, condition: Condition, resume: bool) -> Result<TrainReport, RunError> {
    let basis = load_basis(cfg)?;
    let dir = begin(cfg, "train")?;
    let stage = condition.stage();
    let resumed_from = if resume { resume_point(&dir, stage)? } else { None };
    if let Some(p) = &resumed_from {
        let ck = Checkpoint::load(p)?;
        let total: u64 = ck.meta_parse("total_steps")?;
        let metrics_dir = p.parent().unwrap_or(&dir);
        truncate_metrics(&metrics_dir.join("metrics.csv"), total)?;
        log::info!("resuming from {} at step {total}", p.display());
    }
    let setup = WalkSetup { sac: cfg.sac.clone(), env: cfg.env.clone(), basis };
    let out = train_walking(&setup, stage, &dir, cfg.seed, cfg.workers, resumed_from.as_deref())?;
    finish(cfg)?;
    Ok(TrainReport { final_checkpoint: out.final_checkpoint, metrics: out.metrics, resumed_from })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistillReport {
    pub teacher: String,
    pub samples: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub trials: usize,
    pub fallen_trials: usize,
    pub epochs: usize,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
    /// Held-out coefficient of determination over windows that follow a
    /// full input history.
    pub val_r2: f64,
}

pub fn student_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("distill").join("student.ckpt")
}

/// Resolves a checkpoint argument that may name a file or a stage directory.
fn checkpoint_in(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("final.ckpt")
    } else {
        path.to_path_buf()
    }
}

fn policy_teacher(path: &Path) -> Result<PolicyTeacher, RunError> {
    if !path.is_file() {
        return Err(RunError::Config(format!("teacher checkpoint {} not found", path.display())));
    }
    Ok(PolicyTeacher { policy: load_walk_policy(path)? })
}

/// Generates the distillation dataset from the teacher, trains the student
/// and writes `distill/{dataset.bin, student.ckpt, losses.csv, report.toml}`.
pub fn cmd_distill(cfg: &RunConfig, teacher_override: Option<&Path>) -> Result<(DistillReport, Vec<EpochLoss>), RunError> {
    let d = &cfg.distill;
    let (ds, logs, teacher_name) = match d.teacher {
        TeacherSource::Policy => {
            let path = teacher_override
                .map(checkpoint_in)
                .or_else(|| d.checkpoint.clone())
                .unwrap_or_else(|| policy_path(cfg, Stage::TwoA));
            let teacher = policy_teacher(&path)?;
            let basis = load_basis(cfg)?;
            let dir = begin(cfg, "distill")?;
            let (ds, logs) = generate_dataset(&teacher, &d.dataset, &cfg.env, &basis, cfg.seed, cfg.workers)?;
            ds.save(&dir.join("dataset.bin"))?;
            (ds, logs, path.display().to_string())
        }
        TeacherSource::Scripted => {
            let teacher = ScriptedTeacher::new(d.scripted.clone());
            let dir = begin(cfg, "distill")?;
            let basis = SynergyBasis::reference_leg();
            let (ds, logs) = generate_dataset(&teacher, &d.dataset, &cfg.env, &basis, cfg.seed, cfg.workers)?;
            ds.save(&dir.join("dataset.bin"))?;
            (ds, logs, "scripted".to_string())
        }
    };
    let dir = cfg.out.join("distill");
    let net = TcnNet::<f32>::new(d.student.tcn.clone(), &mut child_rng(cfg.seed, "distill/init"))
        .map_err(|e| RunError::Config(e.to_string()))?;
    let (student, losses) = train_student(&ds, net, &d.student, cfg.seed)?;
    student.save(&student_path(cfg), cfg.seed)?;
    let mut w = csv::Writer::from_path(dir.join("losses.csv"))?;
    w.write_record(["epoch", "train_mse", "val_mse"])?;
    for l in &losses {
        w.write_record([l.epoch.to_string(), format!("{:?}", l.train), format!("{:?}", l.val)])?;
    }
    w.flush()?;
    let val_r2 = split_agreement(&student, &ds, &ds.val)?;
    let last = losses.last().copied().unwrap_or(EpochLoss { epoch: 0, train: f64::NAN, val: f64::NAN });
    let report = DistillReport {
        teacher: teacher_name,
        samples: ds.len(),
        train_samples: ds.train.len(),
        val_samples: ds.val.len(),
        trials: logs.len(),
        fallen_trials: logs.iter().filter(|l| l.fell).count(),
        epochs: losses.len(),
        final_train_mse: last.train,
        final_val_mse: last.val,
        val_r2,
    };
    log::info!("student held-out R2 {val_r2:.4}");
    write_toml(&dir.join("report.toml"), &report)?;
    finish(cfg)?;
    Ok((report, losses))
}

/// Teachers for the two evaluation arms and the rig they walk on.
struct EvalArms {
    assisted: Box<dyn Teacher>,
    baseline: Box<dyn Teacher>,
    rig: Rig,
}

struct Rig {
    basis: SynergyBasis,
    env: EnvConfig,
    threshold: f64,
}

fn check_arm(path: &Path, expected: Stage, arm: &str) -> Result<(), RunError> {
    if !path.is_file() {
        return Err(RunError::GridMismatch(format!("{arm} run {} not found", path.display())));
    }
    let stage = Checkpoint::load(path)?.meta("stage").map(str::to_string)?;
    if stage != expected.to_string() {
        return Err(RunError::GridMismatch(format!(
            "{arm} run {} comes from stage {stage}, expected {expected}",
            path.display()
        )));
    }
    Ok(())
}

fn eval_arms(cfg: &RunConfig, assisted: Option<&Path>, baseline: Option<&Path>) -> Result<EvalArms, RunError> {
    let horizon = |mut env: EnvConfig| {
        env.horizon_s = env.horizon_s.max(cfg.eval.trial_s);
        env
    };
    match cfg.distill.teacher {
        TeacherSource::Scripted => {
            let t = ScriptedTeacher::new(cfg.distill.scripted.clone());
            Ok(EvalArms {
                rig: Rig {
                    env: horizon(t.env_config(&cfg.env)),
                    basis: SynergyBasis::reference_leg(),
                    threshold: cfg.eval.harness_threshold,
                },
                assisted: Box::new(t.clone()),
                baseline: Box::new(t),
            })
        }
        TeacherSource::Policy => {
            let a = assisted.map(checkpoint_in).unwrap_or_else(|| policy_path(cfg, Stage::TwoA));
            let b = baseline.map(checkpoint_in).unwrap_or_else(|| policy_path(cfg, Stage::TwoB));
            check_arm(&a, Stage::TwoA, "assisted")?;
            check_arm(&b, Stage::TwoB, "baseline")?;
            let (pa, pb) = (load_walk_policy(&a)?, load_walk_policy(&b)?);
            if pa.actor.sizes() != pb.actor.sizes() {
                return Err(RunError::GridMismatch("assisted and baseline policies have different shapes".into()));
            }
            Ok(EvalArms {
                assisted: Box::new(PolicyTeacher { policy: pa }),
                baseline: Box::new(PolicyTeacher { policy: pb }),
                rig: Rig { basis: load_basis(cfg)?, env: horizon(cfg.env.clone()), threshold: cfg.eval.gait.threshold },
            })
        }
    }
}

/// One evaluation rollout at a fixed condition.
fn eval_rollout(
    rig: &Rig,
    teacher: &mut dyn Teacher,
    stage: Stage,
    seed: u64,
    index: usize,
    trial: &TrialSpec,
    student: Option<&Student>,
) -> Result<RolloutLog, RunError> {
    let mut env = Env::new(rig.env.clone(), rig.basis.clone(), stage, seed)?;
    env.set_rng(child_rng(seed, &format!("eval/{index}")));
    Ok(match student {
        Some(s) => closed_loop_student_rollout(s, teacher, &mut env, trial)?,
        None => run_trial(teacher, &mut env, trial, None)?,
    })
}

/// Per-arm effort metrics over the analysis window.
fn condition_metrics(log: &RolloutLog, cfg: &RunConfig) -> Result<ConditionMetrics, RunError> {
    let g = &cfg.eval.gait;
    let activation = mean_activation(&log.activations, log.control_rate, g.discard_s, g.window_s)?;
    let start = (g.discard_s * log.sample_rate).round() as usize;
    let end = start + (g.window_s * log.sample_rate).round() as usize;
    if log.len() < end {
        return Err(RunError::InsufficientData(format!("rollout covers {:.2} s", log.duration_s())));
    }
    let power = mean_positive_power(&log.muscle_torque[start..end], &log.joint_rate[start..end], log.body_mass)?;
    Ok(ConditionMetrics { slope: log.slope, speed: log.speed, activation, power })
}

fn wave(log: &RolloutLog, signal: &[f64], threshold: f64, cfg: &RunConfig, units: &str) -> Result<GaitWaveform, RunError> {
    let g = &cfg.eval.gait;
    let events = detect_gait_events(&log.grf[1], log.sample_rate, threshold, g.refractory_s)?;
    Ok(normalize_cycle(signal, &events, g.n_cycles)?.with_units(units).with_condition(log.slope, log.speed))
}

/// Teacher-versus-student comparison at one condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementRow {
    pub slope: f64,
    pub speed: f64,
    /// Pearson r of the mean right exo-torque cycle, teacher vs student.
    pub r: Option<f64>,
    pub rmse: Option<f64>,
    /// Exo-torque peak lag behind the biological hip-torque peak (ms).
    pub teacher_ext_lag_ms: Option<f64>,
    pub teacher_flex_lag_ms: Option<f64>,
    pub student_ext_lag_ms: Option<f64>,
    pub student_flex_lag_ms: Option<f64>,
}

/// Arm metrics at one condition; `None` where the rollout fell or was too
/// short to analyse.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRow {
    pub slope: f64,
    pub speed: f64,
    pub assisted_fell: bool,
    pub baseline_fell: bool,
    pub assisted_activation: Option<f64>,
    pub baseline_activation: Option<f64>,
    pub assisted_power: Option<f64>,
    pub baseline_power: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub conditions: Vec<ConditionRow>,
    pub effect: Option<EffectReport>,
    pub agreement: Vec<AgreementRow>,
    /// Grid average of the available teacher-vs-student r values.
    pub mean_r: Option<f64>,
}

#[derive(Serialize)]
struct EvalSummary {
    conditions: usize,
    analysed: usize,
    mean_activation_reduction: Option<f64>,
    mean_power_reduction: Option<f64>,
    activation_speed_r: Option<f64>,
    power_speed_r: Option<f64>,
    student_compared: bool,
    student_mean_r: Option<f64>,
    student_conditions_with_r: usize,
}

fn hip_muscle_torque(log: &RolloutLog) -> Vec<f64> {
    log.muscle_torque.iter().map(|t| t[Joint::HipR.index()]).collect()
}

/// Extension and flexion peak lags of exo torque behind muscle hip torque.
fn lags(log: &RolloutLog, threshold: f64, cfg: &RunConfig) -> Option<(f64, f64)> {
    let b = wave(log, &hip_muscle_torque(log), threshold, cfg, "Nm").ok()?;
    let e = wave(log, &log.exo_torque[1], threshold, cfg, "Nm").ok()?;
    Some(peak_lag(&b, &e, e.mean_stride_samples / log.sample_rate))
}

/// Rolls out both arms over the grid and, when a student exists, the
/// closed-loop student against the assisted teacher. Writes
/// `eval/{conditions.csv, effect.csv, agreement.csv, waveforms.csv, summary.toml}`.
pub fn cmd_eval(cfg: &RunConfig, assisted: Option<&Path>, baseline: Option<&Path>) -> Result<EvalReport, RunError> {
    let mut arms = eval_arms(cfg, assisted, baseline)?;
    let student = match student_path(cfg) {
        p if p.is_file() => Some(Student::load(&p)?),
        _ => None,
    };
    let dir = begin(cfg, "eval")?;
    let grid = cfg.eval.grid();
    let mut rows = Vec::with_capacity(grid.len());
    let mut agreement = Vec::new();
    let mut waves: Vec<(String, GaitWaveform)> = Vec::new();
    let (mut good_a, mut good_b) = (Vec::new(), Vec::new());
    for (i, &(slope, speed)) in grid.iter().enumerate() {
        let trial = TrialSpec { slope, speed: SpeedProfile::Constant(speed), duration_s: cfg.eval.trial_s };
        let la = eval_rollout(&arms.rig, arms.assisted.as_mut(), Stage::TwoA, cfg.seed, i, &trial, None)?;
        let lb = eval_rollout(&arms.rig, arms.baseline.as_mut(), Stage::TwoB, cfg.seed, i, &trial, None)?;
        let ma = if la.fell { None } else { condition_metrics(&la, cfg).ok() };
        let mb = if lb.fell { None } else { condition_metrics(&lb, cfg).ok() };
        if let (Some(a), Some(b)) = (&ma, &mb) {
            good_a.push(a.clone());
            good_b.push(b.clone());
        }
        let tag = format!("{slope}/{speed:.1}");
        if let Ok(w) = wave(&la, &la.exo_torque[1], arms.rig.threshold, cfg, "Nm") {
            waves.push((format!("assisted/exo_torque/{tag}"), w));
        }
        for (arm, log) in [("assisted", &la), ("baseline", &lb)] {
            if let Ok(w) = wave(log, &hip_muscle_torque(log), arms.rig.threshold, cfg, "Nm") {
                waves.push((format!("{arm}/hip_muscle_torque/{tag}"), w));
            }
        }
        if let Some(s) = &student {
            let ls = eval_rollout(&arms.rig, arms.assisted.as_mut(), Stage::TwoA, cfg.seed, i, &trial, Some(s))?;
            let wt = wave(&la, &la.exo_torque[1], arms.rig.threshold, cfg, "Nm").ok();
            let ws = wave(&ls, &ls.exo_torque[1], arms.rig.threshold, cfg, "Nm").ok();
            let stats = match (&wt, &ws) {
                (Some(t), Some(s)) => waveform_stats(t, s).ok(),
                _ => None,
            };
            if let Some(w) = ws {
                waves.push((format!("student/exo_torque/{tag}"), w));
            }
            let tl = lags(&la, arms.rig.threshold, cfg);
            let sl = lags(&ls, arms.rig.threshold, cfg);
            agreement.push(AgreementRow {
                slope: slope as f64,
                speed,
                r: stats.as_ref().and_then(|s| s.r),
                rmse: stats.as_ref().map(|s| s.rmse),
                teacher_ext_lag_ms: tl.map(|l| l.0),
                teacher_flex_lag_ms: tl.map(|l| l.1),
                student_ext_lag_ms: sl.map(|l| l.0),
                student_flex_lag_ms: sl.map(|l| l.1),
            });
        }
        log::info!("eval {tag}: assisted fell {}, baseline fell {}", la.fell, lb.fell);
        rows.push(ConditionRow {
            slope: slope as f64,
            speed,
            assisted_fell: la.fell,
            baseline_fell: lb.fell,
            assisted_activation: ma.as_ref().map(|m| m.activation),
            baseline_activation: mb.as_ref().map(|m| m.activation),
            assisted_power: ma.as_ref().map(|m| m.power),
            baseline_power: mb.as_ref().map(|m| m.power),
        });
    }
    let mut w = csv::Writer::from_path(dir.join("conditions.csv"))?;
    rows.iter().try_for_each(|r| w.serialize(r))?;
    w.flush()?;
    let effect = if good_a.is_empty() { None } else { Some(assistance_effect(&good_a, &good_b)?) };
    if let Some(e) = &effect {
        write_effect_csv(e, &dir.join("effect.csv"))?;
    }
    if student.is_some() {
        let mut w = csv::Writer::from_path(dir.join("agreement.csv"))?;
        agreement.iter().try_for_each(|r| w.serialize(r))?;
        w.flush()?;
    }
    write_waveform_bundle(&waves, &dir.join("waveforms.csv"))?;
    let rs: Vec<f64> = agreement.iter().filter_map(|a| a.r).collect();
    let mean_r = (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64);
    let summary = EvalSummary {
        conditions: rows.len(),
        analysed: good_a.len(),
        mean_activation_reduction: effect.as_ref().map(|e| e.mean_activation_reduction),
        mean_power_reduction: effect.as_ref().map(|e| e.mean_power_reduction),
        activation_speed_r: effect.as_ref().and_then(|e| e.activation_speed_r),
        power_speed_r: effect.as_ref().and_then(|e| e.power_speed_r),
        student_compared: student.is_some(),
        student_mean_r: mean_r,
        student_conditions_with_r: rs.len(),
    };
    write_toml(&dir.join("summary.toml"), &summary)?;
    finish(cfg)?;
    Ok(EvalReport { conditions: rows, effect, agreement, mean_r })
}

/// Controller driving a replayed rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReplaySource {
    Assisted,
    Baseline,
    /// Assisted teacher on the muscles, student on the exoskeleton.
    Student,
    Scripted,
}

/// Re-runs one rollout and writes it as `replay/<source>_<slope>_<speed>.csv`.
pub fn cmd_replay(cfg: &RunConfig, source: ReplaySource, slope: i32, speed: f64, duration_s: f64) -> Result<(PathBuf, RolloutLog), RunError> {
    if slope.abs() > 5 || !(speed > 0.0) || !(duration_s > 0.0) {
        return Err(RunError::Config("replay needs |slope| <= 5, speed > 0 and duration > 0".into()));
    }
    let trial = TrialSpec { slope, speed: SpeedProfile::Constant(speed), duration_s };
    let (mut teacher, basis, stage): (Box<dyn Teacher>, SynergyBasis, Stage) = match source {
        ReplaySource::Scripted => {
            (Box::new(ScriptedTeacher::new(cfg.distill.scripted.clone())), SynergyBasis::reference_leg(), Stage::TwoA)
        }
        ReplaySource::Baseline => {
            (Box::new(policy_teacher(&policy_path(cfg, Stage::TwoB))?), load_basis(cfg)?, Stage::TwoB)
        }
        ReplaySource::Assisted | ReplaySource::Student => match cfg.distill.teacher {
            TeacherSource::Scripted => {
                (Box::new(ScriptedTeacher::new(cfg.distill.scripted.clone())), SynergyBasis::reference_leg(), Stage::TwoA)
            }
            TeacherSource::Policy => {
                (Box::new(policy_teacher(&policy_path(cfg, Stage::TwoA))?), load_basis(cfg)?, Stage::TwoA)
            }
        },
    };
    let student = match source {
        ReplaySource::Student => {
            let p = student_path(cfg);
            if !p.is_file() {
                return Err(RunError::Config(format!("student checkpoint {} not found", p.display())));
            }
            Some(Student::load(&p)?)
        }
        _ => None,
    };
    let mut env_cfg = teacher.env_config(&cfg.env);
    env_cfg.horizon_s = env_cfg.horizon_s.max(duration_s);
    let mut env = Env::new(env_cfg, basis, stage, cfg.seed)?;
    env.set_rng(child_rng(cfg.seed, "replay"));
    let log = match &student {
        Some(s) => closed_loop_student_rollout(s, teacher.as_mut(), &mut env, &trial)?,
        None => run_trial(teacher.as_mut(), &mut env, &trial, None)?,
    };
    let name = format!("{source:?}").to_lowercase();
    let dir = begin(cfg, "replay")?;
    let path = dir.join(format!("{name}_{slope}_{speed:.2}.csv"));
    log.write_csv(&path)?;
    finish(cfg)?;
    Ok((path, log))
}
