//! Walking-task adapter and the two-stage training driver.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{ActionVector, Env, EnvConfig, RewardBreakdown, Stage};
use crate::net::{Checkpoint, DenseNet};
use crate::rng::{child_rng, RngSnapshot};
use crate::synergy::SynergyBasis;

use super::toy::{evaluate_toy, ToyConfig, ToyEnv};
use super::train::{metrics_file, save_checkpoint, EnvStep, MetricsWriter, RlEnv, SacConfig, StageSpec, Trainer};
use super::SacError;

pub struct WalkEnv {
    pub env: Env,
}

impl RlEnv for WalkEnv {
    fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    fn reset(&mut self) -> Result<Vec<f64>, SacError> {
        Ok(self.env.reset()?)
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SacError> {
        let a = ActionVector::from_policy_output(action, self.env.rank()).map_err(crate::env::EnvError::from)?;
        let r = self.env.step(&a)?;
        let exo_torque_abs =
            r.info.substeps.iter().flat_map(|s| s.exo_torque.iter().map(|t| t.abs())).fold(0.0, f64::max);
        Ok(EnvStep {
            obs: r.obs,
            reward: r.reward,
            terminal: r.info.fell,
            truncated: r.info.truncated,
            components: r.info.breakdown.components().to_vec(),
            exo_torque_abs,
            forward_speed: r.info.forward_speed,
        })
    }

    fn component_names(&self) -> Vec<String> {
        RewardBreakdown::NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn episode_tags(&self) -> (f64, f64) {
        (self.env.slope_deg() as f64, self.env.target_speed())
    }

    fn snapshot(&self) -> String {
        let scores: Vec<String> = self.env.ctx.scores.iter().map(|s| format!("{s:?}")).collect();
        format!("{};{};{}", self.env.ctx.speed_index, scores.join(","), RngSnapshot::capture(self.env.rng()).to_hex())
    }

    fn restore(&mut self, s: &str) -> Result<(), SacError> {
        let bad = || SacError::Checkpoint(format!("environment state `{s}`"));
        let f: Vec<&str> = s.split(';').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let speed_index: usize = f[0].parse().map_err(|_| bad())?;
        let scores: Vec<f64> = f[1].split(',').map(|v| v.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        if scores.len() != self.env.ctx.scores.len() {
            return Err(bad());
        }
        self.env.ctx.speed_index = speed_index;
        self.env.ctx.scores.copy_from_slice(&scores);
        self.env.set_rng(RngSnapshot::from_hex(f[2]).ok_or_else(bad)?.restore());
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct WalkSetup {
    pub sac: SacConfig,
    pub env: EnvConfig,
    pub basis: SynergyBasis,
}

pub fn make_walk_envs(setup: &WalkSetup, stage: Stage, seed: u64) -> Result<Vec<WalkEnv>, SacError> {
    (0..setup.sac.num_envs)
        .map(|i| {
            let mut env = Env::new(setup.env.clone(), setup.basis.clone(), stage, seed)?;
            env.set_rng(child_rng(seed, &format!("env/{i}")));
            Ok(WalkEnv { env })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub stage1_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub metrics: Vec<PathBuf>,
}

pub fn stage1_checkpoint_path(out: &Path) -> PathBuf {
    out.join("stage1").join("final.ckpt")
}

fn open_metrics(path: &Path, names: &[String], append: bool) -> Result<MetricsWriter<std::fs::File>, SacError> {
    if append && path.exists() {
        let f = OpenOptions::new().append(true).open(path)?;
        MetricsWriter::without_header(f)
    } else {
        metrics_file(path, names)
    }
}

fn write_summary(dir: &Path, trainer: &Trainer<WalkEnv>, stage: &str, metrics: &MetricsWriter<std::fs::File>) -> Result<(), SacError> {
    let mut f = std::fs::File::create(dir.join("summary.toml"))?;
    writeln!(f, "stage = \"{stage}\"")?;
    writeln!(f, "seed = {}", trainer.seed)?;
    writeln!(f, "total_steps = {}", trainer.total_steps)?;
    writeln!(f, "episodes = {}", metrics.episodes())?;
    writeln!(f, "recent_mean_return = {:?}", metrics.recent_mean_return())?;
    writeln!(f, "recent_mean_length = {:?}", metrics.recent_mean_len())?;
    writeln!(f, "temperature = {:?}", trainer.agent.temperature())?;
    Ok(())
}

fn run_walk_stage(
    trainer: &mut Trainer<WalkEnv>,
    spec: &StageSpec,
    dir: &Path,
    append: bool,
) -> Result<(PathBuf, PathBuf), SacError> {
    let names = trainer.envs[0].component_names();
    let metrics_path = dir.join("metrics.csv");
    let mut metrics = open_metrics(&metrics_path, &names, append)?;
    let label = spec.label.clone();
    let ckdir = dir.to_path_buf();
    trainer.run_stage(spec, &mut metrics, &mut |t| {
        save_checkpoint(&t.checkpoint(&label), &ckdir, &format!("ckpt_{:010}.ckpt", t.stage_step)).map(|_| ())
    })?;
    let final_path = save_checkpoint(&trainer.checkpoint(&spec.label), dir, "final.ckpt")?;
    write_summary(dir, trainer, &spec.label, &metrics)?;
    Ok((final_path, metrics_path))
}

/// Stage 1 with the exoskeleton clamped, then stage 2 under `condition`.
///
/// An existing `out/stage1/final.ckpt` is reused so that both stage-2
/// conditions continue from the same learner and random state. `resume`
/// continues an interrupted run from a periodic checkpoint.
pub fn train_walking(
    setup: &WalkSetup,
    condition: Stage,
    out: &Path,
    seed: u64,
    workers: usize,
    resume: Option<&Path>,
) -> Result<TrainOutcome, SacError> {
    if condition == Stage::One {
        return Err(SacError::Config("stage-2 condition must be 2a or 2b".into()));
    }
    let resume_ck = resume.map(Checkpoint::load).transpose()?;
    let resume_stage = resume_ck.as_ref().map(|c| c.meta("stage").map(str::to_string)).transpose()?;
    let s1 = StageSpec { label: Stage::One.to_string(), len: setup.sac.stage1_steps, lr0: setup.sac.lr_stage1 };
    let s2 = StageSpec { label: condition.to_string(), len: setup.sac.stage2_steps, lr0: setup.sac.lr_stage2 };
    let stage1_path = stage1_checkpoint_path(out);
    let mut metrics = Vec::new();
    if let Some(stage) = &resume_stage {
        if stage != &s1.label && stage != &s2.label {
            return Err(SacError::Checkpoint(format!("checkpoint is from stage {stage}, not 1 or {condition}")));
        }
    }
    let resume_stage2 = resume_stage.as_deref() == Some(s2.label.as_str());
    if !resume_stage2 && (resume_stage.is_some() || !stage1_path.exists()) {
        let mut trainer = Trainer::new(setup.sac.clone(), make_walk_envs(setup, Stage::One, seed)?, seed)?;
        trainer.workers = workers;
        if let Some(ck) = &resume_ck {
            trainer.restore(ck)?;
        }
        let (_, m) = run_walk_stage(&mut trainer, &s1, &out.join("stage1"), resume_ck.is_some())?;
        metrics.push(m);
    }
    let mut trainer = Trainer::new(setup.sac.clone(), make_walk_envs(setup, condition, seed)?, seed)?;
    trainer.workers = workers;
    match (&resume_ck, resume_stage2) {
        (Some(ck), true) => trainer.restore(ck)?,
        _ => {
            trainer.restore(&Checkpoint::load(&stage1_path)?)?;
            trainer.stage_step = 0;
        }
    }
    let (final_path, m) = run_walk_stage(&mut trainer, &s2, &out.join(condition.to_string()), resume_stage2)?;
    metrics.push(m);
    Ok(TrainOutcome { stage1_checkpoint: stage1_path, final_checkpoint: final_path, metrics })
}

/// Deterministic walking controller restored from a checkpoint.
#[derive(Clone, Debug)]
pub struct WalkPolicy {
    pub actor: DenseNet<f32>,
}

impl WalkPolicy {
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>, SacError> {
        let row: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
        Ok(super::policy::deterministic_action(&self.actor, &row)?.iter().map(|&v| v as f64).collect())
    }
}

pub fn load_walk_policy(path: &Path) -> Result<WalkPolicy, SacError> {
    Ok(WalkPolicy { actor: Checkpoint::load(path)?.dense("actor")? })
}

/// Learner settings and task for the tracking toy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyRun {
    pub sac: SacConfig,
    pub toy: ToyConfig,
    pub eval_episodes: usize,
}

impl Default for ToyRun {
    fn default() -> Self {
        let sac = SacConfig {
            agent: super::agent::AgentConfig { hidden: vec![32, 32], ..Default::default() },
            batch_size: 64,
            buffer_capacity: 200_000,
            num_envs: 1,
            warmup_steps: 1_000,
            stage1_steps: 200_000,
            stage2_steps: 1,
            checkpoint_every: 20_000,
            ..Default::default()
        };
        ToyRun { sac, toy: ToyConfig::default(), eval_episodes: 8 }
    }
}

/// Trains on the toy task and returns `(step, evaluation return)` pairs,
/// starting with the untrained policy.
pub fn train_toy(run: &ToyRun, seed: u64) -> Result<Vec<(u64, f64)>, SacError> {
    run.toy.validate()?;
    let envs = (0..run.sac.num_envs).map(|i| ToyEnv::new(run.toy.clone(), seed, &format!("toy/{i}"))).collect();
    let mut trainer = Trainer::new(run.sac.clone(), envs, seed)?;
    let eval = |t: &Trainer<ToyEnv>| evaluate_toy(&run.toy, run.eval_episodes, |o| t.agent.act_deterministic(o));
    let mut curve = vec![(0, eval(&trainer)?)];
    let spec = StageSpec { label: "toy".into(), len: run.sac.stage1_steps, lr0: run.sac.lr_stage1 };
    let mut sink = MetricsWriter::new(std::io::sink(), &[])?;
    trainer.run_stage(&spec, &mut sink, &mut |t| {
        curve.push((t.total_steps, eval(t)?));
        Ok(())
    })?;
    curve.push((trainer.total_steps, eval(&trainer)?));
    Ok(curve)
}
