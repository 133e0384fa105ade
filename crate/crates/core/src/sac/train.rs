//! Data collection, the staged learning-rate schedule, metrics and
//! checkpoints.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::Checkpoint;
use crate::rng::{child_rng, RngSnapshot};

use super::agent::{AgentConfig, SacAgent, UpdateStats};
use super::replay::ReplayBuffer;
use super::SacError;

/// Budget and collection settings around the learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub agent: AgentConfig,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub num_envs: usize,
    /// Environment steps with uniform random actions before learning.
    pub warmup_steps: u64,
    /// Gradient updates per environment step.
    pub updates_per_step: f64,
    pub stage1_steps: u64,
    pub stage2_steps: u64,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    /// Stage steps between periodic checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    /// Store the replay buffer in checkpoints.
    pub checkpoint_replay: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            agent: AgentConfig::default(),
            batch_size: 256,
            buffer_capacity: 1_000_000,
            num_envs: 8,
            warmup_steps: 10_000,
            updates_per_step: 1.0,
            stage1_steps: 2_000_000,
            stage2_steps: 2_000_000,
            lr_stage1: 1e-3,
            lr_stage2: 5e-4,
            checkpoint_every: 250_000,
            checkpoint_replay: false,
        }
    }
}

impl SacConfig {
    pub fn paper() -> Self {
        SacConfig {
            agent: AgentConfig { hidden: vec![512, 512, 256], ..Default::default() },
            batch_size: 512,
            buffer_capacity: 3_000_000,
            num_envs: 30,
            stage1_steps: 50_000_000,
            stage2_steps: 50_000_000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SacError> {
        self.agent.validate()?;
        let bad = |m: &str| Err(SacError::Config(m.into()));
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if self.num_envs == 0 {
            return bad("num_envs must be positive");
        }
        if !(self.updates_per_step >= 0.0) || !self.updates_per_step.is_finite() {
            return bad("updates_per_step must be a non-negative number");
        }
        if self.stage1_steps == 0 || self.stage2_steps == 0 {
            return bad("stage budgets must be positive");
        }
        if !(self.lr_stage1 > 0.0 && self.lr_stage2 > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

/// Learning rate decaying linearly from `lr0` at the stage start to zero at
/// its end.
pub fn stage_lr(lr0: f64, stage_step: u64, stage_len: u64) -> f64 {
    lr0 * (1.0 - (stage_step.min(stage_len) as f64) / stage_len as f64)
}

/// Result of one environment step as seen by the learner.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// True terminal state, excluded from bootstrapping.
    pub terminal: bool,
    /// Time limit reached; the next state is still bootstrapped.
    pub truncated: bool,
    /// Unweighted reward components.
    pub components: Vec<f64>,
    /// Largest applied exo torque magnitude during the step (Nm).
    pub exo_torque_abs: f64,
    pub forward_speed: f64,
}

/// Episodic task driven by actions in `[-1, 1]`.
pub trait RlEnv: Send {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Result<Vec<f64>, SacError>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SacError>;
    fn component_names(&self) -> Vec<String> {
        Vec::new()
    }
    /// Slope (deg) and target speed (m/s) of the current episode.
    fn episode_tags(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    /// Opaque state (curriculum, random stream) carried across checkpoints.
    fn snapshot(&self) -> String;
    fn restore(&mut self, s: &str) -> Result<(), SacError>;
}

#[derive(Clone, Debug, Default)]
struct EpisodeAcc {
    ret: f64,
    len: u64,
    components: Vec<f64>,
    speed: f64,
    exo_max: f64,
}

/// One finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub step: u64,
    pub stage: String,
    pub env: usize,
    pub episode_return: f64,
    pub episode_len: u64,
    pub slope: f64,
    pub speed: f64,
    pub mean_forward_speed: f64,
    pub max_exo_torque: f64,
    pub lr: f64,
    pub temperature: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub components: Vec<f64>,
}

/// Episode metrics CSV.
pub struct MetricsWriter<W: Write> {
    out: csv::Writer<W>,
    episodes: u64,
    recent: std::collections::VecDeque<(f64, u64)>,
}

const RECENT: usize = 100;

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W, component_names: &[String]) -> Result<Self, SacError> {
        let mut out = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "step",
            "stage",
            "env",
            "episode_return",
            "episode_len",
            "slope",
            "speed",
            "mean_forward_speed",
            "max_exo_torque",
            "lr",
            "temperature",
            "critic_loss",
            "actor_loss",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(component_names.iter().map(|n| format!("r_{n}")));
        out.write_record(&header)?;
        Ok(MetricsWriter { out, episodes: 0, recent: Default::default() })
    }

    /// Continues an existing file.
    pub fn without_header(out: W) -> Result<Self, SacError> {
        Ok(MetricsWriter { out: csv::Writer::from_writer(out), episodes: 0, recent: Default::default() })
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Mean return of the last hundred episodes written.
    pub fn recent_mean_return(&self) -> f64 {
        self.recent.iter().map(|r| r.0).sum::<f64>() / self.recent.len().max(1) as f64
    }

    pub fn recent_mean_len(&self) -> f64 {
        self.recent.iter().map(|r| r.1 as f64).sum::<f64>() / self.recent.len().max(1) as f64
    }

    pub fn write(&mut self, r: &EpisodeRow) -> Result<(), SacError> {
        let mut rec = vec![
            r.step.to_string(),
            r.stage.clone(),
            r.env.to_string(),
            format!("{:?}", r.episode_return),
            r.episode_len.to_string(),
            format!("{:?}", r.slope),
            format!("{:?}", r.speed),
            format!("{:?}", r.mean_forward_speed),
            format!("{:?}", r.max_exo_torque),
            format!("{:?}", r.lr),
            format!("{:?}", r.temperature),
            format!("{:?}", r.critic_loss),
            format!("{:?}", r.actor_loss),
        ];
        rec.extend(r.components.iter().map(|c| format!("{c:?}")));
        self.out.write_record(&rec)?;
        self.episodes += 1;
        if self.recent.len() == RECENT {
            self.recent.pop_front();
        }
        self.recent.push_back((r.episode_return, r.episode_len));
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), SacError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Progress through one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageSpec {
    pub label: String,
    pub len: u64,
    pub lr0: f64,
}

pub struct Trainer<E: RlEnv> {
    pub cfg: SacConfig,
    pub agent: SacAgent<f32>,
    pub buffer: ReplayBuffer,
    pub envs: Vec<E>,
    obs: Vec<Vec<f64>>,
    episodes: Vec<EpisodeAcc>,
    rng: ChaCha8Rng,
    pub total_steps: u64,
    pub stage_step: u64,
    update_credit: f64,
    pub last_stats: UpdateStats,
    pub workers: usize,
    pub seed: u64,
}

impl<E: RlEnv> Trainer<E> {
    pub fn new(cfg: SacConfig, envs: Vec<E>, seed: u64) -> Result<Self, SacError> {
        cfg.validate()?;
        if envs.len() != cfg.num_envs {
            return Err(SacError::Config(format!("{} environments for num_envs = {}", envs.len(), cfg.num_envs)));
        }
        let (od, ad) = (envs[0].obs_dim(), envs[0].action_dim());
        let agent = SacAgent::new(od, ad, &cfg.agent, &mut child_rng(seed, "sac/init"))?;
        let buffer = ReplayBuffer::new(cfg.buffer_capacity, od, ad);
        let mut t = Trainer {
            agent,
            buffer,
            obs: Vec::new(),
            episodes: Vec::new(),
            envs,
            rng: child_rng(seed, "sac/learner"),
            total_steps: 0,
            stage_step: 0,
            update_credit: 0.0,
            last_stats: UpdateStats::default(),
            workers: 1,
            seed,
            cfg,
        };
        t.reset_envs()?;
        Ok(t)
    }

    fn reset_envs(&mut self) -> Result<(), SacError> {
        self.obs = self.envs.iter_mut().map(|e| e.reset()).collect::<Result<_, _>>()?;
        self.episodes = vec![EpisodeAcc::default(); self.envs.len()];
        Ok(())
    }

    fn step_envs(&mut self, actions: &[Vec<f64>]) -> Result<Vec<EnvStep>, SacError> {
        let workers = self.workers.clamp(1, self.envs.len());
        if workers == 1 {
            return self.envs.iter_mut().zip(actions).map(|(e, a)| e.step(a)).collect();
        }
        let chunk = self.envs.len().div_ceil(workers);
        let results: Vec<Result<Vec<EnvStep>, SacError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .envs
                .chunks_mut(chunk)
                .zip(actions.chunks(chunk))
                .map(|(es, acts)| {
                    scope.spawn(move || es.iter_mut().zip(acts).map(|(e, a)| e.step(a)).collect::<Result<Vec<_>, _>>())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("environment worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(actions.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    /// Runs `stage` from the current stage step to its end, writing one
    /// metrics row per finished episode. `on_checkpoint` is called every
    /// `checkpoint_every` stage steps.
    pub fn run_stage<W: Write>(
        &mut self,
        stage: &StageSpec,
        metrics: &mut MetricsWriter<W>,
        on_checkpoint: &mut dyn FnMut(&Self) -> Result<(), SacError>,
    ) -> Result<(), SacError> {
        let n = self.envs.len() as u64;
        let act_dim = self.agent.act_dim();
        while self.stage_step < stage.len {
            let lr = stage_lr(stage.lr0, self.stage_step, stage.len);
            let actions: Vec<Vec<f64>> = if self.total_steps < self.cfg.warmup_steps {
                (0..n).map(|_| (0..act_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect()).collect()
            } else {
                self.agent.act_batch(&self.obs, &mut self.rng)?
            };
            let steps = self.step_envs(&actions)?;
            for (i, (s, a)) in steps.into_iter().zip(&actions).enumerate() {
                self.buffer.push(&self.obs[i], a, s.reward, &s.obs, s.terminal);
                let acc = &mut self.episodes[i];
                acc.ret += s.reward;
                acc.len += 1;
                acc.speed += s.forward_speed;
                acc.exo_max = acc.exo_max.max(s.exo_torque_abs);
                if acc.components.len() < s.components.len() {
                    acc.components.resize(s.components.len(), 0.0);
                }
                for (c, v) in acc.components.iter_mut().zip(&s.components) {
                    *c += v;
                }
                if s.terminal || s.truncated {
                    let (slope, speed) = self.envs[i].episode_tags();
                    let acc = std::mem::take(&mut self.episodes[i]);
                    let len = acc.len as f64;
                    metrics.write(&EpisodeRow {
                        step: self.total_steps + i as u64 + 1,
                        stage: stage.label.clone(),
                        env: i,
                        episode_return: acc.ret,
                        episode_len: acc.len,
                        slope,
                        speed,
                        mean_forward_speed: acc.speed / len,
                        max_exo_torque: acc.exo_max,
                        lr,
                        temperature: self.agent.temperature(),
                        critic_loss: 0.5 * (self.last_stats.critic1 + self.last_stats.critic2),
                        actor_loss: self.last_stats.actor,
                        components: acc.components.iter().map(|c| c / len).collect(),
                    })?;
                    self.obs[i] = self.envs[i].reset()?;
                } else {
                    self.obs[i] = s.obs;
                }
            }
            self.total_steps += n;
            let before = self.stage_step;
            self.stage_step += n;
            if self.total_steps >= self.cfg.warmup_steps && self.buffer.len() >= self.cfg.batch_size {
                self.update_credit += n as f64 * self.cfg.updates_per_step;
                while self.update_credit >= 1.0 {
                    self.update_credit -= 1.0;
                    let stats = self.agent.update_from_buffer(&self.buffer, self.cfg.batch_size, lr, &mut self.rng)?;
                    let finite = [stats.critic1, stats.critic2, stats.actor, stats.temperature];
                    if finite.iter().any(|v| !v.is_finite()) {
                        return Err(SacError::Diverged { step: self.total_steps });
                    }
                    self.last_stats = stats;
                }
            }
            let every = self.cfg.checkpoint_every;
            if every > 0 && before / every != self.stage_step / every && self.stage_step < stage.len {
                metrics.flush()?;
                on_checkpoint(self)?;
            }
        }
        metrics.flush()?;
        Ok(())
    }

    pub fn checkpoint(&self, stage: &str) -> Checkpoint {
        let mut ck = Checkpoint::new(self.seed);
        self.agent.save_into(&mut ck);
        ck.set_meta("stage", stage);
        ck.set_meta("stage_step", self.stage_step);
        ck.set_meta("total_steps", self.total_steps);
        ck.set_meta("update_credit", format!("{:?}", self.update_credit));
        ck.set_meta("rng", RngSnapshot::capture(&self.rng).to_hex());
        ck.set_meta("num_envs", self.envs.len());
        for (i, e) in self.envs.iter().enumerate() {
            ck.set_meta(&format!("env.{i}"), e.snapshot());
        }
        if self.cfg.checkpoint_replay {
            let (parts, cursor, size) = self.buffer.raw_parts();
            for (name, data) in ["obs", "act", "rew", "next_obs", "done"].iter().zip(parts) {
                ck.push(&format!("replay.{name}"), "raw", data.to_vec());
            }
            ck.set_meta("replay.cursor", cursor);
            ck.set_meta("replay.size", size);
        }
        ck
    }

    /// Restores learner, counters, random streams and curriculum state.
    /// Environments start fresh episodes; the replay buffer is restored only
    /// if the checkpoint carries one.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<(), SacError> {
        let agent = SacAgent::load_from(ck, self.cfg.agent.adam)?;
        if agent.obs_dim() != self.agent.obs_dim() || agent.act_dim() != self.agent.act_dim() {
            return Err(SacError::Checkpoint("network dimensions differ from the environment".into()));
        }
        self.agent = agent;
        self.stage_step = ck.meta_parse("stage_step")?;
        self.total_steps = ck.meta_parse("total_steps")?;
        self.update_credit = ck.meta_parse("update_credit")?;
        self.rng = RngSnapshot::from_hex(ck.meta("rng")?)
            .ok_or_else(|| SacError::Checkpoint("learner rng state".into()))?
            .restore();
        let n: usize = ck.meta_parse("num_envs")?;
        if n != self.envs.len() {
            return Err(SacError::Checkpoint(format!("checkpoint has {n} environments, config has {}", self.envs.len())));
        }
        for (i, e) in self.envs.iter_mut().enumerate() {
            e.restore(ck.meta(&format!("env.{i}"))?)?;
        }
        let (od, ad) = (self.agent.obs_dim(), self.agent.act_dim());
        self.buffer = if ck.tensor("replay.obs").is_ok() {
            let part = |name: &str| ck.tensor(&format!("replay.{name}")).map(|t| t.data.clone());
            ReplayBuffer::from_raw_parts(
                self.cfg.buffer_capacity,
                od,
                ad,
                [part("obs")?, part("act")?, part("rew")?, part("next_obs")?, part("done")?],
                ck.meta_parse("replay.cursor")?,
                ck.meta_parse("replay.size")?,
            )?
        } else {
            ReplayBuffer::new(self.cfg.buffer_capacity, od, ad)
        };
        self.last_stats = UpdateStats::default();
        self.reset_envs()
    }
}

/// Saves `ck` as `dir/name` and returns the path.
pub fn save_checkpoint(ck: &Checkpoint, dir: &Path, name: &str) -> Result<PathBuf, SacError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    ck.save(&path)?;
    Ok(path)
}

pub fn metrics_file(path: &Path, names: &[String]) -> Result<MetricsWriter<File>, SacError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    MetricsWriter::new(File::create(path)?, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        assert_eq!(stage_lr(1e-3, 0, 100), 1e-3);
        assert!((stage_lr(1e-3, 50, 100) - 5e-4).abs() < 1e-18);
        assert_eq!(stage_lr(1e-3, 100, 100), 0.0);
        assert_eq!(stage_lr(1e-3, 150, 100), 0.0);
    }
}
