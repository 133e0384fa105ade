//! Run configuration: one TOML document holding every tunable constant,
//! layered over a named profile.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::{DatasetConfig, ScriptedGait, StudentConfig};
use crate::env::EnvConfig;
use crate::gait::GaitConfig;
use crate::sac::SacConfig;
use crate::synergy::NmfConfig;

use super::RunError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Budgets sized for a single workstation core.
    #[default]
    Desk,
    /// Full-scale learner and curriculum budgets.
    Paper,
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

/// Where stage-0 activation logs come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage0Source {
    /// Scripted oscillator driving the harness-supported plant.
    #[default]
    Scripted,
    /// Rollout logs listed in `synergy.logs`.
    Logs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynergyRun {
    pub nmf: NmfConfig,
    pub source: Stage0Source,
    /// Rollout log CSVs used when `source = "logs"`.
    pub logs: Vec<PathBuf>,
    pub gait: ScriptedGait,
    pub slopes: Vec<i32>,
    pub speeds: Vec<f64>,
    pub trial_s: f64,
    /// Heel-strike GRF threshold (N) and refractory period (s).
    pub event_threshold: f64,
    pub refractory_s: f64,
    /// Largest rank in the VAF-versus-rank table.
    pub max_report_rank: usize,
}

impl Default for SynergyRun {
    fn default() -> Self {
        SynergyRun {
            nmf: NmfConfig::default(),
            source: Stage0Source::Scripted,
            logs: Vec::new(),
            gait: ScriptedGait::default(),
            slopes: vec![-5, 0, 5],
            speeds: vec![0.9, 1.2, 1.5],
            trial_s: 10.0,
            event_threshold: 250.0,
            refractory_s: 0.3,
            max_report_rank: 6,
        }
    }
}

/// Synergy basis used by the walking environment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisSource {
    /// `synergy/basis.csv` in the run directory.
    #[default]
    Fitted,
    /// Built-in four-synergy leg basis.
    Reference,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub basis: BasisSource,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherSource {
    /// Exo-assisted policy checkpoint.
    #[default]
    Policy,
    /// Scripted oscillator on the harness-supported plant.
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillRun {
    pub teacher: TeacherSource,
    /// Teacher checkpoint; defaults to the assisted policy of this run.
    pub checkpoint: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub student: StudentConfig,
    pub scripted: ScriptedGait,
}

impl Default for DistillRun {
    fn default() -> Self {
        DistillRun {
            teacher: TeacherSource::Policy,
            checkpoint: None,
            dataset: DatasetConfig::default(),
            student: StudentConfig::default(),
            scripted: ScriptedGait::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub slopes: Vec<i32>,
    pub speeds: Vec<f64>,
    pub trial_s: f64,
    pub gait: GaitConfig,
    /// Heel-strike threshold (N) used when the scripted teacher walks on
    /// the harness, where stance loading is shared with the support.
    pub harness_threshold: f64,
}

impl Default for EvalRun {
    fn default() -> Self {
        EvalRun {
            slopes: vec![-5, 0, 5],
            speeds: vec![0.7, 0.9, 1.1, 1.3, 1.5],
            trial_s: 17.0,
            gait: GaitConfig::default(),
            harness_threshold: 250.0,
        }
    }
}

impl EvalRun {
    pub fn grid(&self) -> Vec<(i32, f64)> {
        self.slopes.iter().flat_map(|&s| self.speeds.iter().map(move |&v| (s, v))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub synergy: SynergyRun,
    pub train: TrainRun,
    pub distill: DistillRun,
    pub eval: EvalRun,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_profile(Profile::Desk)
    }
}

/// Command-line and environment values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let sac = match profile {
            Profile::Desk => SacConfig::default(),
            Profile::Paper => SacConfig::paper(),
        };
        RunConfig {
            profile,
            seed: 0,
            out: PathBuf::from("runs").join(profile.to_string()),
            workers: 1,
            env: EnvConfig::default(),
            sac,
            synergy: SynergyRun::default(),
            train: TrainRun::default(),
            distill: DistillRun::default(),
            eval: EvalRun::default(),
        }
    }

    /// Profile defaults, then the document, then `over`.
    pub fn resolve(text: Option<&str>, over: &Overrides) -> Result<Self, RunError> {
        let doc: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| RunError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let profile = match (over.profile, doc.get("profile")) {
            (Some(p), _) => p,
            (None, Some(v)) => Profile::deserialize(v.clone()).map_err(|e| RunError::Config(format!("profile: {e}")))?,
            (None, None) => Profile::Desk,
        };
        let mut merged = toml::Value::try_from(RunConfig::for_profile(profile))
            .map_err(|e| RunError::Config(e.to_string()))?;
        merge(&mut merged, toml::Value::Table(doc));
        let mut cfg = RunConfig::deserialize(merged).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.profile = profile;
        if let Some(s) = over.seed {
            cfg.seed = s;
        }
        if let Some(o) = &over.out {
            cfg.out = o.clone();
        }
        if let Some(w) = over.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, over: &Overrides) -> Result<Self, RunError> {
        let text = path
            .map(|p| std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display()))))
            .transpose()?;
        Self::resolve(text.as_deref(), over)
    }

    pub fn to_toml(&self) -> Result<String, RunError> {
        toml::to_string(self).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let cfg = |e: String| RunError::Config(e);
        if self.workers == 0 {
            return Err(cfg("workers must be at least 1".into()));
        }
        if self.seed > i64::MAX as u64 {
            return Err(cfg(format!("seed must not exceed {} to be stored as a TOML integer", i64::MAX)));
        }
        self.env.validate().map_err(|e| cfg(e.to_string()))?;
        self.sac.validate().map_err(|e| cfg(e.to_string()))?;
        self.distill.dataset.validate().map_err(|e| cfg(e.to_string()))?;
        self.distill.student.validate().map_err(|e| cfg(e.to_string()))?;
        self.eval.gait.validate().map_err(|e| cfg(e.to_string()))?;
        let s = &self.synergy;
        if s.nmf.rank == 0 || s.max_report_rank == 0 {
            return Err(cfg("synergy rank must be positive".into()));
        }
        if !(s.trial_s > 0.0 && s.event_threshold > 0.0 && s.refractory_s >= 0.0) {
            return Err(cfg("synergy trial_s and event_threshold must be positive".into()));
        }
        if s.source == Stage0Source::Scripted && (s.slopes.is_empty() || s.speeds.is_empty()) {
            return Err(cfg("scripted stage-0 rollouts need slopes and speeds".into()));
        }
        if s.source == Stage0Source::Logs && s.logs.is_empty() {
            return Err(cfg("synergy.source = \"logs\" needs synergy.logs".into()));
        }
        let e = &self.eval;
        if e.slopes.is_empty() || e.speeds.is_empty() || !(e.trial_s > 0.0) || !(e.harness_threshold > 0.0) {
            return Err(cfg("eval needs slopes, speeds, a positive trial_s and harness_threshold".into()));
        }
        if e.slopes.iter().chain(&s.slopes).chain(&self.distill.dataset.slopes).any(|x| x.abs() > 5) {
            return Err(cfg("slopes must lie in [-5, 5] deg".into()));
        }
        Ok(())
    }
}

/// Recursively overlays `over` onto `base`; tables merge key by key, every
/// other value replaces.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
