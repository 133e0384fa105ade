//! Command-line workflow: stage-0 synergy extraction, two-stage teacher
//! training, distillation, evaluation, verification and replay, all writing
//! into one run directory.

pub mod cli;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod verify;

use thiserror::Error;

use crate::distill::DistillError;
use crate::dynamics::DynamicsError;
use crate::env::EnvError;
use crate::gait::GaitError;
use crate::net::CheckpointError;
use crate::sac::SacError;
use crate::synergy::SynergyError;

pub use cli::{execute, run_cli, run_cli_with, Cli, Command};
pub use commands::*;
pub use config::{
    BasisSource, DistillRun, EvalRun, Overrides, Profile, RunConfig, Stage0Source, SynergyRun, TeacherSource, TrainRun,
};
pub use manifest::{Artifact, RunManifest, MANIFEST_FILE};
pub use verify::{invariant_suite, verify_run, GradientHooks, InvariantCheck};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("simulation became unstable: {0}")]
    Unstable(String),
    #[error("teacher fell in {falls} of {episodes} rollouts")]
    TeacherUnstable { falls: usize, episodes: usize },
    #[error("condition grid mismatch: {0}")]
    GridMismatch(String),
    #[error("verification failed: {0}")]
    VerifyMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::InsufficientData(_) => 3,
            RunError::Unstable(_) => 4,
            RunError::TeacherUnstable { .. } => 5,
            RunError::GridMismatch(_) => 6,
            RunError::VerifyMismatch(_) => 7,
            RunError::Io(_) | RunError::Other(_) => 1,
        }
    }
}

impl From<EnvError> for RunError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(_) => RunError::Config(e.to_string()),
            EnvError::Dynamics(DynamicsError::NonFiniteState { .. }) => RunError::Unstable(e.to_string()),
            EnvError::Synergy(s) => s.into(),
            EnvError::Io(e) => RunError::Io(e),
            _ => RunError::Other(e.to_string()),
        }
    }
}

impl From<SynergyError> for RunError {
    fn from(e: SynergyError) -> Self {
        match e {
            SynergyError::InsufficientStrides { .. } | SynergyError::ZeroMatrix => RunError::InsufficientData(e.to_string()),
            SynergyError::Io(e) => RunError::Io(e),
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<CheckpointError> for RunError {
    fn from(e: CheckpointError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<SacError> for RunError {
    fn from(e: SacError) -> Self {
        match e {
            SacError::Diverged { .. } => RunError::Unstable(e.to_string()),
            SacError::Env(e) => e.into(),
            SacError::Io(e) => RunError::Io(e),
            SacError::Config(_) | SacError::Checkpoint(_) | SacError::CheckpointFile(_) | SacError::ShapeMismatch { .. } => {
                RunError::Config(e.to_string())
            }
            _ => RunError::Other(e.to_string()),
        }
    }
}

impl From<DistillError> for RunError {
    fn from(e: DistillError) -> Self {
        match e {
            DistillError::TeacherUnstable { falls, episodes } => RunError::TeacherUnstable { falls, episodes },
            DistillError::EmptyDataset | DistillError::ZeroVarianceTeacher => RunError::InsufficientData(e.to_string()),
            DistillError::Config(_) | DistillError::Format(_) => RunError::Config(e.to_string()),
            DistillError::Env(e) => e.into(),
            DistillError::Sac(e) => e.into(),
            DistillError::Synergy(e) => e.into(),
            DistillError::Io(e) => RunError::Io(e),
            DistillError::LengthMismatch(..) => RunError::Other(e.to_string()),
        }
    }
}

impl From<GaitError> for RunError {
    fn from(e: GaitError) -> Self {
        match e {
            GaitError::GridMismatch(_) => RunError::GridMismatch(e.to_string()),
            GaitError::NoEvents { .. }
            | GaitError::InsufficientStrides { .. }
            | GaitError::RolloutTooShort { .. }
            | GaitError::ZeroVariance => RunError::InsufficientData(e.to_string()),
            GaitError::Config(_) | GaitError::Format(_) => RunError::Config(e.to_string()),
            GaitError::Io(e) => RunError::Io(e),
            _ => RunError::Other(e.to_string()),
        }
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Other(e.to_string())
    }
}
