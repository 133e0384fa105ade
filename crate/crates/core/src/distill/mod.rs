//! Teacher rollouts at 100 Hz, gyroscope-window datasets, supervised training
//! of the temporal-convolution student and closed-loop student evaluation.

mod dataset;
mod rollout;
mod student;
mod teacher;

use thiserror::Error;

use crate::env::EnvError;
use crate::sac::SacError;
use crate::synergy::SynergyError;

pub use dataset::{
    generate_dataset, window_stats, windows_from_log, Condition, DatasetConfig, DistillDataset, DistillSample,
    Normalization, DATASET_MAGIC,
};
pub use rollout::{run_trial, SpeedProfile, TrialSpec};
pub use student::{
    closed_loop_student_rollout, evaluate_agreement, split_agreement, split_mse, train_student, EpochLoss, Student,
    StudentConfig, StudentController,
};
pub use teacher::{PolicyTeacher, ScriptedGait, ScriptedTeacher, Teacher};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("teacher fell in {falls} of {episodes} rollouts")]
    TeacherUnstable { falls: usize, episodes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("teacher trace has zero variance")]
    ZeroVarianceTeacher,
    #[error("traces differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid distillation setting: {0}")]
    Config(String),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Synergy(#[from] SynergyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
