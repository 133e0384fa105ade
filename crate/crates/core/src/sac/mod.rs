//! Soft actor-critic with twin critics, target networks, learned entropy
//! temperature and a replay buffer, plus the staged training driver for
//! the walking task.

mod agent;
pub mod policy;
mod replay;
mod toy;
mod train;
mod walk;

use thiserror::Error;

use crate::env::EnvError;
use crate::net::{CheckpointError, NetError};

pub use agent::{soft_update, AgentConfig, SacAgent, UpdateStats};
pub use policy::{deterministic_action, sample_policy, sample_policy_with_noise, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{Batch, ReplayBuffer};
pub use toy::{evaluate_toy, ToyConfig, ToyEnv};
pub use train::{
    metrics_file, save_checkpoint, stage_lr, EnvStep, EpisodeRow, MetricsWriter, RlEnv, SacConfig, StageSpec, Trainer,
};
pub use walk::{
    load_walk_policy, make_walk_envs, stage1_checkpoint_path, train_toy, train_walking, ToyRun, TrainOutcome,
    WalkEnv, WalkPolicy, WalkSetup,
};

#[derive(Debug, Error)]
pub enum SacError {
    #[error("replay buffer holds {size} transitions, batch needs {batch}")]
    BufferTooSmall { size: usize, batch: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("learner produced non-finite values at step {step}")]
    Diverged { step: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    CheckpointFile(#[from] CheckpointError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
