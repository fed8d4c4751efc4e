//! PPO with regularized online adaptation, GAE, the curriculum and the training loop.

mod config;
mod curriculum;
mod gae;
mod ppo;
mod task;
mod toy;
mod train;
mod vecenv;

pub use config::{ConfigError, CurriculumConfig, NetsConfig, PpoConfig, RoaConfig, RunConfig, TrainConfig};
pub use curriculum::{CurriculumState, EpisodeOutcome};
pub use gae::{compute_gae, normalize};
pub use ppo::{estimator_losses, ppo_losses, ppo_update, EstimatorLosses, Minibatch, PpoLosses, UpdateStats};
pub use task::{PlatformTask, TaskFactory};
pub use toy::{ToyEnv, ToyFactory};
pub use train::{
    checkpoint_config, checkpoint_level, metrics_header, train, train_observed, train_with, IterationStats, TrainOutcome, Trainer,
    CHECKPOINT_LATEST, METRICS_COLUMNS, METRICS_FILE,
};
pub use vecenv::{collect_rollouts, EnvFactory, RolloutBuffer, TerminalInputs, TrainEnv, Transition, VecEnv};

use crate::env::EnvError;
use crate::nets::NetError;
use crate::trajgen::TrajError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error("training diverged at iteration {iteration} (non-finite {what}); last checkpoint: {checkpoint:?}")]
    Divergence { iteration: u64, what: String, checkpoint: Option<PathBuf> },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Resume(String),
}
