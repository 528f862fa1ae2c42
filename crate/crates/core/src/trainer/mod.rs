//! Deep Q-learning over whole-episode replay.
//!
//! The loop acts ε-greedily on a `K`-frame window, stores every transition,
//! and every few environment steps fits the online network to TD targets
//! computed by a target network that tracks it softly. Networks and
//! environments plug in through [`QNetwork`] and [`Environment`].

mod config;
mod learner;
mod optim;
mod replay;
mod run;
pub mod tabular;

pub use config::{default_learning_rate, Profile, TrainConfig};
pub use learner::{
    greedy_action, loss_and_grad, td_targets, Actor, EnvStep, Environment, EpochStats, GridEnv,
    Learner, QNetwork,
};
pub use optim::{
    clip_gradients, epsilon_at, epsilon_schedule, rmsprop_step, soft_update, OptimizerState,
    RmsPropConfig, EPS_ANNEAL, EPS_END, EPS_START,
};
pub use replay::{Batch, ReplayMemory, Transition};
pub use run::{load_task_maps, train, train_on_maps, EpochRecord, TrainOutcome, METRICS_HEADER};

use thiserror::Error;

use crate::agents::AgentError;
use crate::evalcli::EvalError;
use crate::mapgen::GenError;
use crate::numerics::NumericError;
use crate::worldsim::WorldError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("replay memory holds {eligible} windows, {needed} needed")]
    NotReady { eligible: usize, needed: usize },
    #[error("replay capacity {capacity} cannot hold the current episode")]
    Capacity { capacity: usize },
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Eval(#[from] Box<EvalError>),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Eval(Box::new(e))
    }
}

#[cfg(test)]
mod tests;
