//! The five Q-network architectures: a shared convolutional encoder, an
//! optional key/value memory, three ways of building the context vector,
//! and a common Q-head.
//!
//! [`AgentNet::forward`] evaluates a batch of fixed-length windows and keeps
//! what [`AgentNet::backward`] needs. [`AgentNet::step`] runs the same
//! computation one frame at a time.

mod config;
mod memory;
mod net;
mod stream;

pub use config::{ArchConfig, Variant};
pub use memory::{memory_read, memory_write, MemoryBlocks};
pub use net::{AgentNet, ForwardPass};
pub use stream::{AgentState, StepOutput};

use thiserror::Error;

use crate::numerics::NumericError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}
