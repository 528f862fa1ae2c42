//! Evaluation, attention traces, checkpoints and the command-line surface.

mod checkpoint;
pub mod cli;
mod evaluate;
mod report;
mod trace;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, load_into, parse_checkpoint, save_checkpoint, Manifest,
    TensorEntry, CHECKPOINT_VERSION,
};
pub use evaluate::{
    evaluate, evaluate_policy, map_size, precision_vs_distance, run_episode, split_window,
    EpisodeResult, EvalOptions, NetPolicy, Policy,
};
pub use report::{DistanceBin, EvalReport, SizeRow, DISTANCE_CSV_HEADER, SIZE_CSV_HEADER};
pub use trace::{export_trace, trace_lines, TraceStep};

use thiserror::Error;

use crate::agents::AgentError;
use crate::mapgen::GenError;
use crate::worldsim::WorldError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("payload length {found} bytes, manifest requires {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}
