//! Grid world with first-person observations.
//!
//! A [`MapSpec`] is an immutable grid plus task rules. [`EpisodeState`]
//! advances one action at a time and [`render`] draws the current view as a
//! 3×32×32 image.

mod env;
mod map;
mod render;

pub use env::{
    Action, AgentPose, EpisodeState, IndicatorColor, Objective, Outcome, Pitch, StepResult, Yaw,
};
pub use map::{
    Cell, MapSpec, Task, DEFAULT_MAX_STEPS, DEFAULT_PENALTY, LARGE_MAX_STEPS, LARGE_PENALTY,
};
pub use render::{render, to_ppm, FOV_DEGREES, SHADING, VIEW_SIZE};
pub use render::{BLUE, FLOOR, GREEN, RED, SKY, TILE_DARK, TILE_LIGHT, WALL, YELLOW};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("episode has already terminated")]
    Terminal,
}

#[cfg(test)]
mod tests;
