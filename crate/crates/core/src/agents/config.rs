use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::numerics::ConvGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Dqn,
    Drqn,
    Mqn,
    Rmqn,
    Frmqn,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Dqn,
        Variant::Drqn,
        Variant::Mqn,
        Variant::Rmqn,
        Variant::Frmqn,
    ];

    pub fn has_memory(self) -> bool {
        matches!(self, Variant::Mqn | Variant::Rmqn | Variant::Frmqn)
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Variant::Drqn | Variant::Rmqn | Variant::Frmqn)
    }

    /// DQN and DRQN put a fully-connected layer after the convolutions.
    pub fn has_fc(self) -> bool {
        matches!(self, Variant::Dqn | Variant::Drqn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dqn => "dqn",
            Variant::Drqn => "drqn",
            Variant::Mqn => "mqn",
            Variant::Rmqn => "rmqn",
            Variant::Frmqn => "frmqn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| AgentError::Config(format!("unknown architecture '{s}'")))
    }
}

/// Shape of one network. `embed_dim` is the key/value width, the LSTM width
/// and the Q-head hidden width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub variant: Variant,
    pub obs_channels: usize,
    pub obs_height: usize,
    pub obs_width: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub fc_dim: usize,
    pub embed_dim: usize,
    pub frames: usize,
    pub mem_size: usize,
    pub actions: usize,
}

impl ArchConfig {
    /// Full-size network: 32×32 RGB input, 32/64 conv channels, 256 units.
    pub fn full(variant: Variant, frames: usize) -> Self {
        Self {
            variant,
            obs_channels: 3,
            obs_height: 32,
            obs_width: 32,
            conv1: 32,
            conv2: 64,
            fc_dim: 256,
            embed_dim: 256,
            frames,
            mem_size: if variant.has_memory() { frames - 1 } else { 0 },
            actions: 6,
        }
    }

    /// Reduced widths for CPU training runs: 8/16 conv channels, 64 units.
    pub fn desk(variant: Variant, frames: usize) -> Self {
        Self {
            conv1: 8,
            conv2: 16,
            fc_dim: 64,
            embed_dim: 64,
            ..Self::full(variant, frames)
        }
    }

    /// Tiny network for gradient checks: 3×8×8 input, encoding `8·2·2 = 32`,
    /// `m = 16`, memory 3, window 4.
    pub fn miniature(variant: Variant) -> Self {
        Self {
            variant,
            obs_channels: 3,
            obs_height: 8,
            obs_width: 8,
            conv1: 4,
            conv2: 8,
            fc_dim: 16,
            embed_dim: 16,
            frames: 4,
            mem_size: if variant.has_memory() { 3 } else { 0 },
            actions: 6,
        }
    }

    pub fn input_channels(&self) -> usize {
        match self.variant {
            Variant::Dqn => self.obs_channels * self.frames,
            _ => self.obs_channels,
        }
    }

    pub fn conv1_geometry(&self) -> Result<ConvGeometry, AgentError> {
        Ok(ConvGeometry::new(
            self.input_channels(),
            self.obs_height,
            self.obs_width,
            self.conv1,
        )?)
    }

    pub fn conv2_geometry(&self) -> Result<ConvGeometry, AgentError> {
        let g1 = self.conv1_geometry()?;
        Ok(ConvGeometry::new(self.conv1, g1.out_h(), g1.out_w(), self.conv2)?)
    }

    /// Length of the flattened second conv output.
    pub fn enc_dim(&self) -> usize {
        self.conv2_geometry()
            .map(|g| g.c_out * g.out_pixels())
            .unwrap_or(0)
    }

    /// Width of the per-frame feature that feeds the context path.
    pub fn feature_dim(&self) -> usize {
        if self.variant.has_fc() {
            self.fc_dim
        } else {
            self.enc_dim()
        }
    }

    /// Width of `h_t`.
    pub fn context_dim(&self) -> usize {
        match self.variant {
            Variant::Dqn => self.fc_dim,
            _ => self.embed_dim,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim
    }

    /// First index of the rectified half of the Q-head hidden layer.
    pub fn relu_split(&self) -> usize {
        if self.variant.has_memory() {
            self.hidden_dim() / 2
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let positive = [
            ("obs_channels", self.obs_channels),
            ("conv1", self.conv1),
            ("conv2", self.conv2),
            ("embed_dim", self.embed_dim),
            ("frames", self.frames),
            ("actions", self.actions),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(AgentError::Config(format!("{name} must be positive")));
            }
        }
        if self.variant.has_fc() && self.fc_dim == 0 {
            return Err(AgentError::Config("fc_dim must be positive".into()));
        }
        if self.variant.has_memory() {
            if self.mem_size == 0 {
                return Err(AgentError::Config(format!(
                    "{} needs mem_size >= 1",
                    self.variant
                )));
            }
            if self.frames < 2 {
                return Err(AgentError::Config(format!(
                    "{} needs at least 2 frames so the final step has memory",
                    self.variant
                )));
            }
        } else if self.mem_size != 0 {
            return Err(AgentError::Config(format!(
                "{} has no memory; mem_size must be 0",
                self.variant
            )));
        }
        self.conv2_geometry()?;
        Ok(())
    }

    /// Same parameters, different input window and memory size. DQN's first
    /// convolution is tied to its training window, so it refuses any change.
    pub fn with_window(&self, frames: usize, mem_size: usize) -> Result<Self, AgentError> {
        if self.variant == Variant::Dqn && frames != self.frames {
            return Err(AgentError::Config(format!(
                "dqn was built for {} frames and cannot take {frames}",
                self.frames
            )));
        }
        let cfg = Self {
            frames,
            mem_size: if self.variant.has_memory() { mem_size } else { 0 },
            ..self.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// True when two configs have identical parameter shapes.
    pub fn same_parameters(&self, other: &ArchConfig) -> bool {
        let strip = |c: &ArchConfig| ArchConfig {
            frames: if c.variant == Variant::Dqn { c.frames } else { 0 },
            mem_size: 0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }
}
