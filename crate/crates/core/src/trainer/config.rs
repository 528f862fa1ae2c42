use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::TrainError;
use crate::agents::{ArchConfig, Variant};
use crate::worldsim::Task;

/// Network widths: `full` is 32/64 conv channels and 256 units, `desk` is
/// 8/16 channels and 64 units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Full,
    Desk,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Full => "full",
            Profile::Desk => "desk",
        }
    }
}

impl FromStr for Profile {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Profile::Full),
            "desk" => Ok(Profile::Desk),
            _ => Err(TrainError::Config(format!("unknown profile '{s}'"))),
        }
    }
}

/// Learning rate per task and architecture.
pub fn default_learning_rate(task: Task, arch: Variant) -> f64 {
    use Variant::*;
    let row: [f64; 5] = match task {
        Task::IMaze => [0.00025, 0.0005, 0.0005, 0.0005, 0.0005],
        Task::PatternMatch => [0.00025, 0.001, 0.0005, 0.0005, 0.0005],
        Task::Single => [0.0001, 0.00025, 0.0001, 0.00025, 0.00025],
        Task::Seq => [0.00025, 0.0005, 0.00025, 0.00025, 0.00025],
        Task::SingleInd => [0.0001, 0.0005, 0.00025, 0.0005, 0.00025],
        Task::SeqInd => [0.00025, 0.001, 0.00025, 0.00025, 0.0005],
    };
    let col = match arch {
        Dqn => 0,
        Drqn => 1,
        Mqn => 2,
        Rmqn => 3,
        Frmqn => 4,
    };
    row[col]
}

/// Every setting of a training run. Text form is one `key = value` per line.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub arch: Variant,
    pub seed: u64,
    pub profile: Profile,
    pub frames: usize,
    pub mem_size: usize,
    pub steps: u64,
    pub batch: usize,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal: u64,
    pub update_every: u64,
    /// Environment steps before the first update.
    pub learn_start: u64,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_sq_decay: f64,
    pub rms_damping: f64,
    pub clip_norm: f64,
    pub target_momentum: f64,
    pub replay_capacity: usize,
    pub epoch_steps: u64,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    pub maps: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

const KEYS: [&str; 26] = [
    "task",
    "arch",
    "seed",
    "profile",
    "frames",
    "mem_size",
    "steps",
    "batch",
    "gamma",
    "eps_start",
    "eps_end",
    "eps_anneal",
    "update_every",
    "learn_start",
    "lr",
    "rms_decay",
    "rms_sq_decay",
    "rms_damping",
    "clip_norm",
    "target_momentum",
    "replay_capacity",
    "epoch_steps",
    "eval_episodes",
    "eval_epsilon",
    "maps",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value
        .parse()
        .map_err(|_| TrainError::Config(format!("invalid value '{value}' for {key}")))
}

impl TrainConfig {
    /// Defaults for a task and architecture: window 12 (memory 11) on the
    /// corridor task and 10 (memory 9) elsewhere, replay of 5·10⁴ transitions
    /// on the corridor and pattern tasks and 10⁶ on random mazes.
    pub fn new(task: Task, arch: Variant) -> Self {
        let frames = if task == Task::IMaze { 12 } else { 10 };
        let replay_capacity = match task {
            Task::IMaze | Task::PatternMatch => 50_000,
            _ => 1_000_000,
        };
        Self {
            task,
            arch,
            seed: 0,
            profile: Profile::Full,
            frames,
            mem_size: if arch.has_memory() { frames - 1 } else { 0 },
            steps: 2_000_000,
            batch: 32,
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.1,
            eps_anneal: 1_000_000,
            update_every: 4,
            learn_start: 0,
            lr: default_learning_rate(task, arch),
            rms_decay: 0.95,
            rms_sq_decay: 0.95,
            rms_damping: 1e-2,
            clip_norm: 20.0,
            target_momentum: 0.999,
            replay_capacity,
            epoch_steps: 10_000,
            eval_episodes: 100,
            eval_epsilon: 0.05,
            maps: None,
            out: None,
        }
    }

    /// Builds a config from ordered `key = value` pairs; later pairs win.
    /// `task` and `arch` pick the defaults, and `mem_size` follows `frames`
    /// unless given.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, TrainError> {
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let task = match last("task") {
            Some(v) => v.parse().map_err(|e| TrainError::Config(format!("{e}")))?,
            None => Task::IMaze,
        };
        let arch = match last("arch") {
            Some(v) => v.parse().map_err(|e| TrainError::Config(format!("{e}")))?,
            None => Variant::Frmqn,
        };
        let mut cfg = TrainConfig::new(task, arch);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        if last("mem_size").is_none() {
            cfg.mem_size = if arch.has_memory() { cfg.frames.saturating_sub(1) } else { 0 };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, TrainError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    pub fn parse(text: &str) -> Result<Self, TrainError> {
        Self::from_pairs(&Self::parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        match key {
            "task" => self.task = value.parse().map_err(|e| TrainError::Config(format!("{e}")))?,
            "arch" => self.arch = value.parse().map_err(|e| TrainError::Config(format!("{e}")))?,
            "seed" => self.seed = parse(key, value)?,
            "profile" => self.profile = value.parse()?,
            "frames" => self.frames = parse(key, value)?,
            "mem_size" => self.mem_size = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "eps_start" => self.eps_start = parse(key, value)?,
            "eps_end" => self.eps_end = parse(key, value)?,
            "eps_anneal" => self.eps_anneal = parse(key, value)?,
            "update_every" => self.update_every = parse(key, value)?,
            "learn_start" => self.learn_start = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "rms_decay" => self.rms_decay = parse(key, value)?,
            "rms_sq_decay" => self.rms_sq_decay = parse(key, value)?,
            "rms_damping" => self.rms_damping = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "target_momentum" => self.target_momentum = parse(key, value)?,
            "replay_capacity" => self.replay_capacity = parse(key, value)?,
            "epoch_steps" => self.epoch_steps = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "eval_epsilon" => self.eval_epsilon = parse(key, value)?,
            "maps" => self.maps = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(TrainError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// All keys in a fixed order; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let value = match key {
                "task" => self.task.to_string(),
                "arch" => self.arch.to_string(),
                "seed" => self.seed.to_string(),
                "profile" => self.profile.name().to_string(),
                "frames" => self.frames.to_string(),
                "mem_size" => self.mem_size.to_string(),
                "steps" => self.steps.to_string(),
                "batch" => self.batch.to_string(),
                "gamma" => self.gamma.to_string(),
                "eps_start" => self.eps_start.to_string(),
                "eps_end" => self.eps_end.to_string(),
                "eps_anneal" => self.eps_anneal.to_string(),
                "update_every" => self.update_every.to_string(),
                "learn_start" => self.learn_start.to_string(),
                "lr" => self.lr.to_string(),
                "rms_decay" => self.rms_decay.to_string(),
                "rms_sq_decay" => self.rms_sq_decay.to_string(),
                "rms_damping" => self.rms_damping.to_string(),
                "clip_norm" => self.clip_norm.to_string(),
                "target_momentum" => self.target_momentum.to_string(),
                "replay_capacity" => self.replay_capacity.to_string(),
                "epoch_steps" => self.epoch_steps.to_string(),
                "eval_episodes" => self.eval_episodes.to_string(),
                "eval_epsilon" => self.eval_epsilon.to_string(),
                "maps" => match &self.maps {
                    Some(p) => p.display().to_string(),
                    None => continue,
                },
                "out" => match &self.out {
                    Some(p) => p.display().to_string(),
                    None => continue,
                },
                _ => unreachable!("listed key"),
            };
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.validate_learning()?;
        self.arch_config().validate()?;
        Ok(())
    }

    /// Checks every setting except the network shape.
    pub fn validate_learning(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if self.batch == 0 || self.update_every == 0 || self.epoch_steps == 0 || self.frames == 0 {
            return bad("batch, update_every, epoch_steps and frames must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return bad("epsilon schedule must satisfy 0 <= eps_end <= eps_start <= 1");
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return bad("eval_epsilon must lie in [0, 1]");
        }
        for (name, v) in [
            ("rms_decay", self.rms_decay),
            ("rms_sq_decay", self.rms_sq_decay),
            ("target_momentum", self.target_momentum),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(TrainError::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.rms_damping > 0.0 && self.clip_norm > 0.0) {
            return bad("rms_damping and clip_norm must be positive");
        }
        if self.replay_capacity < self.batch {
            return bad("replay_capacity must hold at least one batch");
        }
        Ok(())
    }

    pub fn arch_config(&self) -> ArchConfig {
        let base = match self.profile {
            Profile::Full => ArchConfig::full(self.arch, self.frames),
            Profile::Desk => ArchConfig::desk(self.arch, self.frames),
        };
        ArchConfig {
            mem_size: self.mem_size,
            ..base
        }
    }

    pub fn rmsprop(&self) -> super::RmsPropConfig {
        super::RmsPropConfig {
            decay: self.rms_decay,
            sq_decay: self.rms_sq_decay,
            damping: self.rms_damping,
            clip_norm: self.clip_norm,
        }
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        super::epsilon_schedule(step, self.eps_start, self.eps_end, self.eps_anneal)
    }
}
