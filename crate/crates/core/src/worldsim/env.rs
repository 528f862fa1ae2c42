use serde::{Deserialize, Serialize};

use super::map::{Cell, MapSpec, Task};
use super::WorldError;
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    LookLeft,
    LookRight,
    LookUp,
    LookDown,
    Forward,
    Backward,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::LookLeft,
        Action::LookRight,
        Action::LookUp,
        Action::LookDown,
        Action::Forward,
        Action::Backward,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Yaw {
    North,
    East,
    South,
    West,
}

impl Yaw {
    pub const ALL: [Yaw; 4] = [Yaw::North, Yaw::East, Yaw::South, Yaw::West];

    /// Unit step in grid coordinates (`y` grows southwards).
    pub fn delta(self) -> (i64, i64) {
        match self {
            Yaw::North => (0, -1),
            Yaw::East => (1, 0),
            Yaw::South => (0, 1),
            Yaw::West => (-1, 0),
        }
    }

    pub fn left(self) -> Yaw {
        Yaw::ALL[(self as usize + 3) % 4]
    }

    pub fn right(self) -> Yaw {
        Yaw::ALL[(self as usize + 1) % 4]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pitch {
    Level,
    /// Looking 45° down.
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: usize,
    pub y: usize,
    pub yaw: Yaw,
    pub pitch: Pitch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndicatorColor {
    Yellow,
    Green,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

/// Which goal the current episode requires, given its indicator and rooms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Enter this goal once.
    Single(Cell),
    /// Enter the first goal, then the second.
    Ordered(Cell, Cell),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub map: MapSpec,
    pub pose: AgentPose,
    pub indicator: Option<IndicatorColor>,
    pub steps: usize,
    pub visited: Vec<Cell>,
    pub terminal: bool,
    pub outcome: Option<Outcome>,
    /// Sum of goal rewards so far.
    goal_reward: f64,
    /// Set once a wrong goal has been entered in a sequential task.
    wrong_order: bool,
}

/// Result of one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    /// Goal cell entered for the first time on this step.
    pub entered: Option<Cell>,
}

impl EpisodeState {
    /// Starts an episode: spawn by the task rule, uniform yaw, level pitch,
    /// and a 50/50 indicator colour for indicator tasks.
    pub fn reset(map: &MapSpec, rng: &mut Rng) -> Result<EpisodeState, WorldError> {
        map.validate()?;
        let spawns = map.spawn_cells();
        let (x, y) = spawns[rng.below(spawns.len())];
        let yaw = Yaw::ALL[rng.below(4)];
        let indicator = map.task.has_indicator().then(|| {
            if rng.bernoulli(0.5) {
                IndicatorColor::Yellow
            } else {
                IndicatorColor::Green
            }
        });
        Ok(EpisodeState {
            map: map.clone(),
            pose: AgentPose {
                x,
                y,
                yaw,
                pitch: Pitch::Level,
            },
            indicator,
            steps: 0,
            visited: Vec::new(),
            terminal: false,
            outcome: None,
            goal_reward: 0.0,
            wrong_order: false,
        })
    }

    /// Starts an episode at a given pose and indicator, for scripted runs.
    pub fn with_pose(
        map: &MapSpec,
        pose: AgentPose,
        indicator: Option<IndicatorColor>,
    ) -> Result<EpisodeState, WorldError> {
        map.validate()?;
        if !map.cell(pose.x, pose.y).is_passable() {
            return Err(WorldError::Invalid(format!(
                "pose ({}, {}) is not on a passable cell",
                pose.x, pose.y
            )));
        }
        if map.task.has_indicator() != indicator.is_some() {
            return Err(WorldError::Invalid("indicator colour does not fit the task".into()));
        }
        Ok(EpisodeState {
            map: map.clone(),
            pose,
            indicator,
            steps: 0,
            visited: Vec::new(),
            terminal: false,
            outcome: None,
            goal_reward: 0.0,
            wrong_order: false,
        })
    }

    pub fn objective(&self) -> Objective {
        use Cell::{Blue, Red};
        let yellow = self.indicator == Some(IndicatorColor::Yellow);
        match self.map.task {
            Task::IMaze | Task::SingleInd => Objective::Single(if yellow { Red } else { Blue }),
            Task::PatternMatch => {
                Objective::Single(if self.map.rooms_identical() == Some(true) { Blue } else { Red })
            }
            Task::Single => Objective::Single(Blue),
            Task::Seq => Objective::Ordered(Red, Blue),
            Task::SeqInd => {
                if yellow {
                    Objective::Ordered(Blue, Red)
                } else {
                    Objective::Ordered(Red, Blue)
                }
            }
        }
    }

    /// Episode return so far, `penalty · steps + goal rewards`.
    pub fn total_reward(&self) -> f64 {
        self.map.penalty * self.steps as f64 + self.goal_reward
    }

    /// Overrides the step limit, e.g. for longer evaluation horizons.
    pub fn set_horizon(&mut self, max_steps: usize) {
        self.map.max_steps = max_steps;
    }

    pub fn cell(&self) -> Cell {
        self.map.cell(self.pose.x, self.pose.y)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, WorldError> {
        if self.terminal {
            return Err(WorldError::Terminal);
        }
        let pose = &mut self.pose;
        match action {
            Action::LookLeft => pose.yaw = pose.yaw.left(),
            Action::LookRight => pose.yaw = pose.yaw.right(),
            Action::LookUp => pose.pitch = Pitch::Level,
            Action::LookDown => pose.pitch = Pitch::Down,
            Action::Forward | Action::Backward => {
                let (dx, dy) = pose.yaw.delta();
                let sign = if action == Action::Forward { 1 } else { -1 };
                let (nx, ny) = (pose.x as i64 + sign * dx, pose.y as i64 + sign * dy);
                if self.map.cell_at(nx, ny).is_passable() {
                    pose.x = nx as usize;
                    pose.y = ny as usize;
                }
            }
        }
        self.steps += 1;
        let mut reward = self.map.penalty;
        let here = self.cell();
        let mut entered = None;
        if here.is_goal() && !self.visited.contains(&here) {
            entered = Some(here);
            self.visited.push(here);
            let r = self.reward_for_goal(here);
            self.goal_reward += r;
            reward += r;
        }
        if !self.terminal && self.steps >= self.map.max_steps {
            self.terminal = true;
            // a reversed visit already counts as failure
            self.outcome = Some(if self.wrong_order {
                Outcome::Failure
            } else {
                Outcome::Timeout
            });
        }
        Ok(StepResult {
            reward,
            done: self.terminal,
            entered,
        })
    }

    /// Reward for entering `goal`; sets the terminal flag and outcome.
    fn reward_for_goal(&mut self, goal: Cell) -> f64 {
        match self.objective() {
            Objective::Single(target) => {
                self.terminal = true;
                if goal == target {
                    self.outcome = Some(Outcome::Success);
                    1.0
                } else {
                    self.outcome = Some(Outcome::Failure);
                    -1.0
                }
            }
            Objective::Ordered(first, _) => {
                let in_order = self.visited.first() == Some(&first);
                if self.visited.len() == 1 {
                    self.wrong_order = !in_order;
                    if in_order {
                        0.5
                    } else {
                        -0.5
                    }
                } else {
                    self.terminal = true;
                    if self.wrong_order {
                        self.outcome = Some(Outcome::Failure);
                        -1.0
                    } else {
                        self.outcome = Some(Outcome::Success);
                        1.0
                    }
                }
            }
        }
    }
}
