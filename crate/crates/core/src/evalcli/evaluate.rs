use std::collections::BTreeMap;

use super::report::{DistanceBin, EvalReport, SizeRow};
use super::EvalError;
use crate::agents::{AgentNet, Variant};
use crate::numerics::Rng;
use crate::obs::Observation;
use crate::trainer::{greedy_action, Actor};
use crate::worldsim::{render, Cell, EpisodeState, MapSpec, Objective, Outcome, Task};

/// Something that picks actions in the grid world.
pub trait Policy {
    /// Starts an episode whose first observation is `obs`.
    fn begin(&mut self, state: &EpisodeState, obs: &Observation) -> Result<(), EvalError>;
    fn act(&mut self, state: &EpisodeState, rng: &mut Rng) -> Result<usize, EvalError>;
    /// Receives the observation after a non-final step.
    fn observe(&mut self, obs: &Observation) -> Result<(), EvalError>;
}

/// ε-greedy acting on the network's `K`-frame window.
#[derive(Clone, Debug)]
pub struct NetPolicy {
    net: AgentNet,
    actor: Actor<Observation>,
    epsilon: f64,
}

impl NetPolicy {
    pub fn new(net: AgentNet, epsilon: f64) -> Self {
        let actor = Actor::new(net.config().frames);
        Self { net, actor, epsilon }
    }

    pub fn net(&self) -> &AgentNet {
        &self.net
    }
}

impl Policy for NetPolicy {
    fn begin(&mut self, _state: &EpisodeState, obs: &Observation) -> Result<(), EvalError> {
        self.actor.reset();
        self.actor.push(obs.clone());
        Ok(())
    }

    fn act(&mut self, _state: &EpisodeState, rng: &mut Rng) -> Result<usize, EvalError> {
        if rng.next_f64() < self.epsilon {
            return Ok(rng.below(self.net.config().actions));
        }
        let q = self
            .actor
            .q(&self.net)
            .map_err(|e| EvalError::Config(e.to_string()))?;
        Ok(greedy_action(&q))
    }

    fn observe(&mut self, obs: &Observation) -> Result<(), EvalError> {
        self.actor.push(obs.clone());
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub split: String,
    pub episodes: usize,
    pub epsilon: f64,
    /// Step limit overriding each map's own.
    pub horizon: Option<usize>,
    /// `(frames, memory)` overriding the network's window.
    pub window: Option<(usize, usize)>,
    pub seed: u64,
}

impl EvalOptions {
    pub fn new(split: &str, episodes: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            split: split.to_string(),
            episodes,
            epsilon,
            horizon: None,
            window: None,
            seed,
        }
    }
}

/// Window and horizon used on a split: the corridor task's unseen maps get
/// 50 frames (memory 49) and 100 steps, except DQN which keeps its window;
/// random mazes' unseen splits get 10 frames for DQN and DRQN and 30
/// (memory 29) for the memory variants.
pub fn split_window(task: Task, variant: Variant, split: &str) -> (Option<(usize, usize)>, Option<usize>) {
    let unseen = split.starts_with("unseen");
    match task {
        Task::IMaze if unseen => {
            let window = match variant {
                Variant::Dqn => None,
                v if v.has_memory() => Some((50, 49)),
                _ => Some((50, 0)),
            };
            (window, Some(100))
        }
        Task::Single | Task::Seq | Task::SingleInd | Task::SeqInd if unseen => {
            let window = match variant {
                Variant::Dqn => None,
                Variant::Drqn => Some((10, 0)),
                _ => Some((30, 29)),
            };
            (window, None)
        }
        _ => (None, None),
    }
}

/// Size label of a map: corridor length for the corridor task, interior
/// side length otherwise.
pub fn map_size(map: &MapSpec) -> usize {
    match map.task {
        Task::IMaze => map.height - 5,
        _ => map.width.max(map.height) - 2,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub size: usize,
    pub reward: f64,
    pub outcome: Outcome,
    pub steps: usize,
    pub first_goal: Option<Cell>,
    /// Whether the first goal entered was the one the objective asks for first.
    pub first_goal_correct: Option<bool>,
    /// BFS distance from the indicator to the goal it points at.
    pub indicator_distance: Option<usize>,
}

/// Plays one episode. Reset and action randomness come from independent
/// sub-streams of `rng`.
pub fn run_episode<P: Policy>(
    policy: &mut P,
    map: &MapSpec,
    rng: &Rng,
    horizon: Option<usize>,
) -> Result<EpisodeResult, EvalError> {
    let mut env_rng = rng.split("env");
    let mut act_rng = rng.split("act");
    let mut state = EpisodeState::reset(map, &mut env_rng)?;
    if let Some(h) = horizon {
        state.set_horizon(h);
    }
    policy.begin(&state, &render(&state))?;
    loop {
        let a = policy.act(&state, &mut act_rng)?;
        let action = crate::worldsim::Action::from_index(a)
            .ok_or_else(|| EvalError::Config(format!("action {a} out of range")))?;
        if state.step(action)?.done {
            break;
        }
        policy.observe(&render(&state))?;
    }
    let objective = state.objective();
    let wanted = match objective {
        Objective::Single(t) => t,
        Objective::Ordered(first, _) => first,
    };
    let first_goal = state.visited.first().copied();
    let indicator_distance = match (map.find(Cell::Indicator), objective) {
        (Some(ind), Objective::Single(target)) => map.find(target).and_then(|g| map.distance(ind, g)),
        _ => None,
    };
    Ok(EpisodeResult {
        size: map_size(map),
        reward: state.total_reward(),
        outcome: state.outcome.unwrap_or(Outcome::Timeout),
        steps: state.steps,
        first_goal,
        first_goal_correct: first_goal.map(|g| g == wanted),
        indicator_distance,
    })
}

#[derive(Default)]
struct Tally {
    episodes: usize,
    reward: f64,
    successes: usize,
    failures: usize,
}

impl Tally {
    fn add(&mut self, r: &EpisodeResult) {
        self.episodes += 1;
        self.reward += r.reward;
        match r.outcome {
            Outcome::Success => self.successes += 1,
            Outcome::Failure => self.failures += 1,
            Outcome::Timeout => {}
        }
    }

    fn rates(&self) -> (f64, f64, f64) {
        let n = self.episodes.max(1) as f64;
        (self.reward / n, self.successes as f64 / n, self.failures as f64 / n)
    }
}

/// Runs `opts.episodes` episodes, each on a map drawn uniformly with its own
/// seed derived from `opts.seed` and the episode index.
pub fn evaluate_policy<P: Policy>(policy: &mut P, maps: &[MapSpec], opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    if maps.is_empty() {
        return Err(EvalError::Config("no maps to evaluate on".into()));
    }
    let root = Rng::new(opts.seed);
    let mut total = Tally::default();
    let mut sizes: BTreeMap<usize, Tally> = BTreeMap::new();
    let mut bins: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for i in 0..opts.episodes {
        let ep = root.split_indexed("episode", i as u64);
        let map = &maps[ep.split("map").below(maps.len())];
        let r = run_episode(policy, map, &ep, opts.horizon)?;
        total.add(&r);
        sizes.entry(r.size).or_default().add(&r);
        if map.task == Task::SingleInd {
            if let (Some(d), Some(correct)) = (r.indicator_distance, r.first_goal_correct) {
                let bin = bins.entry(d).or_default();
                bin.0 += 1;
                bin.1 += usize::from(correct);
            }
        }
    }
    let (reward, success, failure) = total.rates();
    Ok(EvalReport {
        split: opts.split.clone(),
        episodes: total.episodes,
        reward,
        success,
        failure,
        sizes: sizes
            .into_iter()
            .map(|(size, t)| {
                let (reward, success, failure) = t.rates();
                SizeRow {
                    size,
                    episodes: t.episodes,
                    reward,
                    success,
                    failure,
                }
            })
            .collect(),
        distances: bins
            .into_iter()
            .map(|(distance, (visits, correct))| DistanceBin {
                distance,
                visits,
                correct,
            })
            .collect(),
    })
}

/// Evaluates `net`, re-windowed when `opts.window` asks for it. DQN's
/// stacked input cannot change length.
pub fn evaluate(net: &AgentNet, maps: &[MapSpec], opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    let cfg = net.config();
    let net = match opts.window {
        Some((k, m)) if (k, m) != (cfg.frames, cfg.mem_size) => {
            if cfg.variant == Variant::Dqn {
                return Err(EvalError::Config(format!(
                    "dqn takes exactly {} stacked frames and cannot use a {k}-frame window",
                    cfg.frames
                )));
            }
            net.with_window(k, m)?
        }
        _ => net.clone(),
    };
    evaluate_policy(&mut NetPolicy::new(net, opts.epsilon), maps, opts)
}

/// Precision of first goal visits binned by the BFS distance from the
/// indicator to the indicated goal. Episodes without a goal visit are left
/// out, and so are bins without visits.
pub fn precision_vs_distance(net: &AgentNet, maps: &[MapSpec], opts: &EvalOptions) -> Result<Vec<DistanceBin>, EvalError> {
    if let Some(m) = maps.iter().find(|m| m.task != Task::SingleInd) {
        return Err(EvalError::Config(format!(
            "precision by distance needs {} maps, got {}",
            Task::SingleInd,
            m.task
        )));
    }
    Ok(evaluate(net, maps, opts)?.distances)
}
