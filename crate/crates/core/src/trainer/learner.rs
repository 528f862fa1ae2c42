use std::collections::VecDeque;

use super::replay::{Batch, ReplayMemory};
use super::{optim, TrainConfig, TrainError};
use crate::agents::{AgentNet, ForwardPass, Variant};
use crate::numerics::{ParamStore, Rng};
use crate::obs::Observation;
use crate::worldsim::{render, Action, EpisodeState, MapSpec, Outcome};

/// A Q-function trainable by the learner.
pub trait QNetwork: Clone {
    type Obs: Clone;
    /// State kept between forward and backward.
    type Tape;

    /// Window length `K`.
    fn frames(&self) -> usize;
    fn actions(&self) -> usize;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// `[B × actions]` Q-values.
    fn q_batch(&self, windows: &[&[&Self::Obs]]) -> Result<Vec<f64>, TrainError>;
    fn forward_tape(&self, windows: &[&[&Self::Obs]]) -> Result<(Vec<f64>, Self::Tape), TrainError>;
    /// Accumulates `Σ grad_q · ∂q/∂θ` into the parameter gradients.
    fn backward(&mut self, tape: &Self::Tape, grad_q: &[f64]) -> Result<(), TrainError>;

    /// Per-frame features that [`QNetwork::q_from_features`] accepts, for
    /// networks whose window can be encoded one frame at a time.
    fn frame_features(&self, _obs: &Self::Obs) -> Option<Result<Vec<f64>, TrainError>> {
        None
    }

    fn q_from_features(&self, _features: &[&[f64]]) -> Result<Vec<f64>, TrainError> {
        Err(TrainError::Config("network has no per-frame features".into()))
    }
}

impl QNetwork for AgentNet {
    type Obs = Observation;
    type Tape = ForwardPass;

    fn frames(&self) -> usize {
        self.config().frames
    }

    fn actions(&self) -> usize {
        self.config().actions
    }

    fn params(&self) -> &ParamStore {
        AgentNet::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        AgentNet::params_mut(self)
    }

    fn q_batch(&self, windows: &[&[&Observation]]) -> Result<Vec<f64>, TrainError> {
        Ok(self.forward(windows)?.q().to_vec())
    }

    fn forward_tape(&self, windows: &[&[&Observation]]) -> Result<(Vec<f64>, ForwardPass), TrainError> {
        let pass = self.forward(windows)?;
        Ok((pass.q().to_vec(), pass))
    }

    fn backward(&mut self, tape: &ForwardPass, grad_q: &[f64]) -> Result<(), TrainError> {
        Ok(AgentNet::backward(self, tape, grad_q)?)
    }

    fn frame_features(&self, obs: &Observation) -> Option<Result<Vec<f64>, TrainError>> {
        (self.config().variant != Variant::Dqn).then(|| Ok(self.encode(obs)?))
    }

    fn q_from_features(&self, features: &[&[f64]]) -> Result<Vec<f64>, TrainError> {
        Ok(AgentNet::q_from_features(self, features)?)
    }
}

/// Outcome of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep<O> {
    pub obs: O,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    type Obs: Clone;

    fn actions(&self) -> usize;
    /// Starts a new episode and returns its first observation.
    fn reset(&mut self, rng: &mut Rng) -> Result<Self::Obs, TrainError>;
    fn step(&mut self, action: usize) -> Result<EnvStep<Self::Obs>, TrainError>;

    /// How the finished episode ended, when the environment knows.
    fn outcome(&self) -> Option<Outcome> {
        None
    }
}

/// The grid world over a fixed set of maps; each episode samples a map
/// uniformly.
#[derive(Clone, Debug)]
pub struct GridEnv {
    maps: Vec<MapSpec>,
    horizon: Option<usize>,
    state: Option<EpisodeState>,
}

impl GridEnv {
    pub fn new(maps: Vec<MapSpec>) -> Result<Self, TrainError> {
        if maps.is_empty() {
            return Err(TrainError::Config("no maps to train on".into()));
        }
        Ok(Self {
            maps,
            horizon: None,
            state: None,
        })
    }

    /// Overrides each map's step limit.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn state(&self) -> Option<&EpisodeState> {
        self.state.as_ref()
    }
}

impl Environment for GridEnv {
    type Obs = Observation;

    fn actions(&self) -> usize {
        Action::ALL.len()
    }

    fn reset(&mut self, rng: &mut Rng) -> Result<Observation, TrainError> {
        let map = &self.maps[rng.below(self.maps.len())];
        let mut state = EpisodeState::reset(map, rng)?;
        if let Some(h) = self.horizon {
            state.set_horizon(h);
        }
        let obs = render(&state);
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep<Observation>, TrainError> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| TrainError::Config("step before reset".into()))?;
        let action = Action::from_index(action)
            .ok_or_else(|| TrainError::Config(format!("action {action} out of range")))?;
        let r = state.step(action)?;
        Ok(EnvStep {
            obs: render(state),
            reward: r.reward,
            done: r.done,
        })
    }

    fn outcome(&self) -> Option<Outcome> {
        self.state.as_ref().and_then(|s| s.outcome)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// The last `K` observations of the current episode with cached per-frame
/// features. Before `K` frames exist the first frame is repeated, matching
/// the windows drawn from replay.
#[derive(Clone, Debug)]
pub struct Actor<O> {
    frames: usize,
    window: VecDeque<O>,
    features: VecDeque<Option<Vec<f64>>>,
    /// Leading slots that repeat the frame at index `pad`.
    pad: usize,
}

impl<O: Clone> Actor<O> {
    pub fn new(frames: usize) -> Self {
        Self {
            frames,
            window: VecDeque::with_capacity(frames),
            features: VecDeque::with_capacity(frames),
            pad: 0,
        }
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.features.clear();
    }

    pub fn push(&mut self, obs: O) {
        if self.window.is_empty() {
            self.window.extend(std::iter::repeat_n(obs, self.frames));
            self.features.extend(std::iter::repeat_n(None, self.frames));
            self.pad = self.frames.saturating_sub(1);
            return;
        }
        self.pad = self.pad.saturating_sub(1);
        self.window.pop_front();
        self.features.pop_front();
        self.window.push_back(obs);
        self.features.push_back(None);
    }

    /// Drops cached features; call after the parameters change.
    pub fn invalidate(&mut self) {
        self.features.iter_mut().for_each(|f| *f = None);
    }

    pub fn window(&self) -> Vec<&O> {
        self.window.iter().collect()
    }

    /// Q-values of the current window under `net`.
    pub fn q<Q: QNetwork<Obs = O>>(&mut self, net: &Q) -> Result<Vec<f64>, TrainError> {
        if self.window.len() != net.frames() {
            return Err(TrainError::Config("actor window does not match the network".into()));
        }
        let pad = self.pad.min(self.frames.saturating_sub(1));
        for i in (pad..self.frames).chain(0..pad) {
            if self.features[i].is_some() {
                continue;
            }
            if i < pad {
                self.features[i] = self.features[pad].clone();
                continue;
            }
            match net.frame_features(&self.window[i]) {
                Some(f) => self.features[i] = Some(f?),
                None => {
                    let w = self.window();
                    return net.q_batch(&[&w]);
                }
            }
        }
        let feats: Vec<&[f64]> = self.features.iter().map(|f| f.as_deref().expect("filled")).collect();
        net.q_from_features(&feats)
    }
}

/// TD targets `r` for terminal samples and `r + γ max_a′ Q′(s′, a′)`
/// otherwise. Only non-terminal successor windows are evaluated.
pub fn td_targets<Q: QNetwork>(batch: &Batch<'_, Q::Obs>, target: &Q, gamma: f64) -> Result<Vec<f64>, TrainError> {
    let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch.terminals[i]).collect();
    let windows: Vec<&[&Q::Obs]> = live.iter().map(|&i| batch.next_windows[i].as_slice()).collect();
    let mut y = batch.rewards.clone();
    if !windows.is_empty() {
        let q = target.q_batch(&windows)?;
        let a = target.actions();
        for (row, &i) in live.iter().enumerate() {
            let best = q[row * a..(row + 1) * a].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            y[i] += gamma * best;
        }
    }
    Ok(y)
}

/// Zeroes the gradients, then accumulates the gradient of the mean squared
/// TD error `mean_b (Q(s_b, a_b) - y_b)²`. Targets are constants.
pub fn loss_and_grad<Q: QNetwork>(net: &mut Q, batch: &Batch<'_, Q::Obs>, targets: &[f64]) -> Result<f64, TrainError> {
    let b = batch.len();
    if targets.len() != b || b == 0 {
        return Err(TrainError::Config("targets do not match the batch".into()));
    }
    net.params_mut().zero_grads();
    let windows: Vec<&[&Q::Obs]> = batch.windows.iter().map(Vec::as_slice).collect();
    let (q, tape) = net.forward_tape(&windows)?;
    let a = net.actions();
    let mut grad_q = vec![0.0; q.len()];
    let mut loss = 0.0;
    for i in 0..b {
        let act = batch.actions[i];
        if act >= a {
            return Err(TrainError::Config(format!("action {act} out of range")));
        }
        let err = q[i * a + act] - targets[i];
        loss += err * err;
        grad_q[i * a + act] = 2.0 * err / b as f64;
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    net.backward(&tape, &grad_q)?;
    Ok(loss)
}

/// Running totals over finished episodes and updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub episodes: usize,
    pub reward: f64,
    pub successes: usize,
    pub failures: usize,
    pub updates: usize,
    pub loss: f64,
}

impl EpochStats {
    pub fn mean_reward(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.reward / self.episodes as f64
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }

    pub fn mean_loss(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.loss / self.updates as f64
        }
    }
}

/// Online and target networks, optimizer, replay and the acting loop.
/// Episodes continue across calls to [`Learner::run`].
#[derive(Clone, Debug)]
pub struct Learner<Q: QNetwork> {
    cfg: TrainConfig,
    online: Q,
    target: Q,
    opt: optim::OptimizerState,
    replay: ReplayMemory<Q::Obs>,
    actor: Actor<Q::Obs>,
    act_rng: Rng,
    sample_rng: Rng,
    env_rng: Rng,
    step: u64,
    current: Option<Q::Obs>,
    episode_reward: f64,
    stats: EpochStats,
}

impl<Q: QNetwork> Learner<Q> {
    /// The target starts as a copy of `net`. Random streams derive from `rng`.
    pub fn new(net: Q, cfg: &TrainConfig, rng: &Rng) -> Result<Self, TrainError> {
        cfg.validate_learning()?;
        Ok(Self {
            cfg: cfg.clone(),
            target: net.clone(),
            opt: optim::OptimizerState::new(net.params()),
            replay: ReplayMemory::new(cfg.replay_capacity),
            actor: Actor::new(net.frames()),
            online: net,
            act_rng: rng.split("act"),
            sample_rng: rng.split("replay"),
            env_rng: rng.split("env"),
            step: 0,
            current: None,
            episode_reward: 0.0,
            stats: EpochStats::default(),
        })
    }

    pub fn online(&self) -> &Q {
        &self.online
    }

    pub fn target(&self) -> &Q {
        &self.target
    }

    pub fn replay(&self) -> &ReplayMemory<Q::Obs> {
        &self.replay
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Returns and clears the statistics gathered since the last call.
    pub fn take_stats(&mut self) -> EpochStats {
        std::mem::take(&mut self.stats)
    }

    /// ε-greedy choice: a uniform action with probability `eps`, else the
    /// greedy action on the current window.
    fn choose(&mut self, eps: f64) -> Result<usize, TrainError> {
        if self.act_rng.next_f64() < eps {
            return Ok(self.act_rng.below(self.online.actions()));
        }
        let q = self.actor.q(&self.online)?;
        Ok(greedy_action(&q))
    }

    /// Runs `steps` environment steps, updating every `update_every` steps
    /// once `learn_start` steps have passed and replay holds a batch.
    pub fn run<E: Environment<Obs = Q::Obs>>(&mut self, env: &mut E, steps: u64) -> Result<(), TrainError> {
        for _ in 0..steps {
            let obs = match self.current.take() {
                Some(o) => o,
                None => {
                    let o = env.reset(&mut self.env_rng)?;
                    self.replay.begin_episode();
                    self.actor.reset();
                    self.actor.push(o.clone());
                    self.episode_reward = 0.0;
                    o
                }
            };
            let eps = self.cfg.epsilon(self.step);
            let action = self.choose(eps)?;
            let out = env.step(action)?;
            self.replay.push(obs, action, out.reward, out.done)?;
            self.episode_reward += out.reward;
            if out.done {
                self.replay.end_episode(out.obs)?;
                self.stats.episodes += 1;
                self.stats.reward += self.episode_reward;
                match env.outcome() {
                    Some(Outcome::Success) => self.stats.successes += 1,
                    Some(Outcome::Failure) => self.stats.failures += 1,
                    _ => {}
                }
            } else {
                self.actor.push(out.obs.clone());
                self.current = Some(out.obs);
            }
            self.step += 1;
            if self.step.is_multiple_of(self.cfg.update_every) && self.step >= self.cfg.learn_start {
                if let Some(loss) = self.update()? {
                    self.stats.updates += 1;
                    self.stats.loss += loss;
                }
            }
        }
        Ok(())
    }

    /// One batch update and soft target update. `None` when replay does not
    /// yet hold a batch.
    pub fn update(&mut self) -> Result<Option<f64>, TrainError> {
        let batch = match self.replay.sample_batch(&mut self.sample_rng, self.cfg.batch, self.online.frames()) {
            Ok(b) => b,
            Err(TrainError::NotReady { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let y = td_targets(&batch, &self.target, self.cfg.gamma)?;
        let loss = loss_and_grad(&mut self.online, &batch, &y)?;
        optim::rmsprop_step(self.online.params_mut(), &mut self.opt, &self.cfg.rmsprop(), self.cfg.lr)?;
        optim::soft_update(self.target.params_mut(), self.online.params(), self.cfg.target_momentum)?;
        self.actor.invalidate();
        Ok(Some(loss))
    }
}
