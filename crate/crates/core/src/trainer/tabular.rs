//! A deterministic chain MDP and a linear Q-function over one-hot states,
//! small enough that the learned greedy policy can be compared with value
//! iteration.

use super::learner::{EnvStep, Environment, QNetwork};
use super::TrainError;
use crate::numerics::{ParamStore, Rng, Tensor};

/// States `0..n` on a line; both ends are terminal. Action 0 moves left and
/// action 1 moves right. Entering state 0 pays `left_reward`, entering
/// state `n-1` pays `right_reward`, and every other move pays `step_reward`.
/// Episodes start in a uniformly drawn interior state and time out after
/// `max_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainMdp {
    pub states: usize,
    pub left_reward: f64,
    pub right_reward: f64,
    pub step_reward: f64,
    pub max_steps: usize,
    state: usize,
    steps: usize,
}

impl ChainMdp {
    pub fn new(states: usize, left_reward: f64, right_reward: f64, step_reward: f64, max_steps: usize) -> Self {
        assert!(states >= 3, "chain needs an interior state");
        Self {
            states,
            left_reward,
            right_reward,
            step_reward,
            max_steps,
            state: 1,
            steps: 0,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Deterministic successor and reward of `action` in `state`.
    pub fn transition(&self, state: usize, action: usize) -> (usize, f64, bool) {
        let next = if action == 0 { state - 1 } else { state + 1 };
        if next == 0 {
            (next, self.left_reward, true)
        } else if next == self.states - 1 {
            (next, self.right_reward, true)
        } else {
            (next, self.step_reward, false)
        }
    }

    pub fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.states];
        v[state] = 1.0;
        v
    }
}

impl Environment for ChainMdp {
    type Obs = Vec<f64>;

    fn actions(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut Rng) -> Result<Vec<f64>, TrainError> {
        self.state = 1 + rng.below(self.states - 2);
        self.steps = 0;
        Ok(self.one_hot(self.state))
    }

    fn step(&mut self, action: usize) -> Result<EnvStep<Vec<f64>>, TrainError> {
        if action >= 2 {
            return Err(TrainError::Config(format!("action {action} out of range")));
        }
        let (next, reward, terminal) = self.transition(self.state, action);
        self.state = next;
        self.steps += 1;
        Ok(EnvStep {
            obs: self.one_hot(next),
            reward,
            done: terminal || self.steps >= self.max_steps,
        })
    }
}

/// `q = W x` for a single-frame window `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearQ {
    params: ParamStore,
    inputs: usize,
    actions: usize,
}

impl LinearQ {
    /// Zero-initialised weights.
    pub fn new(inputs: usize, actions: usize) -> Self {
        let mut params = ParamStore::new();
        params.add("w", Tensor::zeros(&[actions, inputs]));
        Self {
            params,
            inputs,
            actions,
        }
    }

    pub fn weights(&self) -> &[f64] {
        self.params.values()[0].data()
    }

    fn q_one(&self, x: &[f64]) -> Vec<f64> {
        let w = self.weights();
        (0..self.actions)
            .map(|a| w[a * self.inputs..(a + 1) * self.inputs].iter().zip(x).map(|(w, x)| w * x).sum())
            .collect()
    }
}

impl QNetwork for LinearQ {
    type Obs = Vec<f64>;
    type Tape = Vec<Vec<f64>>;

    fn frames(&self) -> usize {
        1
    }

    fn actions(&self) -> usize {
        self.actions
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn q_batch(&self, windows: &[&[&Vec<f64>]]) -> Result<Vec<f64>, TrainError> {
        let mut q = Vec::with_capacity(windows.len() * self.actions);
        for w in windows {
            match w {
                [x] if x.len() == self.inputs => q.extend(self.q_one(x)),
                _ => return Err(TrainError::Config("linear q takes one frame of the input width".into())),
            }
        }
        Ok(q)
    }

    fn forward_tape(&self, windows: &[&[&Vec<f64>]]) -> Result<(Vec<f64>, Vec<Vec<f64>>), TrainError> {
        let q = self.q_batch(windows)?;
        Ok((q, windows.iter().map(|w| w[0].clone()).collect()))
    }

    fn backward(&mut self, tape: &Vec<Vec<f64>>, grad_q: &[f64]) -> Result<(), TrainError> {
        if grad_q.len() != tape.len() * self.actions {
            return Err(TrainError::Config("gradient does not match the batch".into()));
        }
        let (n, a) = (self.inputs, self.actions);
        let g = self.params.grads_mut()[0].data_mut();
        for (x, dq) in tape.iter().zip(grad_q.chunks(a)) {
            for (act, &d) in dq.iter().enumerate() {
                for (gi, &xi) in g[act * n..(act + 1) * n].iter_mut().zip(x) {
                    *gi += d * xi;
                }
            }
        }
        Ok(())
    }
}
