use std::collections::VecDeque;

use super::TrainError;
use crate::numerics::Rng;

/// One environment step as stored in replay.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<O> {
    pub episode: u64,
    pub step: usize,
    pub obs: O,
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Clone, Debug)]
struct StoredEpisode<O> {
    id: u64,
    transitions: Vec<Transition<O>>,
    /// Observation after the last transition; set when the episode closes.
    last: Option<O>,
}

impl<O> StoredEpisode<O> {
    /// Transitions whose successor observation is known.
    fn eligible(&self) -> usize {
        match self.last {
            Some(_) => self.transitions.len(),
            None => self.transitions.len().saturating_sub(1),
        }
    }

    fn obs(&self, i: usize) -> &O {
        match self.transitions.get(i) {
            Some(t) => &t.obs,
            None => self.last.as_ref().expect("successor of an eligible transition"),
        }
    }

    /// `k` observations ending at index `end`, repeating the first frame
    /// before the episode start.
    fn window(&self, end: usize, k: usize) -> Vec<&O> {
        (0..k)
            .map(|j| self.obs((end + j + 1).saturating_sub(k)))
            .collect()
    }
}

/// Training windows for one update.
#[derive(Clone, Debug)]
pub struct Batch<'a, O> {
    pub windows: Vec<Vec<&'a O>>,
    pub next_windows: Vec<Vec<&'a O>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
}

impl<O> Batch<'_, O> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Episodes in arrival order. Capacity counts transitions, and eviction
/// always drops the oldest whole episode.
#[derive(Clone, Debug)]
pub struct ReplayMemory<O> {
    episodes: VecDeque<StoredEpisode<O>>,
    capacity: usize,
    len: usize,
    next_id: u64,
    open: bool,
}

impl<O> ReplayMemory<O> {
    pub fn new(capacity: usize) -> Self {
        Self {
            episodes: VecDeque::new(),
            capacity,
            len: 0,
            next_id: 0,
            open: false,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored transitions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Transitions per stored episode, oldest first.
    pub fn episode_lengths(&self) -> Vec<usize> {
        self.episodes.iter().map(|e| e.transitions.len()).collect()
    }

    pub fn episode_ids(&self) -> Vec<u64> {
        self.episodes.iter().map(|e| e.id).collect()
    }

    /// Number of `(episode, index)` pairs that can be sampled.
    pub fn eligible(&self) -> usize {
        self.episodes.iter().map(StoredEpisode::eligible).sum()
    }

    /// Opens a new episode and returns its id. An open episode without a
    /// final observation is closed by dropping its last transition's
    /// successor, so that transition is never sampled.
    pub fn begin_episode(&mut self) -> u64 {
        if self.open && self.episodes.back().is_some_and(|e| e.transitions.is_empty()) {
            self.episodes.pop_back();
        }
        self.open = true;
        let id = self.next_id;
        self.next_id += 1;
        self.episodes.push_back(StoredEpisode {
            id,
            transitions: Vec::new(),
            last: None,
        });
        id
    }

    /// Appends a transition to the open episode, evicting old episodes
    /// first if the memory is full.
    pub fn push(&mut self, obs: O, action: usize, reward: f64, terminal: bool) -> Result<(), TrainError> {
        if !self.open {
            return Err(TrainError::Config("push outside an episode".into()));
        }
        if !reward.is_finite() {
            return Err(TrainError::Config(format!("non-finite reward {reward}")));
        }
        while self.len + 1 > self.capacity {
            if self.episodes.len() <= 1 {
                return Err(TrainError::Capacity {
                    capacity: self.capacity,
                });
            }
            let old = self.episodes.pop_front().expect("non-empty");
            self.len -= old.transitions.len();
        }
        let ep = self.episodes.back_mut().expect("open episode");
        let step = ep.transitions.len();
        ep.transitions.push(Transition {
            episode: ep.id,
            step,
            obs,
            action,
            reward,
            terminal,
        });
        self.len += 1;
        Ok(())
    }

    /// Closes the open episode with the observation that followed its last
    /// transition.
    pub fn end_episode(&mut self, last: O) -> Result<(), TrainError> {
        if !self.open {
            return Err(TrainError::Config("no open episode".into()));
        }
        self.open = false;
        let ep = self.episodes.back_mut().expect("open episode");
        if ep.transitions.is_empty() {
            self.episodes.pop_back();
        } else {
            ep.last = Some(last);
        }
        Ok(())
    }

    /// Uniform draw over eligible `(episode position, index)` pairs.
    pub fn sample_index(&self, rng: &mut Rng) -> Result<(usize, usize), TrainError> {
        let total = self.eligible();
        if total == 0 {
            return Err(TrainError::NotReady {
                eligible: 0,
                needed: 1,
            });
        }
        let mut u = rng.below(total);
        for (e, ep) in self.episodes.iter().enumerate() {
            let n = ep.eligible();
            if u < n {
                return Ok((e, u));
            }
            u -= n;
        }
        unreachable!("draw below the eligible total")
    }

    pub fn transition(&self, episode: usize, index: usize) -> Option<&Transition<O>> {
        self.episodes.get(episode)?.transitions.get(index)
    }

    /// `k`-frame window ending at a stored transition, first frame repeated
    /// before the episode start.
    pub fn window(&self, episode: usize, index: usize, k: usize) -> Option<Vec<&O>> {
        let ep = self.episodes.get(episode)?;
        (index < ep.transitions.len()).then(|| ep.window(index, k))
    }

    /// `batch` samples drawn uniformly with replacement, each with its
    /// `k`-frame window and the successor window.
    pub fn sample_batch(&self, rng: &mut Rng, batch: usize, k: usize) -> Result<Batch<'_, O>, TrainError> {
        let eligible = self.eligible();
        if eligible < batch {
            return Err(TrainError::NotReady {
                eligible,
                needed: batch,
            });
        }
        let mut out = Batch {
            windows: Vec::with_capacity(batch),
            next_windows: Vec::with_capacity(batch),
            actions: Vec::with_capacity(batch),
            rewards: Vec::with_capacity(batch),
            terminals: Vec::with_capacity(batch),
        };
        for _ in 0..batch {
            let (e, i) = self.sample_index(rng)?;
            let ep = &self.episodes[e];
            let t = &ep.transitions[i];
            out.windows.push(ep.window(i, k));
            out.next_windows.push(ep.window(i + 1, k));
            out.actions.push(t.action);
            out.rewards.push(t.reward);
            out.terminals.push(t.terminal);
        }
        Ok(out)
    }
}
