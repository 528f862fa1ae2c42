use std::collections::VecDeque;

use super::memory::{memory_read, memory_write, MemoryBlocks};
use super::{AgentError, AgentNet, Variant};
use crate::numerics::{gemm, lstm_forward_rows, relu_half_in_place, NumericError, Tensor};
use crate::obs::Observation;

/// Per-episode recurrent state for step-by-step execution.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    variant: Variant,
    mem_size: usize,
    /// Stored encodings, most recent first; never longer than `mem_size`.
    ring: VecDeque<Vec<f64>>,
    h: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
    o_prev: Option<Vec<f64>>,
    steps: usize,
}

impl AgentState {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stored(&self) -> usize {
        self.ring.len()
    }

    pub fn encodings(&self) -> impl Iterator<Item = &[f64]> {
        self.ring.iter().map(Vec::as_slice)
    }

    pub fn hidden(&self) -> Option<&[f64]> {
        self.h.as_deref()
    }

    pub fn cell(&self) -> Option<&[f64]> {
        self.c.as_deref()
    }

    pub fn previous_read(&self) -> Option<&[f64]> {
        self.o_prev.as_deref()
    }

    /// Stored encodings as an `[e × M]` matrix with zero padding columns.
    pub fn encoding_matrix(&self, enc_dim: usize) -> Tensor {
        let mut out = Tensor::zeros(&[enc_dim, self.mem_size]);
        for (j, e) in self.ring.iter().enumerate() {
            for (i, &v) in e.iter().enumerate() {
                out.data_mut()[i * self.mem_size + j] = v;
            }
        }
        out
    }
}

/// Result of one streaming step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub q: Vec<f64>,
    /// Attention over all `M` slots, when a read happened.
    pub attention: Option<Vec<f64>>,
    pub retrieved: Option<Vec<f64>>,
}

impl AgentNet {
    /// Empty state for a new episode. DQN has no per-step form.
    pub fn initial_state(&self) -> Result<AgentState, AgentError> {
        let cfg = self.config();
        if cfg.variant == Variant::Dqn {
            return Err(AgentError::Config(
                "dqn consumes stacked frames and has no streaming state".into(),
            ));
        }
        let m = cfg.embed_dim;
        let recurrent = cfg.variant.is_recurrent();
        Ok(AgentState {
            variant: cfg.variant,
            mem_size: cfg.mem_size,
            ring: VecDeque::with_capacity(cfg.mem_size),
            h: recurrent.then(|| vec![0.0; m]),
            c: recurrent.then(|| vec![0.0; m]),
            o_prev: (cfg.variant == Variant::Frmqn).then(|| vec![0.0; m]),
            steps: 0,
        })
    }

    /// Per-frame feature: flattened conv output, followed by the
    /// fully-connected layer for DQN/DRQN. DQN expects `frames` stacked
    /// observations, so it is rejected here.
    pub fn encode(&self, obs: &Observation) -> Result<Vec<f64>, AgentError> {
        if self.config().variant == Variant::Dqn {
            return Err(AgentError::Config(
                "dqn encodes a stacked window; use q_values".into(),
            ));
        }
        self.frame_features(obs)
    }

    /// Builds `h_t` from the current feature and advances the recurrent state.
    pub fn context(&self, e_t: &[f64], state: &mut AgentState) -> Result<Vec<f64>, AgentError> {
        let cfg = self.config();
        if state.variant != cfg.variant {
            return Err(AgentError::Config(format!(
                "{} state given to a {} network",
                state.variant, cfg.variant
            )));
        }
        if e_t.len() != cfg.feature_dim() {
            return Err(NumericError::Shape {
                op: "context",
                lhs: vec![e_t.len()],
                rhs: vec![cfg.feature_dim()],
            }
            .into());
        }
        let m = cfg.embed_dim;
        match cfg.variant {
            Variant::Dqn => Err(AgentError::Config("dqn has no context path".into())),
            Variant::Mqn => {
                let w = self.params().value(self.ids.context.expect("mqn context"));
                let mut h = vec![0.0; m];
                gemm(1, e_t.len(), m, 1.0, e_t, false, w.data(), true, 0.0, &mut h);
                Ok(h)
            }
            _ => {
                let ids = self.ids.lstm.expect("recurrent weights");
                let ps = self.params();
                let (h_prev, c_prev) = match (&state.h, &state.c) {
                    (Some(h), Some(c)) => (h.clone(), c.clone()),
                    _ => return Err(AgentError::Config("recurrent state missing".into())),
                };
                let cache = match (ids.feedback, &state.o_prev) {
                    (Some(wo), Some(o)) => lstm_forward_rows(
                        1,
                        m,
                        &[e_t, o],
                        &[ps.value(ids.input).data(), ps.value(wo).data()],
                        ps.value(ids.recurrent).data(),
                        ps.value(ids.bias).data(),
                        &h_prev,
                        &c_prev,
                    ),
                    (None, None) => lstm_forward_rows(
                        1,
                        m,
                        &[e_t],
                        &[ps.value(ids.input).data()],
                        ps.value(ids.recurrent).data(),
                        ps.value(ids.bias).data(),
                        &h_prev,
                        &c_prev,
                    ),
                    _ => return Err(AgentError::Config("feedback state mismatch".into())),
                };
                state.h = Some(cache.h.clone());
                state.c = Some(cache.c);
                Ok(cache.h)
            }
        }
    }

    /// Key/value blocks over the state's stored encodings.
    pub fn memory_blocks(&self, state: &AgentState) -> Result<MemoryBlocks, AgentError> {
        let (k, v) = match (self.ids.key, self.ids.value) {
            (Some(k), Some(v)) => (k, v),
            _ => return Err(AgentError::Config(format!("{} has no memory", self.config().variant))),
        };
        let enc = state.encoding_matrix(self.config().enc_dim());
        memory_write(&enc, state.stored(), self.params().value(k), self.params().value(v))
    }

    /// `q = W^q relu_half(W^h h + o)`; `o = None` means no retrieval.
    pub fn q_head(&self, h: &[f64], o: Option<&[f64]>) -> Result<Vec<f64>, AgentError> {
        let cfg = self.config();
        let (hdim, hid) = (cfg.context_dim(), cfg.hidden_dim());
        if h.len() != hdim || o.is_some_and(|o| o.len() != hid) {
            return Err(NumericError::Shape {
                op: "q_head",
                lhs: vec![h.len(), o.map_or(0, <[f64]>::len)],
                rhs: vec![hdim, hid],
            }
            .into());
        }
        let mut g = o.map_or_else(|| vec![0.0; hid], <[f64]>::to_vec);
        let wh = self.params().value(self.ids.head_h).data();
        gemm(1, hdim, hid, 1.0, h, false, wh, true, 1.0, &mut g);
        relu_half_in_place(&mut g, cfg.relu_split());
        let mut q = vec![0.0; cfg.actions];
        let wq = self.params().value(self.ids.head_q).data();
        gemm(1, hid, cfg.actions, 1.0, &g, false, wq, true, 0.0, &mut q);
        Ok(q)
    }

    /// One streaming step: context, read over earlier frames, Q-values, then
    /// store the current encoding.
    pub fn step(&self, state: &mut AgentState, obs: &Observation) -> Result<StepOutput, AgentError> {
        let cfg = self.config();
        let e_t = self.encode(obs)?;
        let h = self.context(&e_t, state)?;
        let (attention, retrieved) = if cfg.variant.has_memory() && state.stored() > 0 {
            let blocks = self.memory_blocks(state)?;
            let (o, p) = memory_read(&h, &blocks)?;
            (Some(p), Some(o))
        } else {
            (None, None)
        };
        if let Some(prev) = state.o_prev.as_mut() {
            match &retrieved {
                Some(o) => prev.clone_from(o),
                None => prev.fill(0.0),
            }
        }
        let q = self.q_head(&h, retrieved.as_deref())?;
        if cfg.variant.has_memory() {
            state.ring.push_front(e_t);
            state.ring.truncate(cfg.mem_size);
        }
        state.steps += 1;
        Ok(StepOutput {
            q,
            attention,
            retrieved,
        })
    }
}
