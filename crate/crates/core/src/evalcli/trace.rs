use serde::Serialize;

use super::EvalError;
use crate::agents::AgentNet;
use crate::numerics::Rng;
use crate::obs::Observation;
use crate::trainer::greedy_action;
use crate::worldsim::{render, Action, AgentPose, EpisodeState, MapSpec};

/// One step of an attention trace. `attention` covers the valid memory
/// slots at the window's last frame, most recent first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub obs_hash: String,
    pub pose: AgentPose,
    pub action: usize,
    pub reward: f64,
    pub attention: Vec<f64>,
    pub retrieved_norm: f64,
    pub q: Vec<f64>,
}

/// Plays one ε-greedy episode on `map` and records every step. The same
/// `(net, map, seed, epsilon)` always yields the same trace.
pub fn export_trace(net: &AgentNet, map: &MapSpec, seed: u64, epsilon: f64) -> Result<Vec<TraceStep>, EvalError> {
    let cfg = net.config();
    if !cfg.variant.has_memory() {
        return Err(EvalError::Unsupported(format!("{} has no memory to trace", cfg.variant)));
    }
    let root = Rng::new(seed);
    let mut env_rng = root.split("env");
    let mut act_rng = root.split("act");
    let mut state = EpisodeState::reset(map, &mut env_rng)?;
    let k = cfg.frames;
    let mut frames: Vec<Observation> = vec![render(&state)];
    let mut out = Vec::new();
    loop {
        let window = pad_window(&frames, k);
        let pass = net.forward(&[&window])?;
        let q = pass.q_row(0).to_vec();
        let attention = pass.final_attention(0).map(<[f64]>::to_vec).unwrap_or_default();
        let retrieved_norm = pass
            .final_retrieved(0, cfg.embed_dim)
            .map_or(0.0, |o| o.iter().map(|v| v * v).sum::<f64>().sqrt());
        let obs_hash = format!("{:016x}", frames.last().expect("non-empty").digest());
        let pose = state.pose;
        let action = if act_rng.next_f64() < epsilon {
            act_rng.below(cfg.actions)
        } else {
            greedy_action(&q)
        };
        let result = state.step(Action::from_index(action).expect("action in range"))?;
        out.push(TraceStep {
            step: out.len(),
            obs_hash,
            pose,
            action,
            reward: result.reward,
            attention,
            retrieved_norm,
            q,
        });
        if result.done {
            return Ok(out);
        }
        frames.push(render(&state));
    }
}

/// The last `k` frames, repeating the first frame before the episode start.
fn pad_window(frames: &[Observation], k: usize) -> Vec<&Observation> {
    let n = frames.len();
    (0..k).map(|j| &frames[(n + j).saturating_sub(k)]).collect()
}

/// One JSON object per line.
pub fn trace_lines(steps: &[TraceStep]) -> Result<String, EvalError> {
    let mut s = String::new();
    for step in steps {
        s.push_str(&serde_json::to_string(step)?);
        s.push('\n');
    }
    Ok(s)
}
