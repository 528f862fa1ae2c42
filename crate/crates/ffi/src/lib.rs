//! C interface to the grid-world simulator and trained agents.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`MemqStatus`];
//! on failure a message is kept per thread and can be copied out with
//! [`memq_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use memq::agents::{AgentNet, AgentState};
use memq::evalcli::load_checkpoint;
use memq::numerics::Rng;
use memq::obs::Observation;
use memq::worldsim::{render, Action, EpisodeState, MapSpec, VIEW_SIZE};

/// Bytes in one observation: 3 channels of `32 × 32`, channel-major.
pub const MEMQ_OBS_LEN: usize = 3 * 32 * 32;
pub const MEMQ_NUM_ACTIONS: usize = 6;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    EpisodeOver = 6,
    Panic = 7,
}

/// An environment: one map plus the running episode.
pub struct MemqEnv {
    map: MapSpec,
    rng: Rng,
    state: EpisodeState,
}

/// A trained network with its streaming state.
pub struct MemqAgent {
    net: AgentNet,
    state: AgentState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: MemqStatus, msg: impl Into<String>) -> MemqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> MemqStatus) -> MemqStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(MemqStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, MemqStatus> {
    if p.is_null() {
        return Err(fail(MemqStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MemqStatus::InvalidArgument, "string is not UTF-8"))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! deref_mut {
    ($p:expr) => {
        match $p.as_mut() {
            Some(v) => v,
            None => return fail(MemqStatus::NullPointer, "null handle"),
        }
    };
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn memq_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a map from its text form and starts an episode seeded by `seed`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn memq_env_from_text(text: *const c_char, seed: u64, out: *mut *mut MemqEnv) -> MemqStatus {
    guard(|| {
        if out.is_null() {
            return fail(MemqStatus::NullPointer, "null output pointer");
        }
        let text = try_status!(str_arg(text));
        let map = match MapSpec::parse(text) {
            Ok(m) => m,
            Err(e) => return fail(MemqStatus::Format, e.to_string()),
        };
        let mut rng = Rng::new(seed);
        match EpisodeState::reset(&map, &mut rng) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(MemqEnv { map, rng, state }));
                MemqStatus::Ok
            }
            Err(e) => fail(MemqStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Reads a `.map` file and starts an episode.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn memq_env_load(path: *const c_char, seed: u64, out: *mut *mut MemqEnv) -> MemqStatus {
    guard(|| {
        let path = try_status!(str_arg(path));
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(MemqStatus::Io, format!("{path}: {e}")),
        };
        let Ok(c) = std::ffi::CString::new(text) else {
            return fail(MemqStatus::Format, "map file contains NUL bytes");
        };
        memq_env_from_text(c.as_ptr(), seed, out)
    })
}

/// Starts a new episode on the same map.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn memq_env_reset(env: *mut MemqEnv) -> MemqStatus {
    guard(|| {
        let env = deref_mut!(env);
        match EpisodeState::reset(&env.map, &mut env.rng) {
            Ok(s) => {
                env.state = s;
                MemqStatus::Ok
            }
            Err(e) => fail(MemqStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Applies `action` (0..6) and reports the reward and whether the episode
/// ended.
///
/// # Safety
/// `env` must be a live handle; `reward` and `done` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn memq_env_step(env: *mut MemqEnv, action: u32, reward: *mut f64, done: *mut bool) -> MemqStatus {
    guard(|| {
        let env = deref_mut!(env);
        if reward.is_null() || done.is_null() {
            return fail(MemqStatus::NullPointer, "null output pointer");
        }
        let Some(a) = Action::from_index(action as usize) else {
            return fail(MemqStatus::InvalidArgument, format!("action {action} out of range"));
        };
        match env.state.step(a) {
            Ok(r) => {
                *reward = r.reward;
                *done = r.done;
                MemqStatus::Ok
            }
            Err(e) => fail(MemqStatus::EpisodeOver, e.to_string()),
        }
    })
}

/// Renders the current view into `buf` (`MEMQ_OBS_LEN` bytes, CHW).
///
/// # Safety
/// `env` must be a live handle and `buf` point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn memq_env_observe(env: *mut MemqEnv, buf: *mut u8, len: usize) -> MemqStatus {
    guard(|| {
        let env = deref_mut!(env);
        if buf.is_null() {
            return fail(MemqStatus::NullPointer, "null buffer");
        }
        if len != MEMQ_OBS_LEN {
            return fail(MemqStatus::Shape, format!("buffer holds {len} bytes, need {MEMQ_OBS_LEN}"));
        }
        let obs = render(&env.state);
        ptr::copy_nonoverlapping(obs.data().as_ptr(), buf, len);
        MemqStatus::Ok
    })
}

/// Episode return so far.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn memq_env_total_reward(env: *mut MemqEnv, out: *mut f64) -> MemqStatus {
    guard(|| {
        let env = deref_mut!(env);
        if out.is_null() {
            return fail(MemqStatus::NullPointer, "null output pointer");
        }
        *out = env.state.total_reward();
        MemqStatus::Ok
    })
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn memq_env_free(env: *mut MemqEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Loads a recurrent or memory agent from a checkpoint. Stacked-frame
/// agents have no streaming state and are rejected.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn memq_agent_load(path: *const c_char, out: *mut *mut MemqAgent) -> MemqStatus {
    guard(|| {
        if out.is_null() {
            return fail(MemqStatus::NullPointer, "null output pointer");
        }
        let path = try_status!(str_arg(path));
        let net = match load_checkpoint(Path::new(path)) {
            Ok((_, net)) => net,
            Err(memq::evalcli::EvalError::Io { .. }) => return fail(MemqStatus::Io, format!("cannot read {path}")),
            Err(e) => return fail(MemqStatus::Format, e.to_string()),
        };
        let cfg = net.config();
        if cfg.obs_height != VIEW_SIZE || cfg.obs_width != VIEW_SIZE || cfg.obs_channels != 3 {
            return fail(MemqStatus::Shape, "agent input does not match the renderer");
        }
        match net.initial_state() {
            Ok(state) => {
                *out = Box::into_raw(Box::new(MemqAgent { net, state }));
                MemqStatus::Ok
            }
            Err(e) => fail(MemqStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Clears the agent's memory and recurrent state for a new episode.
///
/// # Safety
/// `agent` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn memq_agent_reset(agent: *mut MemqAgent) -> MemqStatus {
    guard(|| {
        let agent = deref_mut!(agent);
        match agent.net.initial_state() {
            Ok(s) => {
                agent.state = s;
                MemqStatus::Ok
            }
            Err(e) => fail(MemqStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Feeds one observation, writes the `MEMQ_NUM_ACTIONS` Q-values to `q`
/// (may be null) and the greedy action to `action`.
///
/// # Safety
/// `agent` must be a live handle, `obs` point to `obs_len` bytes, `q` be
/// null or point to `q_len` writable doubles, and `action` be valid.
#[no_mangle]
pub unsafe extern "C" fn memq_agent_step(
    agent: *mut MemqAgent,
    obs: *const u8,
    obs_len: usize,
    q: *mut f64,
    q_len: usize,
    action: *mut u32,
) -> MemqStatus {
    guard(|| {
        let agent = deref_mut!(agent);
        if obs.is_null() || action.is_null() {
            return fail(MemqStatus::NullPointer, "null argument");
        }
        if obs_len != MEMQ_OBS_LEN {
            return fail(MemqStatus::Shape, format!("observation has {obs_len} bytes, need {MEMQ_OBS_LEN}"));
        }
        let data = std::slice::from_raw_parts(obs, obs_len).to_vec();
        let frame = Observation::new(3, VIEW_SIZE, VIEW_SIZE, data).expect("length checked");
        let out = match agent.net.step(&mut agent.state, &frame) {
            Ok(o) => o,
            Err(e) => return fail(MemqStatus::InvalidArgument, e.to_string()),
        };
        if !q.is_null() {
            if q_len != out.q.len() {
                return fail(MemqStatus::Shape, format!("q buffer holds {q_len} values, need {}", out.q.len()));
            }
            ptr::copy_nonoverlapping(out.q.as_ptr(), q, q_len);
        }
        *action = memq::trainer::greedy_action(&out.q) as u32;
        MemqStatus::Ok
    })
}

/// # Safety
/// `agent` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn memq_agent_free(agent: *mut MemqAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}
