use crate::numerics::{NumericError, ParamStore};

pub const EPS_START: f64 = 1.0;
pub const EPS_END: f64 = 0.1;
pub const EPS_ANNEAL: u64 = 1_000_000;

/// Default exploration schedule: 1.0 at step 0 falling linearly to 0.1 at
/// step 10⁶, constant afterwards.
pub fn epsilon_at(t: u64) -> f64 {
    epsilon_schedule(t, EPS_START, EPS_END, EPS_ANNEAL)
}

/// Linear interpolation from `start` to `end` over `anneal` steps. Written
/// as `end + (start - end)(1 - frac)` so both endpoints are exact.
pub fn epsilon_schedule(t: u64, start: f64, end: f64, anneal: u64) -> f64 {
    if anneal == 0 {
        return end;
    }
    let frac = t.min(anneal) as f64 / anneal as f64;
    end + (start - end) * (1.0 - frac)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    /// Decay of the running gradient mean.
    pub decay: f64,
    /// Decay of the running squared-gradient mean.
    pub sq_decay: f64,
    pub damping: f64,
    pub clip_norm: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            decay: 0.95,
            sq_decay: 0.95,
            damping: 1e-2,
            clip_norm: 20.0,
        }
    }
}

/// Running first and second gradient moments, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    mean: Vec<Vec<f64>>,
    mean_sq: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.values().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            mean: zeros.clone(),
            mean_sq: zeros,
        }
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.mean[i]
    }

    pub fn mean_sq(&self, i: usize) -> &[f64] {
        &self.mean_sq[i]
    }

    fn matches(&self, params: &ParamStore) -> bool {
        self.mean.len() == params.len()
            && self.mean.iter().zip(params.values()).all(|(m, t)| m.len() == t.len())
    }
}

/// Rescales all gradients by `max_norm / norm` when their global L2 norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in params.grads_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// Clips the gradients, then applies one centred RMSProp step:
/// `ḡ ← ρḡ + (1-ρ)g`, `s̄ ← ρ's̄ + (1-ρ')g²`, `θ ← θ - lr·g/√(s̄ - ḡ² + δ)`.
/// Nothing is modified when the step would produce a non-finite value.
/// Returns the gradient norm before clipping.
pub fn rmsprop_step(
    params: &mut ParamStore,
    state: &mut OptimizerState,
    cfg: &RmsPropConfig,
    lr: f64,
) -> Result<f64, NumericError> {
    if !state.matches(params) {
        return Err(NumericError::Invalid {
            op: "rmsprop_step",
            msg: "optimizer state does not match the parameters".into(),
        });
    }
    let norm = params.grad_norm();
    if !norm.is_finite() {
        return Err(NumericError::NonFinite { op: "rmsprop_step" });
    }
    let scale = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
    let mut mean = state.mean.clone();
    let mut mean_sq = state.mean_sq.clone();
    let mut values: Vec<Vec<f64>> = params.values().iter().map(|t| t.data().to_vec()).collect();
    for (i, g) in params.grads().iter().enumerate() {
        for (j, &raw) in g.data().iter().enumerate() {
            let g = raw * scale;
            let m = cfg.decay * mean[i][j] + (1.0 - cfg.decay) * g;
            let s = cfg.sq_decay * mean_sq[i][j] + (1.0 - cfg.sq_decay) * g * g;
            mean[i][j] = m;
            mean_sq[i][j] = s;
            values[i][j] -= lr * g / (s - m * m + cfg.damping).sqrt();
        }
    }
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(NumericError::NonFinite { op: "rmsprop_step" });
    }
    if scale != 1.0 {
        for g in params.grads_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    for (t, v) in params.values_mut().iter_mut().zip(values) {
        t.data_mut().copy_from_slice(&v);
    }
    state.mean = mean;
    state.mean_sq = mean_sq;
    Ok(norm)
}

/// `θ′ ← θ + μ(θ′ − θ)`, i.e. `μθ′ + (1−μ)θ`. The gap to `θ` shrinks by
/// exactly `μ` per call and equal tensors stay unchanged.
pub fn soft_update(target: &mut ParamStore, online: &ParamStore, momentum: f64) -> Result<(), NumericError> {
    if !target.same_layout(online) {
        return Err(NumericError::Invalid {
            op: "soft_update",
            msg: "target and online parameters differ in layout".into(),
        });
    }
    for (t, o) in target.values_mut().iter_mut().zip(online.values()) {
        for (tv, &ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = ov + momentum * (*tv - ov);
        }
    }
    Ok(())
}
