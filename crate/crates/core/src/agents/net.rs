use super::{AgentError, ArchConfig, Variant};
use crate::numerics::{
    col2im_batch, gemm, im2col_batch, lstm_backward_rows, lstm_forward_rows,
    relu_half_backward_in_place, relu_half_in_place, softmax_backward_slice, softmax_in_place,
    ConvGeometry, LstmCache, ParamId, ParamStore, Rng, Tensor,
};
use crate::obs::Observation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LstmIds {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
    /// FRMQN only: weights on the previous retrieval `o_{t-1}`.
    pub feedback: Option<ParamId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ParamIds {
    pub conv1_w: ParamId,
    pub conv1_b: ParamId,
    pub conv2_w: ParamId,
    pub conv2_b: ParamId,
    pub fc: Option<(ParamId, ParamId)>,
    pub lstm: Option<LstmIds>,
    pub context: Option<ParamId>,
    pub key: Option<ParamId>,
    pub value: Option<ParamId>,
    pub head_h: ParamId,
    pub head_q: ParamId,
}

/// Parameters of one of the five architectures.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentNet {
    config: ArchConfig,
    params: ParamStore,
    pub(crate) ids: ParamIds,
}

/// Per-step retrieval for a whole batch.
#[derive(Clone, Debug)]
struct ReadCache {
    step: usize,
    /// Attention over valid slots, one vector per sample; slot `j` holds frame `step - 1 - j`.
    attention: Vec<Vec<f64>>,
    /// `[B × m]` retrieved memory.
    retrieved: Vec<f64>,
    /// `[B × m]` context used as the query.
    query: Vec<f64>,
}

#[derive(Clone, Debug)]
struct EncoderCache {
    cols1: Vec<f64>,
    a1: Vec<f64>,
    cols2: Vec<f64>,
    a2: Vec<f64>,
    /// `[N × e]` flattened conv output.
    enc: Vec<f64>,
    /// `[N × fc]` after ReLU (DQN/DRQN).
    fc: Option<Vec<f64>>,
}

/// Forward state after the encoder.
#[derive(Clone, Debug)]
struct CoreCache {
    q: Vec<f64>,
    lstm: Vec<LstmCache>,
    reads: Vec<ReadCache>,
    keys: Vec<f64>,
    values: Vec<f64>,
    head_in: Vec<f64>,
    head_pre: Vec<f64>,
    head_act: Vec<f64>,
}

/// Output of a batched forward pass, including everything the backward
/// pass needs.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    batch: usize,
    frames: usize,
    /// Encoder rows: `B` for DQN, `B·frames` otherwise.
    items: usize,
    actions: usize,
    /// `[B × a]`.
    q: Vec<f64>,
    encoder: EncoderCache,
    lstm: Vec<LstmCache>,
    reads: Vec<ReadCache>,
    keys: Vec<f64>,
    values: Vec<f64>,
    /// `[B × context_dim]` input of the Q-head.
    head_in: Vec<f64>,
    /// `[B × hidden]` before the activation.
    head_pre: Vec<f64>,
    /// `[B × hidden]` after the activation.
    head_act: Vec<f64>,
}

impl ForwardPass {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_row(&self, b: usize) -> &[f64] {
        &self.q[b * self.actions..(b + 1) * self.actions]
    }

    /// Final-step attention over valid memory slots (most recent first).
    pub fn final_attention(&self, b: usize) -> Option<&[f64]> {
        self.reads
            .iter()
            .rev()
            .find(|r| r.step + 1 == self.frames)
            .map(|r| r.attention[b].as_slice())
    }

    /// Final-step retrieved memory `o_t`.
    pub fn final_retrieved(&self, b: usize, m: usize) -> Option<&[f64]> {
        self.reads
            .iter()
            .rev()
            .find(|r| r.step + 1 == self.frames)
            .map(|r| &r.retrieved[b * m..(b + 1) * m])
    }

    /// Flattened conv output for window `b`, frame `t`. DQN has one
    /// stacked encoding per window and ignores `t`.
    pub fn encoding(&self, b: usize, t: usize) -> &[f64] {
        let e = self.encoder.enc.len() / self.items;
        let idx = if self.items == self.batch { b } else { b * self.frames + t };
        &self.encoder.enc[idx * e..(idx + 1) * e]
    }
}

fn gather_rows(src: &[f64], width: usize, rows: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut out = Vec::new();
    for r in rows {
        out.extend_from_slice(&src[r * width..(r + 1) * width]);
    }
    out
}

fn scatter_add_rows(dst: &mut [f64], width: usize, rows: impl Iterator<Item = usize>, src: &[f64]) {
    for (i, r) in rows.enumerate() {
        for (d, s) in dst[r * width..(r + 1) * width]
            .iter_mut()
            .zip(&src[i * width..(i + 1) * width])
        {
            *d += s;
        }
    }
}

fn add_bias_rows(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn add_col_sums(dst: &mut [f64], src: &[f64]) {
    for row in src.chunks(dst.len()) {
        for (d, s) in dst.iter_mut().zip(row) {
            *d += s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl AgentNet {
    /// Fresh parameters: uniform `±1/sqrt(fan_in)` weights, zero biases,
    /// LSTM forget-gate bias `+1`.
    pub fn new(config: ArchConfig, rng: &mut Rng) -> Result<Self, AgentError> {
        config.validate()?;
        let mut ps = ParamStore::new();
        let g1 = config.conv1_geometry()?;
        let g2 = config.conv2_geometry()?;
        let conv1_w = ps.add_uniform("conv1.w", &g1.weight_shape(), g1.patch_len(), rng);
        let conv1_b = ps.add("conv1.b", Tensor::zeros(&[g1.c_out]));
        let conv2_w = ps.add_uniform("conv2.w", &g2.weight_shape(), g2.patch_len(), rng);
        let conv2_b = ps.add("conv2.b", Tensor::zeros(&[g2.c_out]));
        let e = config.enc_dim();
        let m = config.embed_dim;
        let fc = config.variant.has_fc().then(|| {
            (
                ps.add_uniform("fc.w", &[config.fc_dim, e], e, rng),
                ps.add("fc.b", Tensor::zeros(&[config.fc_dim])),
            )
        });
        let feat = config.feature_dim();
        let lstm = config.variant.is_recurrent().then(|| {
            let input = ps.add_uniform("lstm.wx", &[4 * m, feat], feat, rng);
            let feedback = (config.variant == Variant::Frmqn)
                .then(|| ps.add_uniform("lstm.wo", &[4 * m, m], m, rng));
            let recurrent = ps.add_uniform("lstm.wh", &[4 * m, m], m, rng);
            let mut b = Tensor::zeros(&[4 * m]);
            b.data_mut()[m..2 * m].fill(1.0);
            let bias = ps.add("lstm.b", b);
            LstmIds {
                input,
                recurrent,
                bias,
                feedback,
            }
        });
        let context =
            (config.variant == Variant::Mqn).then(|| ps.add_uniform("context.w", &[m, e], e, rng));
        let (key, value) = if config.variant.has_memory() {
            (
                Some(ps.add_uniform("memory.key", &[m, e], e, rng)),
                Some(ps.add_uniform("memory.value", &[m, e], e, rng)),
            )
        } else {
            (None, None)
        };
        let hdim = config.context_dim();
        let hid = config.hidden_dim();
        let head_h = ps.add_uniform("head.h", &[hid, hdim], hdim, rng);
        let head_q = ps.add_uniform("head.q", &[config.actions, hid], hid, rng);
        Ok(Self {
            config,
            params: ps,
            ids: ParamIds {
                conv1_w,
                conv1_b,
                conv2_w,
                conv2_b,
                fc,
                lstm,
                context,
                key,
                value,
                head_h,
                head_q,
            },
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.id(name).map(|id| self.params.value(id))
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let id = self.params.id(name)?;
        Some(self.params.value_mut(id))
    }

    /// Replaces all parameter values; names and shapes must match.
    pub fn load_params(&mut self, other: &ParamStore) -> Result<(), AgentError> {
        if !self.params.same_layout(other) {
            return Err(AgentError::Config(
                "parameter layout does not match this architecture".into(),
            ));
        }
        for (dst, src) in self.params.values_mut().iter_mut().zip(other.values()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Same parameters under a different window / memory size.
    pub fn with_window(&self, frames: usize, mem_size: usize) -> Result<Self, AgentError> {
        Ok(Self {
            config: self.config.with_window(frames, mem_size)?,
            ..self.clone()
        })
    }

    fn value(&self, id: ParamId) -> &[f64] {
        self.params.value(id).data()
    }

    fn check_windows(&self, windows: &[&[&Observation]]) -> Result<(), AgentError> {
        let c = &self.config;
        for w in windows {
            if w.len() != c.frames {
                return Err(AgentError::Config(format!(
                    "window of {} frames given to a {}-frame {} network",
                    w.len(),
                    c.frames,
                    c.variant
                )));
            }
            for o in w.iter() {
                if o.shape() != [c.obs_channels, c.obs_height, c.obs_width] {
                    return Err(AgentError::Shape(format!(
                        "observation {:?} does not match network input {:?}",
                        o.shape(),
                        [c.obs_channels, c.obs_height, c.obs_width]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lays the batch out as `[C, N, H, W]`.
    fn assemble_input(&self, windows: &[&[&Observation]]) -> (Vec<f64>, usize) {
        let c = &self.config;
        let hw = c.obs_height * c.obs_width;
        let (n, cin) = if c.variant == Variant::Dqn {
            (windows.len(), c.obs_channels * c.frames)
        } else {
            (windows.len() * c.frames, c.obs_channels)
        };
        let mut x = vec![0.0; cin * n * hw];
        for (b, w) in windows.iter().enumerate() {
            for (t, obs) in w.iter().enumerate() {
                for ch in 0..c.obs_channels {
                    let (item, chan) = if c.variant == Variant::Dqn {
                        (b, t * c.obs_channels + ch)
                    } else {
                        (b * c.frames + t, ch)
                    };
                    let dst = &mut x[(chan * n + item) * hw..(chan * n + item + 1) * hw];
                    let src = &obs.data()[ch * hw..(ch + 1) * hw];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = f64::from(s) / 255.0;
                    }
                }
            }
        }
        (x, n)
    }

    /// Feature of a single frame for the per-frame variants.
    pub(crate) fn frame_features(&self, obs: &Observation) -> Result<Vec<f64>, AgentError> {
        let c = &self.config;
        if obs.shape() != [c.obs_channels, c.obs_height, c.obs_width] {
            return Err(AgentError::Shape(format!(
                "observation {:?} does not match network input {:?}",
                obs.shape(),
                [c.obs_channels, c.obs_height, c.obs_width]
            )));
        }
        let x: Vec<f64> = obs.data().iter().map(|&v| f64::from(v) / 255.0).collect();
        let cache = self.encode_batch(&x, 1)?;
        Ok(cache.fc.unwrap_or(cache.enc))
    }

    fn conv_layer(
        &self,
        input: &[f64],
        n: usize,
        g: &ConvGeometry,
        w: ParamId,
        b: ParamId,
    ) -> (Vec<f64>, Vec<f64>) {
        let cols = im2col_batch(input, n, g);
        let npix = n * g.out_pixels();
        let mut out = vec![0.0; g.c_out * npix];
        for (row, &bias) in out.chunks_mut(npix).zip(self.value(b)) {
            row.fill(bias);
        }
        gemm(g.c_out, g.patch_len(), npix, 1.0, self.value(w), false, &cols, false, 1.0, &mut out);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        (cols, out)
    }

    fn encode_batch(&self, x: &[f64], n: usize) -> Result<EncoderCache, AgentError> {
        let g1 = self.config.conv1_geometry()?;
        let g2 = self.config.conv2_geometry()?;
        let (cols1, a1) = self.conv_layer(x, n, &g1, self.ids.conv1_w, self.ids.conv1_b);
        let (cols2, a2) = self.conv_layer(&a1, n, &g2, self.ids.conv2_w, self.ids.conv2_b);
        let p2 = g2.out_pixels();
        let e = g2.c_out * p2;
        let mut enc = vec![0.0; n * e];
        for c in 0..g2.c_out {
            for item in 0..n {
                enc[item * e + c * p2..item * e + (c + 1) * p2]
                    .copy_from_slice(&a2[(c * n + item) * p2..(c * n + item + 1) * p2]);
            }
        }
        let fc = self.ids.fc.map(|(w, b)| {
            let f = self.config.fc_dim;
            let mut out = vec![0.0; n * f];
            gemm(n, e, f, 1.0, &enc, false, self.value(w), true, 0.0, &mut out);
            add_bias_rows(&mut out, self.value(b));
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            out
        });
        Ok(EncoderCache {
            cols1,
            a1,
            cols2,
            a2,
            enc,
            fc,
        })
    }

    /// Soft attention over the valid slots preceding `step` in each window.
    fn read_memory(&self, step: usize, batch: usize, query: &[f64], keys: &[f64], values: &[f64]) -> ReadCache {
        let m = self.config.embed_dim;
        let t = self.config.frames;
        let valid = step.min(self.config.mem_size);
        let mut attention = Vec::with_capacity(batch);
        let mut retrieved = vec![0.0; batch * m];
        for b in 0..batch {
            let h = &query[b * m..(b + 1) * m];
            let mut p: Vec<f64> = (0..valid)
                .map(|j| {
                    let row = b * t + step - 1 - j;
                    dot(h, &keys[row * m..(row + 1) * m])
                })
                .collect();
            softmax_in_place(&mut p);
            let o = &mut retrieved[b * m..(b + 1) * m];
            for (j, &pj) in p.iter().enumerate() {
                let row = b * t + step - 1 - j;
                for (oi, v) in o.iter_mut().zip(&values[row * m..(row + 1) * m]) {
                    *oi += pj * v;
                }
            }
            attention.push(p);
        }
        ReadCache {
            step,
            attention,
            retrieved,
            query: query.to_vec(),
        }
    }

    /// Batched forward over `B` windows of exactly `frames` observations.
    pub fn forward(&self, windows: &[&[&Observation]]) -> Result<ForwardPass, AgentError> {
        self.check_windows(windows)?;
        let (x, n) = self.assemble_input(windows);
        let encoder = self.encode_batch(&x, n)?;
        let features: &[f64] = encoder.fc.as_deref().unwrap_or(&encoder.enc);
        let core = self.forward_core(features, windows.len(), n)?;
        Ok(ForwardPass {
            batch: windows.len(),
            frames: self.config.frames,
            items: n,
            actions: self.config.actions,
            q: core.q,
            encoder,
            lstm: core.lstm,
            reads: core.reads,
            keys: core.keys,
            values: core.values,
            head_in: core.head_in,
            head_pre: core.head_pre,
            head_act: core.head_act,
        })
    }

    /// Q-values of one window given its per-frame features (see
    /// [`AgentNet::encode`]), oldest first. Not available for DQN.
    pub fn q_from_features(&self, features: &[&[f64]]) -> Result<Vec<f64>, AgentError> {
        let cfg = &self.config;
        if cfg.variant == Variant::Dqn {
            return Err(AgentError::Config("dqn has no per-frame features".into()));
        }
        if features.len() != cfg.frames {
            return Err(AgentError::Config(format!(
                "window of {} frames given to a {}-frame {} network",
                features.len(),
                cfg.frames,
                cfg.variant
            )));
        }
        let feat_dim = cfg.feature_dim();
        let mut flat = Vec::with_capacity(cfg.frames * feat_dim);
        for f in features {
            if f.len() != feat_dim {
                return Err(AgentError::Shape(format!(
                    "feature of length {} for a network expecting {feat_dim}",
                    f.len()
                )));
            }
            flat.extend_from_slice(f);
        }
        Ok(self.forward_core(&flat, 1, cfg.frames)?.q)
    }

    /// Everything after the encoder, over `[n × feature_dim]` features.
    fn forward_core(&self, features: &[f64], batch: usize, n: usize) -> Result<CoreCache, AgentError> {
        let cfg = &self.config;
        let t_len = cfg.frames;
        let m = cfg.embed_dim;
        let feat_dim = cfg.feature_dim();

        let (mut keys, mut values) = (Vec::new(), Vec::new());
        if let (Some(k), Some(v)) = (self.ids.key, self.ids.value) {
            keys = vec![0.0; n * m];
            values = vec![0.0; n * m];
            gemm(n, feat_dim, m, 1.0, features, false, self.value(k), true, 0.0, &mut keys);
            gemm(n, feat_dim, m, 1.0, features, false, self.value(v), true, 0.0, &mut values);
        }

        let mut lstm = Vec::new();
        let mut reads = Vec::new();
        let head_in: Vec<f64> = match cfg.variant {
            Variant::Dqn => features.to_vec(),
            Variant::Mqn => {
                let last = t_len - 1;
                let e_last = gather_rows(features, feat_dim, (0..batch).map(|b| b * t_len + last));
                let mut h = vec![0.0; batch * m];
                let w = self.value(self.ids.context.expect("mqn context"));
                gemm(batch, feat_dim, m, 1.0, &e_last, false, w, true, 0.0, &mut h);
                reads.push(self.read_memory(last, batch, &h, &keys, &values));
                h
            }
            Variant::Drqn | Variant::Rmqn | Variant::Frmqn => {
                let ids = self.ids.lstm.expect("recurrent weights");
                let mut h = vec![0.0; batch * m];
                let mut c = vec![0.0; batch * m];
                let mut o_prev = vec![0.0; batch * m];
                for step in 0..t_len {
                    let x_t = gather_rows(features, feat_dim, (0..batch).map(|b| b * t_len + step));
                    let cache = match ids.feedback {
                        Some(wo) => lstm_forward_rows(
                            batch,
                            m,
                            &[&x_t, &o_prev],
                            &[self.value(ids.input), self.value(wo)],
                            self.value(ids.recurrent),
                            self.value(ids.bias),
                            &h,
                            &c,
                        ),
                        None => lstm_forward_rows(
                            batch,
                            m,
                            &[&x_t],
                            &[self.value(ids.input)],
                            self.value(ids.recurrent),
                            self.value(ids.bias),
                            &h,
                            &c,
                        ),
                    };
                    h.clone_from(&cache.h);
                    c.clone_from(&cache.c);
                    lstm.push(cache);
                    let needs_read = match cfg.variant {
                        Variant::Frmqn => step >= 1,
                        Variant::Rmqn => step + 1 == t_len,
                        _ => false,
                    };
                    if needs_read {
                        let read = self.read_memory(step, batch, &h, &keys, &values);
                        o_prev.clone_from(&read.retrieved);
                        reads.push(read);
                    } else {
                        o_prev.fill(0.0);
                    }
                }
                h
            }
        };

        let hdim = cfg.context_dim();
        let hid = cfg.hidden_dim();
        let mut head_pre = vec![0.0; batch * hid];
        gemm(batch, hdim, hid, 1.0, &head_in, false, self.value(self.ids.head_h), true, 0.0, &mut head_pre);
        if let Some(last) = reads.last().filter(|r| r.step + 1 == t_len) {
            for (p, o) in head_pre.iter_mut().zip(&last.retrieved) {
                *p += o;
            }
        }
        let mut head_act = head_pre.clone();
        let split = cfg.relu_split();
        for row in head_act.chunks_mut(hid) {
            relu_half_in_place(row, split);
        }
        let mut q = vec![0.0; batch * cfg.actions];
        gemm(batch, hid, cfg.actions, 1.0, &head_act, false, self.value(self.ids.head_q), true, 0.0, &mut q);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::Numeric(crate::numerics::NumericError::NonFinite {
                op: "q_values",
            }));
        }
        Ok(CoreCache {
            q,
            lstm,
            reads,
            keys,
            values,
            head_in,
            head_pre,
            head_act,
        })
    }

    /// Q-values for a single window.
    pub fn q_values(&self, window: &[&Observation]) -> Result<Vec<f64>, AgentError> {
        Ok(self.forward(&[window])?.q)
    }

    /// Accumulates `dL/dθ` into the parameter gradients given `dL/dq` (`[B × a]`).
    pub fn backward(&mut self, pass: &ForwardPass, grad_q: &[f64]) -> Result<(), AgentError> {
        let cfg = self.config.clone();
        let ids = self.ids;
        let batch = pass.batch;
        if grad_q.len() != batch * cfg.actions {
            return Err(AgentError::Shape(format!(
                "gradient of length {} for {} q-values",
                grad_q.len(),
                batch * cfg.actions
            )));
        }
        let t_len = cfg.frames;
        let m = cfg.embed_dim;
        let hid = cfg.hidden_dim();
        let hdim = cfg.context_dim();
        let feat_dim = cfg.feature_dim();
        let n_items = if cfg.variant == Variant::Dqn { batch } else { batch * t_len };

        // Q-head
        {
            let (_, g) = self.params.value_and_grad_mut(ids.head_q);
            gemm(cfg.actions, batch, hid, 1.0, grad_q, true, &pass.head_act, false, 1.0, g.data_mut());
        }
        let mut d_pre = vec![0.0; batch * hid];
        gemm(batch, cfg.actions, hid, 1.0, grad_q, false, self.value(ids.head_q), false, 0.0, &mut d_pre);
        let split = cfg.relu_split();
        for (dp, pre) in d_pre.chunks_mut(hid).zip(pass.head_pre.chunks(hid)) {
            relu_half_backward_in_place(pre, split, dp);
        }
        {
            let (_, g) = self.params.value_and_grad_mut(ids.head_h);
            gemm(hid, batch, hdim, 1.0, &d_pre, true, &pass.head_in, false, 1.0, g.data_mut());
        }
        let mut d_head_in = vec![0.0; batch * hdim];
        gemm(batch, hid, hdim, 1.0, &d_pre, false, self.value(ids.head_h), false, 0.0, &mut d_head_in);
        // o_t enters the head additively (hidden == m for memory variants)
        let d_o_final = d_pre;

        let mut d_features = vec![0.0; n_items * feat_dim];
        let mut d_keys = vec![0.0; pass.keys.len()];
        let mut d_values = vec![0.0; pass.values.len()];

        match cfg.variant {
            Variant::Dqn => d_features.copy_from_slice(&d_head_in),
            Variant::Mqn => {
                let read = &pass.reads[0];
                let mut dh = d_head_in;
                self.read_backward(read, batch, &d_o_final, &mut dh, &pass.keys, &pass.values, &mut d_keys, &mut d_values);
                let last = t_len - 1;
                let feats = pass.encoder.fc.as_deref().unwrap_or(&pass.encoder.enc);
                let e_last = gather_rows(feats, feat_dim, (0..batch).map(|b| b * t_len + last));
                let wc = ids.context.expect("mqn context");
                {
                    let (_, g) = self.params.value_and_grad_mut(wc);
                    gemm(m, batch, feat_dim, 1.0, &dh, true, &e_last, false, 1.0, g.data_mut());
                }
                let mut de = vec![0.0; batch * feat_dim];
                gemm(batch, m, feat_dim, 1.0, &dh, false, self.value(wc), false, 0.0, &mut de);
                scatter_add_rows(&mut d_features, feat_dim, (0..batch).map(|b| b * t_len + last), &de);
            }
            Variant::Drqn | Variant::Rmqn | Variant::Frmqn => {
                let lids = ids.lstm.expect("recurrent weights");
                let mut dh = d_head_in;
                let mut dc = vec![0.0; batch * m];
                // gradient flowing into o_t from the head (final step) or from
                // the next step's LSTM input (FRMQN feedback)
                let mut d_o = vec![0.0; batch * m];
                if cfg.variant.has_memory() {
                    d_o.copy_from_slice(&d_o_final);
                }
                let mut reads = pass.reads.iter().rev().peekable();
                for step in (0..t_len).rev() {
                    if let Some(read) = reads.next_if(|r| r.step == step) {
                        self.read_backward(read, batch, &d_o, &mut dh, &pass.keys, &pass.values, &mut d_keys, &mut d_values);
                    }
                    let cache = &pass.lstm[step];
                    let mut in_ids = vec![lids.input];
                    in_ids.extend(lids.feedback);
                    let (vals, grads) = self.params.split_mut();
                    let w_in: Vec<&[f64]> = in_ids.iter().map(|id| vals[id.index()].data()).collect();
                    let mut gw_in = Vec::with_capacity(in_ids.len());
                    let mut g_rec = None;
                    let mut g_bias = None;
                    for (i, g) in grads.iter_mut().enumerate() {
                        if i == lids.recurrent.index() {
                            g_rec = Some(g.data_mut());
                        } else if i == lids.bias.index() {
                            g_bias = Some(g.data_mut());
                        } else if let Some(pos) = in_ids.iter().position(|id| id.index() == i) {
                            gw_in.push((pos, g.data_mut()));
                        }
                    }
                    gw_in.sort_by_key(|(pos, _)| *pos);
                    let mut gw_in: Vec<&mut [f64]> = gw_in.into_iter().map(|(_, g)| g).collect();
                    let (d_inputs, dh_prev, dc_prev) = lstm_backward_rows(
                        cache,
                        &dh,
                        &dc,
                        &w_in,
                        vals[lids.recurrent.index()].data(),
                        &mut gw_in,
                        g_rec.expect("recurrent gradient"),
                        g_bias.expect("bias gradient"),
                    );
                    scatter_add_rows(&mut d_features, feat_dim, (0..batch).map(|b| b * t_len + step), &d_inputs[0]);
                    if lids.feedback.is_some() {
                        d_o.copy_from_slice(&d_inputs[1]);
                    } else {
                        d_o.fill(0.0);
                    }
                    dh = dh_prev;
                    dc = dc_prev;
                }
            }
        }

        if let (Some(k), Some(v)) = (ids.key, ids.value) {
            let feats = pass.encoder.fc.as_deref().unwrap_or(&pass.encoder.enc).to_vec();
            for (id, d) in [(k, &d_keys), (v, &d_values)] {
                {
                    let (_, g) = self.params.value_and_grad_mut(id);
                    gemm(m, n_items, feat_dim, 1.0, d, true, &feats, false, 1.0, g.data_mut());
                }
                gemm(n_items, m, feat_dim, 1.0, d, false, self.value(id), false, 1.0, &mut d_features);
            }
        }

        self.encoder_backward(&pass.encoder, n_items, d_features)
    }

    #[allow(clippy::too_many_arguments)]
    fn read_backward(
        &self,
        read: &ReadCache,
        batch: usize,
        d_o: &[f64],
        d_query: &mut [f64],
        keys: &[f64],
        values: &[f64],
        d_keys: &mut [f64],
        d_values: &mut [f64],
    ) {
        let m = self.config.embed_dim;
        let t = self.config.frames;
        for b in 0..batch {
            let p = &read.attention[b];
            let dob = &d_o[b * m..(b + 1) * m];
            let h = &read.query[b * m..(b + 1) * m];
            let rows: Vec<usize> = (0..p.len()).map(|j| b * t + read.step - 1 - j).collect();
            let dp: Vec<f64> = rows
                .iter()
                .map(|&r| dot(dob, &values[r * m..(r + 1) * m]))
                .collect();
            let mut dl = vec![0.0; p.len()];
            softmax_backward_slice(p, &dp, &mut dl);
            for (j, &r) in rows.iter().enumerate() {
                for i in 0..m {
                    d_values[r * m + i] += p[j] * dob[i];
                    d_keys[r * m + i] += dl[j] * h[i];
                    d_query[b * m + i] += dl[j] * keys[r * m + i];
                }
            }
        }
    }

    fn encoder_backward(
        &mut self,
        cache: &EncoderCache,
        n: usize,
        d_features: Vec<f64>,
    ) -> Result<(), AgentError> {
        let ids = self.ids;
        let g1 = self.config.conv1_geometry()?;
        let g2 = self.config.conv2_geometry()?;
        let e = self.config.enc_dim();
        let d_enc = match (ids.fc, &cache.fc) {
            (Some((w, b)), Some(fc_out)) => {
                let f = self.config.fc_dim;
                let mut d_pre = d_features;
                for (d, &a) in d_pre.iter_mut().zip(fc_out) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                {
                    let (_, g) = self.params.value_and_grad_mut(w);
                    gemm(f, n, e, 1.0, &d_pre, true, &cache.enc, false, 1.0, g.data_mut());
                }
                add_col_sums(self.params.grad_mut(b).data_mut(), &d_pre);
                let mut d_enc = vec![0.0; n * e];
                gemm(n, f, e, 1.0, &d_pre, false, self.value(w), false, 0.0, &mut d_enc);
                d_enc
            }
            _ => d_features,
        };
        let p2 = g2.out_pixels();
        let mut dz2 = vec![0.0; g2.c_out * n * p2];
        for c in 0..g2.c_out {
            for item in 0..n {
                dz2[(c * n + item) * p2..(c * n + item + 1) * p2]
                    .copy_from_slice(&d_enc[item * e + c * p2..item * e + (c + 1) * p2]);
            }
        }
        for (d, &a) in dz2.iter_mut().zip(&cache.a2) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dz1 = self.conv_backward(&g2, n, ids.conv2_w, ids.conv2_b, &cache.cols2, &dz2, true)
            .expect("input gradient requested");
        for (d, &a) in dz1.iter_mut().zip(&cache.a1) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        self.conv_backward(&g1, n, ids.conv1_w, ids.conv1_b, &cache.cols1, &dz1, false);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &mut self,
        g: &ConvGeometry,
        n: usize,
        w: ParamId,
        b: ParamId,
        cols: &[f64],
        dz: &[f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let npix = n * g.out_pixels();
        {
            let (_, gw) = self.params.value_and_grad_mut(w);
            gemm(g.c_out, npix, g.patch_len(), 1.0, dz, false, cols, true, 1.0, gw.data_mut());
        }
        for (gb, row) in self.params.grad_mut(b).data_mut().iter_mut().zip(dz.chunks(npix)) {
            *gb += row.iter().sum::<f64>();
        }
        want_input.then(|| {
            let mut dcols = vec![0.0; g.patch_len() * npix];
            gemm(g.patch_len(), g.c_out, npix, 1.0, self.value(w), true, dz, false, 0.0, &mut dcols);
            col2im_batch(&dcols, n, g)
        })
    }
}
