use super::{NumericError, Tensor};

/// `c = alpha * op(a) * op(b) + beta * c` for row-major operands.
///
/// `op(a)` is `m × k` and `op(b)` is `k × n`; a transposed operand is stored
/// with its dimensions swapped.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k, "gemm: lhs buffer too short");
    assert!(b.len() >= k * n, "gemm: rhs buffer too short");
    assert!(c.len() >= m * n, "gemm: output buffer too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c[..m * n].fill(0.0);
        } else {
            c[..m * n].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index reached through these
    // strides lies inside the three slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn matrix_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize), NumericError> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(NumericError::Invalid {
            op,
            msg: format!("expected a matrix, got shape {:?}", t.shape()),
        }),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    let (p, q) = matrix_dims(a, "matmul")?;
    let (q2, r) = matrix_dims(b, "matmul")?;
    if q != q2 {
        return Err(NumericError::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[p, r]);
    gemm(p, q, r, 1.0, a.data(), false, b.data(), false, 0.0, out.data_mut());
    out.debug_assert_finite();
    Ok(out)
}

/// Adjoints of `C = A·B` given `dC`.
pub fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    grad_c: &Tensor,
) -> Result<(Tensor, Tensor), NumericError> {
    let (p, q) = matrix_dims(a, "matmul_backward")?;
    let (q2, r) = matrix_dims(b, "matmul_backward")?;
    if q != q2 || grad_c.shape() != [p, r] {
        return Err(NumericError::Shape {
            op: "matmul_backward",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut ga = Tensor::zeros(&[p, q]);
    let mut gb = Tensor::zeros(&[q, r]);
    gemm(p, r, q, 1.0, grad_c.data(), false, b.data(), true, 0.0, ga.data_mut());
    gemm(q, p, r, 1.0, a.data(), true, grad_c.data(), false, 0.0, gb.data_mut());
    Ok((ga, gb))
}

/// Geometry of a 4×4, stride-2, pad-1 convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
}

impl ConvGeometry {
    pub const KERNEL: usize = 4;
    pub const STRIDE: usize = 2;
    pub const PAD: usize = 1;

    pub fn new(c_in: usize, h: usize, w: usize, c_out: usize) -> Result<Self, NumericError> {
        if h + 2 * Self::PAD < Self::KERNEL || w + 2 * Self::PAD < Self::KERNEL {
            return Err(NumericError::Shape {
                op: "conv2d",
                lhs: vec![c_in, h, w],
                rhs: vec![Self::KERNEL, Self::KERNEL],
            });
        }
        Ok(Self { c_in, h, w, c_out })
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * Self::PAD - Self::KERNEL) / Self::STRIDE + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * Self::PAD - Self::KERNEL) / Self::STRIDE + 1
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Rows of the unfolded input matrix: `c_in · 4 · 4`.
    pub fn patch_len(&self) -> usize {
        self.c_in * Self::KERNEL * Self::KERNEL
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.c_out, self.c_in, Self::KERNEL, Self::KERNEL]
    }
}

/// Unfolds a `[c_in, n, h, w]` batch into a `[c_in·16, n·oh·ow]` matrix.
pub(crate) fn im2col_batch(x: &[f64], n: usize, g: &ConvGeometry) -> Vec<f64> {
    let (k, s, p) = (ConvGeometry::KERNEL, ConvGeometry::STRIDE, ConvGeometry::PAD);
    let (oh, ow) = (g.out_h(), g.out_w());
    let npix = oh * ow;
    let cols_n = n * npix;
    debug_assert_eq!(x.len(), g.c_in * n * g.h * g.w);
    let mut cols = vec![0.0; g.patch_len() * cols_n];
    for ci in 0..g.c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst_row = &mut cols[row * cols_n..(row + 1) * cols_n];
                for img in 0..n {
                    let src = &x[(ci * n + img) * g.h * g.w..(ci * n + img + 1) * g.h * g.w];
                    let dst = &mut dst_row[img * npix..(img + 1) * npix];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[oy * ow + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col_batch`]: folds column gradients back into `[c_in, n, h, w]`.
pub(crate) fn col2im_batch(cols: &[f64], n: usize, g: &ConvGeometry) -> Vec<f64> {
    let (k, s, p) = (ConvGeometry::KERNEL, ConvGeometry::STRIDE, ConvGeometry::PAD);
    let (oh, ow) = (g.out_h(), g.out_w());
    let npix = oh * ow;
    let cols_n = n * npix;
    let mut x = vec![0.0; g.c_in * n * g.h * g.w];
    for ci in 0..g.c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src_row = &cols[row * cols_n..(row + 1) * cols_n];
                for img in 0..n {
                    let dst = &mut x[(ci * n + img) * g.h * g.w..(ci * n + img + 1) * g.h * g.w];
                    let src = &src_row[img * npix..(img + 1) * npix];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[iy as usize * g.w + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_geometry_for(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<ConvGeometry, NumericError> {
    let (c_in, h, wd) = match *x.shape() {
        [c, h, w] => (c, h, w),
        _ => {
            return Err(NumericError::Invalid {
                op: "conv2d",
                msg: format!("expected c×h×w input, got {:?}", x.shape()),
            })
        }
    };
    let c_out = match *w.shape() {
        [co, ci, 4, 4] if ci == c_in => co,
        _ => {
            return Err(NumericError::Shape {
                op: "conv2d",
                lhs: x.shape().to_vec(),
                rhs: w.shape().to_vec(),
            })
        }
    };
    if b.shape() != [c_out] {
        return Err(NumericError::Shape {
            op: "conv2d",
            lhs: w.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    ConvGeometry::new(c_in, h, wd, c_out)
}

/// 4×4 convolution, stride 2, zero padding 1. `x` is `c_in×h×w`, `w` is
/// `c_out×c_in×4×4`, `b` is `c_out`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NumericError> {
    let g = conv_geometry_for(x, w, b)?;
    let cols = im2col_batch(x.data(), 1, &g);
    let npix = g.out_pixels();
    let mut out = vec![0.0; g.c_out * npix];
    for (co, row) in out.chunks_mut(npix).enumerate() {
        row.fill(b.data()[co]);
    }
    gemm(g.c_out, g.patch_len(), npix, 1.0, w.data(), false, &cols, false, 1.0, &mut out);
    Tensor::from_vec(&[g.c_out, g.out_h(), g.out_w()], out)
}

/// Returns `(dx, dw, db)` for [`conv2d`].
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NumericError> {
    let c_out = w.shape().first().copied().unwrap_or(0);
    let g = conv_geometry_for(x, w, &Tensor::zeros(&[c_out]))?;
    if grad_out.shape() != [g.c_out, g.out_h(), g.out_w()] {
        return Err(NumericError::Shape {
            op: "conv2d_backward",
            lhs: vec![g.c_out, g.out_h(), g.out_w()],
            rhs: grad_out.shape().to_vec(),
        });
    }
    let npix = g.out_pixels();
    let cols = im2col_batch(x.data(), 1, &g);
    let mut gw = vec![0.0; g.c_out * g.patch_len()];
    gemm(g.c_out, npix, g.patch_len(), 1.0, grad_out.data(), false, &cols, true, 0.0, &mut gw);
    let gb: Vec<f64> = grad_out.data().chunks(npix).map(|r| r.iter().sum()).collect();
    let mut gcols = vec![0.0; g.patch_len() * npix];
    gemm(g.patch_len(), g.c_out, npix, 1.0, w.data(), true, grad_out.data(), false, 0.0, &mut gcols);
    let gx = col2im_batch(&gcols, 1, &g);
    Ok((
        Tensor::from_vec(x.shape(), gx)?,
        Tensor::from_vec(&g.weight_shape(), gw)?,
        Tensor::vector(gb),
    ))
}

/// Identity below `split`, `max(0, ·)` from `split` onwards.
pub fn relu_half(v: &Tensor, split: usize) -> Tensor {
    assert!(split <= v.len(), "relu_half: split {split} beyond length {}", v.len());
    let mut out = v.clone();
    relu_half_in_place(out.data_mut(), split);
    out
}

pub fn relu_half_backward(pre: &Tensor, split: usize, grad: &Tensor) -> Tensor {
    let mut g = grad.clone();
    relu_half_backward_in_place(pre.data(), split, g.data_mut());
    g
}

pub(crate) fn relu_half_in_place(v: &mut [f64], split: usize) {
    for x in &mut v[split..] {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

pub(crate) fn relu_half_backward_in_place(pre: &[f64], split: usize, grad: &mut [f64]) {
    for (g, &p) in grad[split..].iter_mut().zip(&pre[split..]) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn softmax(v: &Tensor) -> Result<Tensor, NumericError> {
    if v.is_empty() {
        return Err(NumericError::Invalid {
            op: "softmax",
            msg: "empty input".into(),
        });
    }
    v.ensure_finite("softmax")?;
    let mut out = v.clone();
    softmax_in_place(out.data_mut());
    Ok(out)
}

/// Gradient w.r.t. the logits given the softmax output `p` and `dL/dp`.
pub fn softmax_backward(p: &Tensor, grad: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(p.shape());
    softmax_backward_slice(p.data(), grad.data(), out.data_mut());
    out
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

pub(crate) fn softmax_backward_slice(p: &[f64], grad: &[f64], out: &mut [f64]) {
    let dot: f64 = p.iter().zip(grad).map(|(a, b)| a * b).sum();
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(grad) {
        *o = pi * (gi - dot);
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the LSTM backward pass needs from one forward step over a
/// block of `rows` independent sequences.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub rows: usize,
    pub hidden: usize,
    pub inputs: Vec<Vec<f64>>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[rows × 4m]` in `i, f, g, o` order.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM step for `rows` sequences at once. `inputs[s]` is `[rows × d_s]`
/// and `w_in[s]` the matching `[4m × d_s]` block.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_forward_rows(
    rows: usize,
    hidden: usize,
    inputs: &[&[f64]],
    w_in: &[&[f64]],
    w_rec: &[f64],
    bias: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> LstmCache {
    let m = hidden;
    let g4 = 4 * m;
    let mut pre = vec![0.0; rows * g4];
    let mut beta = 0.0;
    for (x, w) in inputs.iter().zip(w_in) {
        let d = x.len() / rows.max(1);
        gemm(rows, d, g4, 1.0, x, false, w, true, beta, &mut pre);
        beta = 1.0;
    }
    gemm(rows, m, g4, 1.0, h_prev, false, w_rec, true, beta, &mut pre);
    for row in pre.chunks_mut(g4) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    let mut c = vec![0.0; rows * m];
    let mut tanh_c = vec![0.0; rows * m];
    let mut h = vec![0.0; rows * m];
    for r in 0..rows {
        let gate = &mut pre[r * g4..(r + 1) * g4];
        for j in 0..m {
            gate[j] = sigmoid(gate[j]);
            gate[m + j] = sigmoid(gate[m + j]);
            gate[2 * m + j] = gate[2 * m + j].tanh();
            gate[3 * m + j] = sigmoid(gate[3 * m + j]);
            let idx = r * m + j;
            c[idx] = gate[m + j] * c_prev[idx] + gate[j] * gate[2 * m + j];
            tanh_c[idx] = c[idx].tanh();
            h[idx] = gate[3 * m + j] * tanh_c[idx];
        }
    }
    LstmCache {
        rows,
        hidden,
        inputs: inputs.iter().map(|x| x.to_vec()).collect(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: pre,
        c,
        tanh_c,
        h,
    }
}

/// Backward of [`lstm_forward_rows`]. Weight gradients are accumulated into
/// `gw_in`, `gw_rec` and `gbias`; returns `(d_inputs, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward_rows(
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    w_in: &[&[f64]],
    w_rec: &[f64],
    gw_in: &mut [&mut [f64]],
    gw_rec: &mut [f64],
    gbias: &mut [f64],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (rows, m) = (cache.rows, cache.hidden);
    let g4 = 4 * m;
    let mut dpre = vec![0.0; rows * g4];
    let mut dc_prev = vec![0.0; rows * m];
    for r in 0..rows {
        let gate = &cache.gates[r * g4..(r + 1) * g4];
        let dp = &mut dpre[r * g4..(r + 1) * g4];
        for j in 0..m {
            let idx = r * m + j;
            let (i, f, g, o) = (gate[j], gate[m + j], gate[2 * m + j], gate[3 * m + j]);
            let tc = cache.tanh_c[idx];
            let dct = dc[idx] + dh[idx] * o * (1.0 - tc * tc);
            dp[j] = dct * g * i * (1.0 - i);
            dp[m + j] = dct * cache.c_prev[idx] * f * (1.0 - f);
            dp[2 * m + j] = dct * i * (1.0 - g * g);
            dp[3 * m + j] = dh[idx] * tc * o * (1.0 - o);
            dc_prev[idx] = dct * f;
        }
    }
    let mut d_inputs = Vec::with_capacity(w_in.len());
    for ((x, w), gw) in cache.inputs.iter().zip(w_in).zip(gw_in.iter_mut()) {
        let d = x.len() / rows.max(1);
        gemm(g4, rows, d, 1.0, &dpre, true, x, false, 1.0, gw);
        let mut dx = vec![0.0; rows * d];
        gemm(rows, g4, d, 1.0, &dpre, false, w, false, 0.0, &mut dx);
        d_inputs.push(dx);
    }
    gemm(g4, rows, m, 1.0, &dpre, true, &cache.h_prev, false, 1.0, gw_rec);
    for row in dpre.chunks(g4) {
        for (gb, v) in gbias.iter_mut().zip(row) {
            *gb += v;
        }
    }
    let mut dh_prev = vec![0.0; rows * m];
    gemm(rows, g4, m, 1.0, &dpre, false, w_rec, false, 0.0, &mut dh_prev);
    (d_inputs, dh_prev, dc_prev)
}

/// Weights of a single-input LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights {
    /// `[4m × d_in]`, gate blocks in `i, f, g, o` order.
    pub input: Tensor,
    /// `[4m × m]`.
    pub recurrent: Tensor,
    /// `[4m]`.
    pub bias: Tensor,
}

impl LstmWeights {
    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            input: Tensor::zeros(&[4 * hidden, d_in]),
            recurrent: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.input.shape().get(1).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmGrads {
    pub input: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

/// Standard LSTM cell: returns `(h', c', cache)`.
pub fn lstm_cell(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    w: &LstmWeights,
) -> Result<(Tensor, Tensor, LstmCache), NumericError> {
    let m = w.hidden();
    if x.len() != w.input_dim() || h.len() != m || c.len() != m || w.recurrent.shape() != [4 * m, m]
    {
        return Err(NumericError::Shape {
            op: "lstm_cell",
            lhs: vec![x.len(), h.len(), c.len()],
            rhs: w.input.shape().to_vec(),
        });
    }
    for t in [x, h, c] {
        t.ensure_finite("lstm_cell")?;
    }
    let cache = lstm_forward_rows(
        1,
        m,
        &[x.data()],
        &[w.input.data()],
        w.recurrent.data(),
        w.bias.data(),
        h.data(),
        c.data(),
    );
    Ok((
        Tensor::vector(cache.h.clone()),
        Tensor::vector(cache.c.clone()),
        cache,
    ))
}

/// Returns `(dx, dh_prev, dc_prev, weight grads)`.
pub fn lstm_cell_backward(
    cache: &LstmCache,
    w: &LstmWeights,
    dh: &Tensor,
    dc: &Tensor,
) -> (Tensor, Tensor, Tensor, LstmGrads) {
    let mut grads = LstmGrads {
        input: Tensor::zeros(w.input.shape()),
        recurrent: Tensor::zeros(w.recurrent.shape()),
        bias: Tensor::zeros(w.bias.shape()),
    };
    let (mut dxs, dh_prev, dc_prev) = {
        let LstmGrads {
            input,
            recurrent,
            bias,
        } = &mut grads;
        lstm_backward_rows(
            cache,
            dh.data(),
            dc.data(),
            &[w.input.data()],
            w.recurrent.data(),
            &mut [input.data_mut()],
            recurrent.data_mut(),
            bias.data_mut(),
        )
    };
    (
        Tensor::vector(dxs.remove(0)),
        Tensor::vector(dh_prev),
        Tensor::vector(dc_prev),
        grads,
    )
}
