use super::AgentError;
use crate::numerics::{gemm, softmax_in_place, NumericError, Tensor};

/// Key and value blocks for one time step. Column `j` holds frame `t-1-j`;
/// columns at or beyond `valid` are padding.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBlocks {
    /// `[m × M]`.
    pub keys: Tensor,
    /// `[m × M]`.
    pub values: Tensor,
    pub valid: usize,
}

impl MemoryBlocks {
    pub fn slots(&self) -> usize {
        self.keys.shape()[1]
    }

    pub fn key_dim(&self) -> usize {
        self.keys.shape()[0]
    }
}

/// Projects stored encodings `E` (`[e × M]`, most recent first) into key and
/// value blocks. Padding columns of the result are zero.
pub fn memory_write(
    encodings: &Tensor,
    valid: usize,
    w_key: &Tensor,
    w_val: &Tensor,
) -> Result<MemoryBlocks, AgentError> {
    if encodings.rank() != 2 || w_key.rank() != 2 || w_key.shape() != w_val.shape() {
        return Err(NumericError::Shape {
            op: "memory_write",
            lhs: w_key.shape().to_vec(),
            rhs: encodings.shape().to_vec(),
        }
        .into());
    }
    let (e, slots) = (encodings.shape()[0], encodings.shape()[1]);
    let m = w_key.shape()[0];
    if w_key.shape()[1] != e {
        return Err(NumericError::Shape {
            op: "memory_write",
            lhs: w_key.shape().to_vec(),
            rhs: encodings.shape().to_vec(),
        }
        .into());
    }
    if valid > slots {
        return Err(AgentError::Contract(format!(
            "{valid} valid entries in a memory of {slots} slots"
        )));
    }
    let project = |w: &Tensor| {
        let mut out = Tensor::zeros(&[m, slots]);
        gemm(m, e, slots, 1.0, w.data(), false, encodings.data(), false, 0.0, out.data_mut());
        for row in out.data_mut().chunks_mut(slots) {
            row[valid..].fill(0.0);
        }
        out
    };
    Ok(MemoryBlocks {
        keys: project(w_key),
        values: project(w_val),
        valid,
    })
}

/// Soft attention read: `p = softmax(hᵀ K)` over valid columns (padding gets
/// exactly 0) and `o = V p`. Returns `(o, p)` with `p` of length `M`.
pub fn memory_read(h: &[f64], blocks: &MemoryBlocks) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    let (m, slots) = (blocks.key_dim(), blocks.slots());
    if h.len() != m {
        return Err(NumericError::Shape {
            op: "memory_read",
            lhs: vec![h.len()],
            rhs: blocks.keys.shape().to_vec(),
        }
        .into());
    }
    if blocks.valid == 0 {
        return Err(AgentError::Contract(
            "memory read with no stored frames".into(),
        ));
    }
    let keys = blocks.keys.data();
    let values = blocks.values.data();
    let mut p = vec![0.0; slots];
    for (j, pj) in p.iter_mut().enumerate().take(blocks.valid) {
        *pj = (0..m).map(|i| h[i] * keys[i * slots + j]).sum();
    }
    softmax_in_place(&mut p[..blocks.valid]);
    let o = (0..m)
        .map(|i| {
            (0..blocks.valid)
                .map(|j| p[j] * values[i * slots + j])
                .sum()
        })
        .collect();
    Ok((o, p))
}
