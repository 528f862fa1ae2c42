//! Dense numeric kernels with hand-written backward passes.
//!
//! Everything here works in `f64`. Each forward kernel has a matching
//! backward function returning exact adjoints, and [`grad_check`] compares
//! those against central finite differences.

mod gradcheck;
mod ops;
mod params;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::{
    conv2d, conv2d_backward, gemm, lstm_cell, lstm_cell_backward, matmul, matmul_backward,
    relu_half, relu_half_backward, sigmoid, softmax, softmax_backward, ConvGeometry, LstmCache,
    LstmGrads, LstmWeights,
};
pub(crate) use ops::{
    col2im_batch, im2col_batch, lstm_backward_rows, lstm_forward_rows, relu_half_backward_in_place,
    relu_half_in_place, softmax_backward_slice, softmax_in_place,
};
pub use params::{ParamId, ParamStore};
pub use rng::Rng;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}
