//! Reverse-mode differentiation over dense `f64` tensors, and Adam.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! as leaves with gradients enabled; data enters as constants. After
//! [`Tape::backward`] each reachable node carries its gradient.

mod adam;
mod gemm;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Activation, DiffTensor, MixMaps, Tape, Var};
pub use tensor::Tensor;
