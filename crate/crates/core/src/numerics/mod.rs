//! Minimal dense-tensor arithmetic with reverse-mode automatic
//! differentiation: enough for an encoder-decoder transformer on a CPU,
//! plus a finite-difference oracle for gradient checks.

mod check;
mod tape;
mod tensor;

pub use check::finite_difference_check;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
