//! Dense `f64` tensors and a single-use reverse-mode tape.

mod tape;
mod tensor;

pub use tape::{Activation, BinaryKind, Reduction, Tape, Var, LOG_EPS};
pub use tensor::Tensor;
