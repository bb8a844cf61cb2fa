//! Dense tensors with reverse-mode differentiation, Adam, and the
//! learning-rate schedule used for training.

mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, AdamState, LrSchedule};
pub use tape::{mean_rows, Gradients, Tape, Var};
pub use tensor::{gemm, Tensor};
