//! Dense tensors, a reverse-mode tape, the LSTM cell and the optimizer.

mod gradcheck;
mod nn;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{check_expression, check_primitives, grad_check, relative_error, PRIMITIVE_EPS};
pub use nn::{embed, lstm_cell, softmax_xent, LstmVars};
pub use optim::{clip_global_norm, AdamConfig, Grads, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
