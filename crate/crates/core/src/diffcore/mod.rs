//! Reverse-mode differentiation over the handful of ops the model uses,
//! plus the Adam optimizer.

mod adam;
pub mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Runs the reverse sweep from `loss` and accumulates into each bound tensor.
pub fn backward(tape: &Tape, loss: Var, bindings: &mut [(Var, &mut Tensor)]) -> Result<()> {
    let grads = tape.backward(loss)?;
    for (v, t) in bindings.iter_mut() {
        grads.accumulate_into(*v, t)?;
    }
    Ok(())
}
