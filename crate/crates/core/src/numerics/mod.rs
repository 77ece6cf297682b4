//! Dense tensors, reverse-mode autodiff, multilayer perceptrons and Adam.

mod adam;
pub mod linalg;
mod mlp;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use mlp::{Activation, Layer, Mlp};
pub use tape::{Gradients, Tape, Unary, Var};
pub use tensor::Tensor;

/// Runs `mlp` on `batch` inside a fresh tape, returning the output values
/// and gradients of `loss_fn(output)` with respect to every parameter.
pub fn mlp_gradients(
    mlp: &Mlp,
    batch: &Tensor,
    loss_fn: impl FnOnce(&mut Tape, Var) -> crate::Result<Var>,
) -> crate::Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let x = tape.constant(batch.clone());
    let (out, params) = mlp.forward_tape(&mut tape, x)?;
    let loss = loss_fn(&mut tape, out)?;
    let value = tape.value(loss).get(0, 0);
    let mut grads = tape.backward(loss)?;
    let g = params
        .into_iter()
        .map(|p| grads.take(p).expect("parameters always receive adjoints"))
        .collect();
    Ok((value, g))
}
