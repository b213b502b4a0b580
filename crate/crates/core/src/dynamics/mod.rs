//! Layer transition maps, terminal losses and the running cost, with their
//! closed-form derivatives. Everything downstream consumes this interface.

mod batch;
mod kernels;
mod layer;
mod loss;
mod params;
mod spec;

pub use batch::{Batch, Targets};
pub use layer::{layer_forward, layer_grad_theta, layer_mixed_grad, layer_pullback_x, Linearization};
pub use loss::{regularizer, terminal_loss};
pub use params::ParamStack;
pub use spec::{Activation, ConvShape, LayerKind, LayerSpec, LossKind, NetworkSpec};

#[cfg(test)]
mod tests;
