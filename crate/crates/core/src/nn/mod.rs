//! Minimal differentiable-programming toolkit: a reverse-mode tape,
//! grouped parameter storage and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use params::{leaky_relu_gain, ParamGroup, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
