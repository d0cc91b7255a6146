pub mod adversary;
pub mod dataset;
pub mod disentangle;
pub mod error;
pub mod idscore;
pub mod losses;
pub mod model;
pub mod nn;
pub mod render;
pub mod skeleton;
pub mod synthesize;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
