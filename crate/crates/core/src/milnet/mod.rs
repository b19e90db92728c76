//! Dense numeric core and the gated-attention MIL classifier with
//! hand-derived gradients.

mod adam;
mod matrix;
mod model;

pub use adam::{adam_step, OptimizerState};
pub use matrix::{FeatureMatrix, Matrix};
pub use model::{
    backward_bag, forward_bag, loss_ce, predict, softmax, EmbeddedBag, ForwardTrace, ModelDims,
    ModelParams, Pooling,
};
