//! Differentiable-computation core: dense matrices, an MLP with analytic
//! forward/backward passes, Adam, and a finite-difference gradient checker.
//!
//! Everything here is double precision and allocation-simple; the scale of
//! interest is a few thousand parameters, not GPU tensors.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{AdamHyper, AdamState};
pub use gradcheck::{grad_check, GRAD_CHECK_STEP};
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardCache, Layer, MlpGrads, MlpParams};
