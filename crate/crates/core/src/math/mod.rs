//! Dense numeric kernel: matrices, forward ops with gradients, optimizer, gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod ops;

pub use adam::{adam_update, AdamConfig, OptimizerState};
pub use gradcheck::{grad_check, DEFAULT_STEP};
pub use matrix::{dot, flatten, unflatten, DenseMatrix};
pub use ops::{
    activation, activation_backward, affine, affine_backward, gumbel_from_uniform, log_sigmoid,
    log_softplus, mse_grad, mse_loss, sample_standard_gumbel, sigmoid, softplus, tau_softmax,
    tau_softmax_backward, Activation, AffineGrad,
};
