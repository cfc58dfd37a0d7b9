//! Dense numeric kernel: matrices, linear layers, activations, batch
//! normalization, Adam and finite-difference gradient checking.

mod adam;
mod gradcheck;
mod layers;
mod matrix;
mod real;

pub use adam::{adam_step, AdamState, Params, DEFAULT_LR};
pub use gradcheck::{grad_check, grad_check_params, GradCheckOptions, GradCheckReport, H_F32, H_F64};
pub use layers::{
    batchnorm_forward, linear_forward, relu, relu_backward, sigmoid, sigmoid_scalar, BatchNorm,
    BnCache, Linear, Mode, BN_EPS, BN_MOMENTUM,
};
pub use matrix::{dot, Matrix};
pub use real::Real;
