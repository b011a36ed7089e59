//! Minimal neural-network substrate: parameter tensors, dense kernels, a GRU
//! cell, RMSProp and finite-difference gradient checking.

pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use gradcheck::{gradient_check, gradient_check_piecewise, GradCheckReport, TensorCheck};
pub use gru::{GruCache, GruCellParams};
pub use ops::{affine_backward, affine_forward, argmax, bernoulli_entropy, sigmoid, softmax};
pub use optim::{rmsprop_step, rmsprop_update, OptimizerConfig};
pub use tensor::{ParamTensor, Parameterized};
