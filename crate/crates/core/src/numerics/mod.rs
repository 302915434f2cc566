//! Tensor math, reverse-mode differentiation and the finite-difference oracle.

pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_difference_grad, grads_match, max_normalized_error, DEFAULT_FD_EPS};
pub use params::{normal_tensor, Bound, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var, LAYERNORM_EPS};
pub use tensor::Tensor;
