//! Minimal define-by-run reverse-mode autodiff over dense `f64` arrays.
//!
//! A [`Tape`] is rebuilt for every forward pass. Parameters live outside the
//! tape as [`Tensor`]s; [`Tape::param`] records a leaf bound to a parameter
//! index so that [`Tape::backward`] can accumulate into the parameter's
//! gradient slot.

mod check;
mod gemm;
mod tape;
mod tensor;

pub use check::finite_diff_check;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use gemm::gemm;

/// Square-root of 2/pi used by the tanh approximation of GELU.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh approximation of GELU.
pub const GELU_CUBIC: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

/// Derivative of [`gelu_scalar`].
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
