//! Auto-compressing networks at desk scale.
//!
//! Long connections from every layer to the output (`y = x_0 + x_1 + ... + x_L`)
//! instead of per-block residual skips. The crate carries everything needed
//! to study them next to feedforward and residual baselines: a small
//! reverse-mode autodiff engine, exact 1D gradient-path analysis, network
//! construction with per-depth probing, training with gradient
//! instrumentation, pruning, and a split-task continual-learning bench.

pub mod autodiff;
pub mod chain;
pub mod continual;
pub mod data;
mod error;
pub mod net;
pub mod probe;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
