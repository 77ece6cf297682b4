//! Identifiable nonlinear independent component analysis.
//!
//! The crate is organised in four layers:
//!
//! - [`numerics`]: dense tensors, define-by-run reverse-mode autodiff,
//!   multilayer perceptrons and the Adam optimizer.
//! - [`datagen`]: synthetic sources (nonstationary, autoregressive, and
//!   autoregressive with nonstationary innovations) and invertible
//!   leaky-ReLU mixing networks with closed-form inverses.
//! - [`estimators`]: time-contrastive, permutation-contrastive and
//!   generalized contrastive learning, maximum likelihood with relative
//!   gradients, FastICA, PCA, and the Darmois construction.
//! - [`eval`]: matched correlation scores, HSIC independence tests and
//!   uniformity checks.
//!
//! All observation matrices are stored with one row per time point.

pub mod datagen;
mod error;
pub mod estimators;
pub mod eval;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::Tensor;
