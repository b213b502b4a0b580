//! Training residual networks as discrete optimal-control problems.
//!
//! A network `x_{n+1} = g_n(x_n, ϑ_n)` is trained by alternating a forward
//! state pass, a backward co-state pass and an independent per-layer
//! maximization of an (augmented) Hamiltonian. The same machinery yields
//! back-propagation gradients, so gradient baselines share the core.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the 64-bit precision used throughout the tests.

pub mod data;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod maximizer;
pub mod propagation;
pub mod scalar;
pub mod solvers;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type ParamStack64 = dynamics::ParamStack<f64>;
pub type Batch64 = dynamics::Batch<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type Sweep64 = propagation::Sweep<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type ParamStack32 = dynamics::ParamStack<f32>;
pub type Batch32 = dynamics::Batch<f32>;
pub type Dataset32 = data::Dataset<f32>;
pub type Sweep32 = propagation::Sweep<f32>;
