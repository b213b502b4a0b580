//! Outer training loops: extended and basic successive approximations, the
//! gradient form of the maximization step, and SGD/Adagrad/Adam baselines.
//!
//! Every method freezes the state and co-state trajectories of the current
//! batch at `ϑ^k`, updates all layers independently from them, and reports
//! the Hamiltonian change and feasibility errors of the update.

mod config;
mod init;
mod iteration;
#[cfg(test)]
mod tests;
mod train;

pub use config::{BatchSize, Method, SolverConfig};
pub use init::{initialize, Init};
pub use iteration::{
    basic_msa_iteration, baseline_iteration, emsa_iteration, grad_msa_iteration, iteration, loss_gradient,
    BaselineState, Step, DIVERGENCE_THRESHOLD,
};
pub use train::{train, TrainOutcome};
