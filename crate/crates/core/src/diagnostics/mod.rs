//! Objective evaluation, Hamiltonian-change bookkeeping and the audits that
//! check the training theory against actual runs.

mod audit;
mod change;
mod gradcheck;
mod objective;
mod report;
pub mod suite;
#[cfg(test)]
mod tests;

pub use audit::{
    costate_norm_audit, costate_norm_audit_on, lemma1_audit, CostateAudit, Lemma1Audit, Lemma1Row,
    COSTATE_BOUND_SLACK, LEMMA1_SLACK,
};
pub use change::{feasibility_errors, layer_changes, mu_k, total_change, LayerChange};
pub use gradcheck::{central_difference, check_value_and_grad, gradient_check, rel_error, GradCheck};
pub use objective::{
    accuracy, evaluate, regularization_term, total_loss, total_loss_from_sweep,
    Evaluation,
};
pub use report::{IterationReport, PhaseTimes, Status};
