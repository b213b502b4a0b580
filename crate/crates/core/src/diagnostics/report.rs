use serde::{Deserialize, Serialize};

use crate::solvers::Method;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    #[default]
    Ok,
    /// `J` left the finite range or exceeded the divergence threshold.
    Diverged,
    /// A phase returned an error; the parameters were left unchanged.
    Failed,
}

/// Seconds spent in each phase of one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub forward: f64,
    pub backward: f64,
    pub update: f64,
    pub audit: f64,
    pub evaluate: f64,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        self.forward + self.backward + self.update + self.audit + self.evaluate
    }
}

/// One outer iteration. Batch quantities refer to the batch the iteration
/// was computed on; `j_train`/`j_test`/accuracies are filled at evaluation
/// points only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    /// 1-based; iteration `k` maps `ϑ^{k−1}` to `ϑ^k`.
    pub iter: usize,
    pub method: Method,
    pub batch_size: usize,
    /// Batch `J` before and after the update.
    pub j_before: f64,
    pub j_after: f64,
    pub delta_j: f64,
    pub mu_k: f64,
    pub feas_state: f64,
    pub feas_costate: f64,
    pub j_train: Option<f64>,
    pub j_test: Option<f64>,
    pub acc_train: Option<f64>,
    pub acc_test: Option<f64>,
    pub times: PhaseTimes,
    pub status: Status,
    pub message: Option<String>,
}

impl IterationReport {
    /// Whether the batch objective rose by more than `tol`.
    pub fn j_increased(&self, tol: f64) -> bool {
        self.delta_j > tol
    }

    pub fn is_eval_point(&self) -> bool {
        self.j_train.is_some()
    }
}
