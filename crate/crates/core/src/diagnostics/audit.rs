use crate::dynamics::{terminal_loss, LayerKind, NetworkSpec, ParamStack, Targets};
use crate::error::{check_len, Error, Result};
use crate::linalg::{norm, spectral_norm, Matrix, PowerIteration};
use crate::propagation::{backward_propagate, forward_propagate, CostateTrajectory, StateTrajectory};
use crate::scalar::Scalar;

use super::report::{IterationReport, Status};

/// Slack allowed when feasibility errors vanish and `ΔJ ≤ −μ_k` must hold,
/// relative to `max(1, |J|)`.
pub const LEMMA1_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Row {
    pub iter: usize,
    /// `(ΔJ + μ_k)/(state error + costate error)`, absent when the
    /// denominator vanishes.
    pub c_min: Option<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Audit {
    pub rows: Vec<Lemma1Row>,
    pub max_c_min: Option<f64>,
    /// Iterations that violate the inequality outright.
    pub flags: Vec<usize>,
}

impl Lemma1Audit {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Inverts `ΔJ ≤ −μ_k + C·(state error + costate error)` per iteration for
/// the smallest admissible `C`. An iteration
/// is flagged when it has zero feasibility error but `ΔJ > −μ_k`, or when
/// any of its quantities is non-finite. Failed and diverged iterations are
/// skipped.
pub fn lemma1_audit(history: &[IterationReport]) -> Result<Lemma1Audit> {
    if history.is_empty() {
        return Err(Error::Empty("history for the error-estimate audit"));
    }
    let mut rows = Vec::with_capacity(history.len());
    let mut flags = Vec::new();
    let mut max_c: Option<f64> = None;
    for r in history.iter().filter(|r| r.status == Status::Ok) {
        let (dj, mu) = (r.delta_j, r.mu_k);
        let denom = r.feas_state + r.feas_costate;
        let finite = dj.is_finite() && mu.is_finite() && denom.is_finite();
        let mut flagged = !finite;
        let mut c_min = None;
        if finite && denom > 0.0 {
            let c = (dj + mu) / denom;
            max_c = Some(max_c.map_or(c, |m: f64| m.max(c)));
            c_min = Some(c);
        } else if finite {
            let scale = r.j_before.abs().max(1.0);
            flagged = dj > -mu + LEMMA1_SLACK * scale;
        }
        if flagged {
            flags.push(r.iter);
        }
        rows.push(Lemma1Row {
            iter: r.iter,
            c_min,
            flagged,
        });
    }
    Ok(Lemma1Audit {
        rows,
        max_c_min: max_c,
        flags,
    })
}

/// Relative slack for the co-state bound; covers the power-iteration
/// estimate approaching `‖W‖₂` from below.
pub const COSTATE_BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CostateAudit {
    pub passed: bool,
    /// Largest `‖p_n‖ / bound_n` over samples and layers (0 when every
    /// bound is 0).
    pub worst_ratio: f64,
    /// Per `n = 0 … N`, the smallest `bound_n − ‖p_n‖` over samples.
    pub min_slack: Vec<f64>,
}

/// Per-layer Lipschitz factor of `p ↦ ∇_x H_n` for dense layers with
/// `|σ'| ≤ 1`: `1 + δ‖W‖₂` for residual layers, `‖W‖₂` otherwise.
fn backward_factor<T: Scalar>(spec: &NetworkSpec, params: &ParamStack<T>, n: usize) -> Result<f64> {
    let layer = &spec.layers[n];
    if layer.conv.is_some() {
        return Err(Error::Invalid(format!(
            "co-state bound audit supports dense layers only; layer {n} is convolutional"
        )));
    }
    let w = &params.layer(n)[..layer.weight_len()];
    let s = spectral_norm(w, layer.out_dim, layer.in_dim, PowerIteration::default()).as_f64();
    Ok(match layer.kind {
        LayerKind::ResidualDense | LayerKind::ResidualConv2d => 1.0 + layer.effective_delta() * s,
        LayerKind::Projection | LayerKind::Classifier => s,
    })
}

/// Checks `‖p_n‖ ≤ ‖∇Φ(x_N)‖ · Π_{m≥n} factor_m` per sample on the network's
/// own co-states, with `Φ` the batch-mean loss.
pub fn costate_norm_audit<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    inputs: &Matrix<T>,
    targets: &Targets<T>,
) -> Result<CostateAudit> {
    let states = forward_propagate(spec, params, inputs)?;
    let costates = backward_propagate(spec, params, &states, targets)?;
    costate_norm_audit_on(spec, params, &states, &costates, targets)
}

/// The same check against supplied co-states; `∇Φ(x_N)` is recomputed from
/// the states, so corrupting every co-state is detectable.
pub fn costate_norm_audit_on<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    states: &StateTrajectory<T>,
    costates: &CostateTrajectory<T>,
    targets: &Targets<T>,
) -> Result<CostateAudit> {
    params.check(spec)?;
    check_len("costate trajectory depth", spec.depth(), costates.depth())?;
    let (_, grad) = terminal_loss(spec, states.terminal(), targets)?;
    let factors = (0..spec.depth())
        .map(|n| backward_factor(spec, params, n))
        .collect::<Result<Vec<_>>>()?;
    let mut products = vec![1.0; spec.depth() + 1];
    for n in (0..spec.depth()).rev() {
        products[n] = products[n + 1] * factors[n];
    }
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut min_slack = vec![f64::INFINITY; spec.depth() + 1];
    // co-states belong to the batch-mean loss
    let m = grad.rows() as f64;
    for i in 0..grad.rows() {
        let g = norm(grad.row(i)).as_f64() / m;
        for (n, &prod) in products.iter().enumerate() {
            let p = norm(costates.costate(n).row(i)).as_f64();
            let bound = g * prod;
            min_slack[n] = min_slack[n].min(bound - p);
            if p > bound * (1.0 + COSTATE_BOUND_SLACK) || !p.is_finite() {
                passed = false;
            }
            if bound > 0.0 {
                worst = worst.max(p / bound);
            } else if p > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(CostateAudit {
        passed,
        worst_ratio: worst,
        min_slack,
    })
}
