//! State and co-state dynamics of the discrete control problem:
//!
//! ```text
//! x_{n+1} = g_n(x_n, ϑ_n),                 x_0 = inputs
//! p_n     = ∇_x H_n(x_n, p_{n+1}, ϑ_n),    p_N = −∇Φ(x_N)
//! ```
//!
//! where `Φ` is the batch-mean terminal loss, so each sample's terminal
//! co-state is `−∇Φ_i(x_N^i)/m` and every `p_n` is `−∇_{x_n}` of the batch
//! objective. Since the running cost does not depend on the state,
//! `∇_x H_n` is the layer pullback of `p_{n+1}`.

use crate::dynamics::{
    layer_pullback_x, terminal_loss, LayerSpec, Linearization, NetworkSpec, ParamStack, Targets,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// States `x_0 … x_N` for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory<T> {
    states: Vec<Matrix<T>>,
}

impl<T: Scalar> StateTrajectory<T> {
    pub fn states(&self) -> &[Matrix<T>] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &Matrix<T> {
        &self.states[n]
    }

    /// `x_N`
    pub fn terminal(&self) -> &Matrix<T> {
        self.states.last().expect("trajectory always holds x_0")
    }

    /// Number of layers `N` (the trajectory holds `N + 1` states).
    pub fn depth(&self) -> usize {
        self.states.len() - 1
    }
}

/// Co-states `p_0 … p_N` for a batch. `p_0` is kept for diagnostics only.
#[derive(Clone, Debug, PartialEq)]
pub struct CostateTrajectory<T> {
    costates: Vec<Matrix<T>>,
}

impl<T: Scalar> CostateTrajectory<T> {
    pub fn costates(&self) -> &[Matrix<T>] {
        &self.costates
    }

    pub fn costate(&self, n: usize) -> &Matrix<T> {
        &self.costates[n]
    }

    pub fn depth(&self) -> usize {
        self.costates.len() - 1
    }

    /// Builds a trajectory from explicit matrices (for audits and tests).
    pub fn from_costates(costates: Vec<Matrix<T>>) -> Result<Self> {
        if costates.is_empty() {
            return Err(Error::Empty("costate trajectory"));
        }
        Ok(Self { costates })
    }
}

/// Runs the state equation from `inputs`.
pub fn forward_propagate<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    inputs: &Matrix<T>,
) -> Result<StateTrajectory<T>> {
    check_len("parameter stack depth", spec.depth(), params.depth())?;
    check_len("input width", spec.input_dim(), inputs.cols())?;
    if !inputs.is_finite() {
        return Err(Error::NonFinite("network input").at_layer(0));
    }
    let mut states = Vec::with_capacity(spec.depth() + 1);
    states.push(inputs.clone());
    for (n, layer) in spec.layers.iter().enumerate() {
        let next = Linearization::new(layer, &states[n], params.layer(n))
            .map_err(|e| e.at_layer(n))?
            .into_output();
        states.push(next);
    }
    Ok(StateTrajectory { states })
}

/// `x_N` alone, keeping only one intermediate state alive.
pub fn forward_terminal<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    inputs: &Matrix<T>,
) -> Result<Matrix<T>> {
    check_len("parameter stack depth", spec.depth(), params.depth())?;
    check_len("input width", spec.input_dim(), inputs.cols())?;
    if !inputs.is_finite() {
        return Err(Error::NonFinite("network input").at_layer(0));
    }
    let mut x = inputs.clone();
    for (n, layer) in spec.layers.iter().enumerate() {
        x = Linearization::new(layer, &x, params.layer(n))
            .map_err(|e| e.at_layer(n))?
            .into_output();
    }
    Ok(x)
}

/// Signature of a per-layer costate map `(layer, x_n, ϑ_n, p_{n+1}) ↦ p_n`.
pub type PullbackFn<T> =
    dyn Fn(&LayerSpec, &Matrix<T>, &[T], &Matrix<T>) -> Result<Matrix<T>> + Sync;

/// Runs the co-state equation backwards from `p_N = −∇Φ(x_N)` for the
/// batch-mean loss `Φ`.
pub fn backward_propagate<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    traj: &StateTrajectory<T>,
    targets: &Targets<T>,
) -> Result<CostateTrajectory<T>> {
    backward_propagate_with(spec, params, traj, targets, &layer_pullback_x)
}

/// [`backward_propagate`] with a substitute layer pullback. The diagnostics
/// use this to inject faults and confirm the checks catch them.
pub fn backward_propagate_with<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    traj: &StateTrajectory<T>,
    targets: &Targets<T>,
    pullback: &PullbackFn<T>,
) -> Result<CostateTrajectory<T>> {
    check_len("trajectory depth", spec.depth(), traj.depth())?;
    check_len("parameter stack depth", spec.depth(), params.depth())?;
    let (_, grad) = terminal_loss(spec, traj.terminal(), targets).map_err(|e| e.at_layer(spec.depth()))?;
    let m = T::of(grad.rows() as f64);
    let mut costates = vec![grad.map(|v| -v / m)];
    for n in (0..spec.depth()).rev() {
        let p_next = costates.last().expect("nonempty");
        let p = pullback(&spec.layers[n], traj.state(n), params.layer(n), p_next)
            .map_err(|e| e.at_layer(n))?;
        if !p.is_finite() {
            return Err(Error::NonFinite("costate").at_layer(n));
        }
        costates.push(p);
    }
    costates.reverse();
    Ok(CostateTrajectory { costates })
}

/// Forward and backward pass for one batch, plus the per-sample terminal
/// losses `Φ(x_N)` computed along the way.
#[derive(Clone, Debug)]
pub struct Sweep<T> {
    pub states: StateTrajectory<T>,
    pub costates: CostateTrajectory<T>,
    pub losses: Vec<T>,
}

impl<T: Scalar> Sweep<T> {
    pub fn batch_size(&self) -> usize {
        self.losses.len()
    }

    /// `Σ_i Φ(x_N^i)`
    pub fn loss_sum(&self) -> T {
        self.losses.iter().copied().sum()
    }
}

pub fn sweep<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    inputs: &Matrix<T>,
    targets: &Targets<T>,
) -> Result<Sweep<T>> {
    let states = forward_propagate(spec, params, inputs)?;
    let (losses, _) = terminal_loss(spec, states.terminal(), targets)?;
    let costates = backward_propagate(spec, params, &states, targets)?;
    Ok(Sweep {
        states,
        costates,
        losses,
    })
}
