//! The scaled discrete Hamiltonian of one layer,
//!
//! ```text
//! H_n(x, p, ϑ) = Σ_batch p_{n+1}·g_n(x_n, ϑ) − δ·L(ϑ)
//! ```
//!
//! and its augmented form with penalty coefficient `ρ`,
//!
//! ```text
//! H̃_n(ϑ) = H_n(ϑ) − ½ρ Σ‖x_{n+1} − g_n(x_n, ϑ)‖² − ½ρ Σ‖p_n − ∇_x H_n(x_n, p_{n+1}, ϑ)‖²
//! ```
//!
//! Batch reduction is an unweighted sum over samples. Co-states come from
//! the batch-mean loss, so `H_n` is the Hamiltonian of the batch objective
//! `J` itself and `∇_ϑ H_n = −∇_{ϑ_n} J`. The trajectories in a
//! [`LayerContext`] are frozen at the iterate that produced them.

use crate::dynamics::{regularizer, LayerSpec, Linearization, NetworkSpec};
use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::propagation::Sweep;
use crate::scalar::Scalar;

/// Frozen data for maximizing layer `n`'s (augmented) Hamiltonian.
#[derive(Clone, Copy, Debug)]
pub struct LayerContext<'a, T> {
    pub n: usize,
    pub layer: &'a LayerSpec,
    pub regularizer_weight: f64,
    /// `x_n`
    pub x: &'a Matrix<T>,
    /// `p_{n+1}`
    pub p_next: &'a Matrix<T>,
    /// `x_{n+1}`
    pub x_next: &'a Matrix<T>,
    /// `p_n`
    pub p_curr: &'a Matrix<T>,
    pub rho: T,
}

impl<'a, T: Scalar> LayerContext<'a, T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        layer: &'a LayerSpec,
        regularizer_weight: f64,
        x: &'a Matrix<T>,
        p_next: &'a Matrix<T>,
        x_next: &'a Matrix<T>,
        p_curr: &'a Matrix<T>,
        rho: T,
    ) -> Result<Self> {
        let m = x.rows();
        x.check_shape("context x_n", m, layer.in_dim)?;
        p_curr.check_shape("context p_n", m, layer.in_dim)?;
        x_next.check_shape("context x_{n+1}", m, layer.out_dim)?;
        p_next.check_shape("context p_{n+1}", m, layer.out_dim)?;
        if !(rho >= T::zero()) {
            return Err(Error::Invalid(format!("rho must be nonnegative, got {rho}")));
        }
        Ok(Self {
            n,
            layer,
            regularizer_weight,
            x,
            p_next,
            x_next,
            p_curr,
            rho,
        })
    }

    /// Context for layer `n` of a completed sweep.
    pub fn from_sweep(spec: &'a NetworkSpec, sweep: &'a Sweep<T>, n: usize, rho: T) -> Result<Self> {
        if n >= spec.depth() {
            return Err(Error::Invalid(format!("layer {n} out of range for depth {}", spec.depth())));
        }
        Self::new(
            n,
            &spec.layers[n],
            spec.regularizer_weight,
            sweep.states.state(n),
            sweep.costates.costate(n + 1),
            sweep.states.state(n + 1),
            sweep.costates.costate(n),
            rho,
        )
    }

    /// Contexts for every layer of a sweep.
    pub fn all_from_sweep(spec: &'a NetworkSpec, sweep: &'a Sweep<T>, rho: T) -> Result<Vec<Self>> {
        (0..spec.depth())
            .map(|n| Self::from_sweep(spec, sweep, n, rho))
            .collect()
    }

    pub fn with_rho(mut self, rho: T) -> Self {
        self.rho = rho;
        self
    }

    pub fn batch_size(&self) -> usize {
        self.x.rows()
    }

    fn delta(&self) -> T {
        T::of(self.layer.effective_delta())
    }

    fn check_theta(&self, theta: &[T]) -> Result<()> {
        check_len("layer parameters", self.layer.param_len(), theta.len())
    }
}

/// Squared norms of the two feasibility residuals at some `ϑ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalties<T> {
    /// `Σ‖x_{n+1} − g_n(x_n, ϑ)‖²`
    pub state: T,
    /// `Σ‖p_n − ∇_x H_n(x_n, p_{n+1}, ϑ)‖²`
    pub costate: T,
}

pub fn hamiltonian<T: Scalar>(ctx: &LayerContext<'_, T>, theta: &[T]) -> Result<T> {
    ctx.check_theta(theta)?;
    let lin = Linearization::new(ctx.layer, ctx.x, theta)?;
    let (l, _) = regularizer(theta, ctx.regularizer_weight)?;
    Ok(ctx.p_next.frobenius_dot(lin.output())? - ctx.delta() * l)
}

/// `∇_x H_n(x_n, p_{n+1}, ϑ)`, i.e. the co-state map evaluated at `ϑ`.
pub fn costate_map<T: Scalar>(ctx: &LayerContext<'_, T>, theta: &[T]) -> Result<Matrix<T>> {
    ctx.check_theta(theta)?;
    Linearization::new(ctx.layer, ctx.x, theta)?.pullback(ctx.p_next)
}

pub fn penalties<T: Scalar>(ctx: &LayerContext<'_, T>, theta: &[T]) -> Result<Penalties<T>> {
    ctx.check_theta(theta)?;
    let lin = Linearization::new(ctx.layer, ctx.x, theta)?;
    let state = ctx.x_next.zip_map(lin.output(), |a, b| a - b)?.sq_norm();
    let costate = ctx
        .p_curr
        .zip_map(&lin.pullback(ctx.p_next)?, |a, b| a - b)?
        .sq_norm();
    Ok(Penalties { state, costate })
}

pub fn augmented_hamiltonian<T: Scalar>(ctx: &LayerContext<'_, T>, theta: &[T]) -> Result<T> {
    Ok(augmented_parts(ctx, theta, false)?.0)
}

pub fn grad_theta_hamiltonian<T: Scalar>(ctx: &LayerContext<'_, T>, theta: &[T]) -> Result<Vec<T>> {
    ctx.check_theta(theta)?;
    let lin = Linearization::new(ctx.layer, ctx.x, theta)?;
    let mut g = lin.grad_theta(ctx.p_next)?;
    let (_, dl) = regularizer(theta, ctx.regularizer_weight)?;
    let delta = ctx.delta();
    for (gi, dli) in g.iter_mut().zip(dl) {
        *gi -= delta * dli;
    }
    Ok(g)
}

pub fn grad_theta_augmented<T: Scalar>(ctx: &LayerContext<'_, T>, theta: &[T]) -> Result<Vec<T>> {
    Ok(augmented_parts(ctx, theta, true)?.1)
}

/// `(H̃_n(ϑ), ∇_ϑ H̃_n(ϑ))` from a single linearization; the objective the
/// per-layer maximizer climbs.
pub fn augmented_value_and_grad<T: Scalar>(
    ctx: &LayerContext<'_, T>,
    theta: &[T],
) -> Result<(T, Vec<T>)> {
    augmented_parts(ctx, theta, true)
}

fn augmented_parts<T: Scalar>(
    ctx: &LayerContext<'_, T>,
    theta: &[T],
    with_grad: bool,
) -> Result<(T, Vec<T>)> {
    ctx.check_theta(theta)?;
    let lin = Linearization::new(ctx.layer, ctx.x, theta)?;
    let (l, dl) = regularizer(theta, ctx.regularizer_weight)?;
    let delta = ctx.delta();
    let rho = ctx.rho;
    let h = ctx.p_next.frobenius_dot(lin.output())? - delta * l;
    if rho == T::zero() {
        if !with_grad {
            return Ok((h, Vec::new()));
        }
        let mut g = lin.grad_theta(ctx.p_next)?;
        for (gi, dli) in g.iter_mut().zip(dl) {
            *gi -= delta * dli;
        }
        return Ok((h, g));
    }

    let r_state = ctx.x_next.zip_map(lin.output(), |a, b| a - b)?;
    let r_costate = ctx.p_curr.zip_map(&lin.pullback(ctx.p_next)?, |a, b| a - b)?;
    let half_rho = T::half() * rho;
    let value = h - half_rho * r_state.sq_norm() - half_rho * r_costate.sq_norm();
    if !with_grad {
        return Ok((value, Vec::new()));
    }

    // ∇(−½ρ‖r_s‖²) = ρ J_ϑᵀ r_s and ∇(−½ρ‖r_c‖²) = ρ ∇_ϑ⟨p_{n+1}, J_x r_c⟩
    let weighted = ctx.p_next.zip_map(&r_state, |p, r| p + rho * r)?;
    let mut g = lin.grad_theta(&weighted)?;
    let mixed = lin.mixed_grad(ctx.p_next, &r_costate)?;
    for ((gi, mi), dli) in g.iter_mut().zip(mixed).zip(dl) {
        *gi += rho * mi - delta * dli;
    }
    Ok((value, g))
}
