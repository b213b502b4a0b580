use rayon::prelude::*;

use crate::dynamics::{ParamStack, Linearization};
use crate::error::{check_len, Result};
use crate::hamiltonian::{hamiltonian, LayerContext};
use crate::scalar::Scalar;

/// What moving from `ϑ^k` to `ϑ^{k+1}` does to the frozen trajectories of
/// `ϑ^k`, summed over layers and samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerChange<T> {
    /// `μ_k = Σ_n [H_n(ϑ^{k+1}_n) − H_n(ϑ^k_n)]`
    pub mu: T,
    /// `Σ_n ‖g_n(x_n, ϑ^{k+1}_n) − g_n(x_n, ϑ^k_n)‖²`
    pub feas_state: T,
    /// `Σ_n ‖∇_x H_n(ϑ^{k+1}_n) − ∇_x H_n(ϑ^k_n)‖²`
    pub feas_costate: T,
}

fn one_layer<T: Scalar>(ctx: &LayerContext<'_, T>, old: &[T], new: &[T]) -> Result<LayerChange<T>> {
    let mu = hamiltonian(ctx, new)? - hamiltonian(ctx, old)?;
    let a = Linearization::new(ctx.layer, ctx.x, old)?;
    let b = Linearization::new(ctx.layer, ctx.x, new)?;
    let feas_state = a.output().zip_map(b.output(), |u, v| u - v)?.sq_norm();
    let feas_costate = a
        .pullback(ctx.p_next)?
        .zip_map(&b.pullback(ctx.p_next)?, |u, v| u - v)?
        .sq_norm();
    Ok(LayerChange {
        mu,
        feas_state,
        feas_costate,
    })
}

/// Per-layer changes, in layer order. `ctxs` must be generated by `theta_k`.
pub fn layer_changes<T: Scalar>(
    ctxs: &[LayerContext<'_, T>],
    theta_k: &ParamStack<T>,
    theta_k1: &ParamStack<T>,
) -> Result<Vec<LayerChange<T>>> {
    check_len("contexts", theta_k.depth(), ctxs.len())?;
    check_len("updated parameter stack depth", theta_k.depth(), theta_k1.depth())?;
    ctxs.par_iter()
        .map(|ctx| {
            one_layer(ctx, theta_k.layer(ctx.n), theta_k1.layer(ctx.n)).map_err(|e| e.at_layer(ctx.n))
        })
        .collect()
}

/// Layer changes summed in layer order.
pub fn total_change<T: Scalar>(
    ctxs: &[LayerContext<'_, T>],
    theta_k: &ParamStack<T>,
    theta_k1: &ParamStack<T>,
) -> Result<LayerChange<T>> {
    let mut sum = LayerChange {
        mu: T::zero(),
        feas_state: T::zero(),
        feas_costate: T::zero(),
    };
    for c in layer_changes(ctxs, theta_k, theta_k1)? {
        sum.mu += c.mu;
        sum.feas_state += c.feas_state;
        sum.feas_costate += c.feas_costate;
    }
    Ok(sum)
}

pub fn mu_k<T: Scalar>(
    ctxs: &[LayerContext<'_, T>],
    theta_k: &ParamStack<T>,
    theta_k1: &ParamStack<T>,
) -> Result<T> {
    Ok(total_change(ctxs, theta_k, theta_k1)?.mu)
}

/// `(state error, costate error)`
pub fn feasibility_errors<T: Scalar>(
    ctxs: &[LayerContext<'_, T>],
    theta_k: &ParamStack<T>,
    theta_k1: &ParamStack<T>,
) -> Result<(T, T)> {
    let c = total_change(ctxs, theta_k, theta_k1)?;
    Ok((c.feas_state, c.feas_costate))
}
