use std::time::Instant;

use rayon::prelude::*;

use crate::diagnostics::{regularization_term, total_change, IterationReport, Status};
use crate::dynamics::{layer_grad_theta, regularizer, terminal_loss, Batch, NetworkSpec, ParamStack};
use crate::error::{Error, Result};
use crate::hamiltonian::{grad_theta_hamiltonian, LayerContext};
use crate::maximizer::maximize_layer;
use crate::propagation::{backward_propagate, forward_propagate, forward_terminal, CostateTrajectory, StateTrajectory};
use crate::scalar::Scalar;

use super::config::{Method, SolverConfig};

/// Batch objectives at or above this are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Parameters after one outer iteration and its report. When the report's
/// status is [`Status::Failed`] the parameters are the unchanged input.
#[derive(Clone, Debug)]
pub struct Step<T> {
    pub params: ParamStack<T>,
    pub report: IterationReport,
}

/// Optimizer memory carried between baseline iterations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BaselineState<T> {
    pub steps: u64,
    /// Momentum velocity (SGD), squared-gradient sum (Adagrad) or first
    /// moment (Adam), per layer.
    pub first: Vec<Vec<T>>,
    /// Adam's second moment.
    pub second: Vec<Vec<T>>,
}

/// Frozen trajectories of one batch at `ϑ^k`.
struct Frozen<T> {
    states: StateTrajectory<T>,
    costates: CostateTrajectory<T>,
}

impl<T: Scalar> Frozen<T> {
    fn contexts<'a>(&'a self, spec: &'a NetworkSpec, rho: T) -> Result<Vec<LayerContext<'a, T>>> {
        (0..spec.depth())
            .map(|n| {
                LayerContext::new(
                    n,
                    &spec.layers[n],
                    spec.regularizer_weight,
                    self.states.state(n),
                    self.costates.costate(n + 1),
                    self.states.state(n + 1),
                    self.costates.costate(n),
                    rho,
                )
            })
            .collect()
    }
}

fn is_divergent(j: f64) -> bool {
    !j.is_finite() || j > DIVERGENCE_THRESHOLD
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of(v.len() as f64)
}

/// The shared skeleton: freeze trajectories at `ϑ^k`, apply `update`, then
/// account for the change on the same batch.
fn run<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    batch: &Batch<T>,
    method: Method,
    update: impl FnOnce(&Frozen<T>) -> Result<ParamStack<T>>,
) -> Step<T> {
    let mut report = IterationReport {
        method,
        batch_size: batch.len(),
        ..IterationReport::default()
    };
    let finish = |mut report: IterationReport, e: Error| {
        report.status = if e.is_non_finite() {
            Status::Diverged
        } else {
            Status::Failed
        };
        report.message = Some(e.to_string());
        Step {
            params: params.clone(),
            report,
        }
    };

    let t = Instant::now();
    let frozen = match forward_propagate(spec, params, &batch.inputs).and_then(|states| {
        let (losses, _) = terminal_loss(spec, states.terminal(), &batch.targets)?;
        Ok((states, losses))
    }) {
        Ok(v) => v,
        Err(e) => return finish(report, e),
    };
    report.times.forward = t.elapsed().as_secs_f64();
    let (states, losses) = frozen;
    let reg_before = match regularization_term(spec, params) {
        Ok(r) => r,
        Err(e) => return finish(report, e),
    };
    report.j_before = (mean(&losses) + reg_before).as_f64();
    if is_divergent(report.j_before) {
        return finish(report, Error::NonFinite("objective above the divergence threshold"));
    }

    let t = Instant::now();
    let costates = match backward_propagate(spec, params, &states, &batch.targets) {
        Ok(c) => c,
        Err(e) => return finish(report, e),
    };
    report.times.backward = t.elapsed().as_secs_f64();
    let frozen = Frozen { states, costates };

    let t = Instant::now();
    let new = match update(&frozen) {
        Ok(p) => p,
        Err(e) => return finish(report, e),
    };
    report.times.update = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let audited = frozen.contexts(spec, T::zero()).and_then(|ctxs| {
        let change = total_change(&ctxs, params, &new)?;
        let out = forward_terminal(spec, &new, &batch.inputs)?;
        let (after, _) = terminal_loss(spec, &out, &batch.targets)?;
        let j_after = mean(&after) + regularization_term(spec, &new)?;
        Ok((change, j_after))
    });
    report.times.audit = t.elapsed().as_secs_f64();
    match audited {
        Ok((change, j_after)) => {
            report.mu_k = change.mu.as_f64();
            report.feas_state = change.feas_state.as_f64();
            report.feas_costate = change.feas_costate.as_f64();
            report.j_after = j_after.as_f64();
            report.delta_j = report.j_after - report.j_before;
            if is_divergent(report.j_after) {
                report.status = Status::Diverged;
            }
        }
        Err(e) if e.is_non_finite() => {
            report.j_after = f64::NAN;
            report.delta_j = f64::NAN;
            report.status = Status::Diverged;
            report.message = Some(e.to_string());
        }
        Err(e) => return finish(report, e),
    }
    Step { params: new, report }
}

/// Each layer's augmented Hamiltonian maximized independently, warm-started
/// at `ϑ^k_n`, with `ρ = config.rho`.
pub fn emsa_iteration<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    batch: &Batch<T>,
    config: &SolverConfig,
) -> Step<T> {
    msa(spec, params, batch, config, config.rho, Method::Emsa)
}

/// [`emsa_iteration`] with `ρ = 0`.
pub fn basic_msa_iteration<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    batch: &Batch<T>,
    config: &SolverConfig,
) -> Step<T> {
    msa(spec, params, batch, config, 0.0, Method::BasicMsa)
}

fn msa<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    batch: &Batch<T>,
    config: &SolverConfig,
    rho: f64,
    method: Method,
) -> Step<T> {
    run(spec, params, batch, method, |frozen| {
        let ctxs = frozen.contexts(spec, T::of(rho))?;
        let layers = ctxs
            .par_iter()
            .map(|ctx| {
                maximize_layer(ctx, params.layer(ctx.n), &config.ascent)
                    .map(|a| a.theta)
                    .map_err(|e| e.at_layer(ctx.n))
            })
            .collect::<Result<Vec<_>>>()?;
        ParamStack::new(spec, layers)
    })
}

/// `ϑ_n ← ϑ_n + η ∇_ϑ H_n`: one gradient-ascent step on each layer's
/// Hamiltonian.
pub fn grad_msa_iteration<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    batch: &Batch<T>,
    config: &SolverConfig,
) -> Step<T> {
    run(spec, params, batch, Method::GradMsa, |frozen| {
        let ctxs = frozen.contexts(spec, T::zero())?;
        let step = T::of(config.eta);
        let layers = ctxs
            .par_iter()
            .map(|ctx| {
                let g = grad_theta_hamiltonian(ctx, params.layer(ctx.n)).map_err(|e| e.at_layer(ctx.n))?;
                Ok(params
                    .layer(ctx.n)
                    .iter()
                    .zip(g)
                    .map(|(&th, gi)| th + step * gi)
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        ParamStack::new(spec, layers)
    })
}

/// `∇_ϑ J` assembled by back-propagation: `−Σ_i J_ϑᵀ p_{n+1} + δ_n ∇L(ϑ_n)`.
pub fn loss_gradient<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    states: &StateTrajectory<T>,
    costates: &CostateTrajectory<T>,
) -> Result<Vec<Vec<T>>> {
    (0..spec.depth())
        .into_par_iter()
        .map(|n| {
            let layer = &spec.layers[n];
            let theta = params.layer(n);
            let gp = layer_grad_theta(layer, states.state(n), theta, costates.costate(n + 1))
                .map_err(|e| e.at_layer(n))?;
            let (_, dl) = regularizer(theta, spec.regularizer_weight)?;
            let delta = T::of(layer.effective_delta());
            Ok(gp.iter().zip(dl).map(|(&g, d)| delta * d - g).collect())
        })
        .collect()
}

/// One SGD (with momentum), Adagrad or Adam step along [`loss_gradient`].
pub fn baseline_iteration<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    batch: &Batch<T>,
    config: &SolverConfig,
    state: &mut BaselineState<T>,
) -> Step<T> {
    let method = config.method;
    if !method.is_baseline() {
        let report = IterationReport {
            method,
            status: Status::Failed,
            message: Some(format!("{method} is not a gradient baseline")),
            ..IterationReport::default()
        };
        return Step {
            params: params.clone(),
            report,
        };
    }
    let mut next_state = state.clone();
    let step = run(spec, params, batch, method, |frozen| {
        let grads = loss_gradient(spec, params, &frozen.states, &frozen.costates)?;
        let layers = apply_baseline(config, params, &grads, &mut next_state);
        ParamStack::new(spec, layers)
    });
    if step.report.status != Status::Failed {
        *state = next_state;
    }
    step
}

fn apply_baseline<T: Scalar>(
    config: &SolverConfig,
    params: &ParamStack<T>,
    grads: &[Vec<T>],
    state: &mut BaselineState<T>,
) -> Vec<Vec<T>> {
    let zeros = || grads.iter().map(|g| vec![T::zero(); g.len()]).collect::<Vec<_>>();
    if state.first.len() != grads.len() {
        state.first = zeros();
        state.second = zeros();
    }
    state.steps += 1;
    let eta = T::of(config.eta);
    let mut out = Vec::with_capacity(grads.len());
    for (n, g) in grads.iter().enumerate() {
        let theta = params.layer(n);
        let layer: Vec<T> = match config.method {
            Method::Sgd => {
                let mu = T::of(config.momentum);
                let v = &mut state.first[n];
                v.iter_mut().zip(g).for_each(|(vi, &gi)| *vi = mu * *vi + gi);
                theta.iter().zip(v.iter()).map(|(&t, &vi)| t - eta * vi).collect()
            }
            Method::Adagrad => {
                let eps = T::of(config.adagrad_eps);
                let acc = &mut state.first[n];
                acc.iter_mut().zip(g).for_each(|(a, &gi)| *a += gi * gi);
                theta
                    .iter()
                    .zip(g)
                    .zip(acc.iter())
                    .map(|((&t, &gi), &a)| t - eta * gi / (a.sqrt() + eps))
                    .collect()
            }
            Method::Adam => {
                let (b1, b2) = (T::of(config.adam_beta1), T::of(config.adam_beta2));
                let eps = T::of(config.adam_eps);
                let k = state.steps as i32;
                let (c1, c2) = (T::one() - b1.powi(k), T::one() - b2.powi(k));
                let (m, v) = (&mut state.first[n], &mut state.second[n]);
                theta
                    .iter()
                    .zip(g)
                    .zip(m.iter_mut().zip(v.iter_mut()))
                    .map(|((&t, &gi), (mi, vi))| {
                        *mi = b1 * *mi + (T::one() - b1) * gi;
                        *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                        t - eta * (*mi / c1) / ((*vi / c2).sqrt() + eps)
                    })
                    .collect()
            }
            _ => unreachable!("checked by baseline_iteration"),
        };
        out.push(layer);
    }
    out
}

/// Dispatches on `config.method`; `state` is touched by baselines only.
pub fn iteration<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    batch: &Batch<T>,
    config: &SolverConfig,
    state: &mut BaselineState<T>,
) -> Step<T> {
    match config.method {
        Method::Emsa => emsa_iteration(spec, params, batch, config),
        Method::BasicMsa => basic_msa_iteration(spec, params, batch, config),
        Method::GradMsa => grad_msa_iteration(spec, params, batch, config),
        Method::Sgd | Method::Adagrad | Method::Adam => baseline_iteration(spec, params, batch, config, state),
    }
}
