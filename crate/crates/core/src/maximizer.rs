//! Bounded L-BFGS ascent with Armijo backtracking.
//!
//! Every accepted step satisfies the sufficient-increase condition, and a
//! step that never does is rejected, so the returned value is never below the
//! starting value.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{augmented_value_and_grad, LayerContext};
use crate::linalg::{all_finite, dot, norm};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscentConfig {
    pub max_iters: usize,
    pub memory: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub grad_tol: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            memory: 10,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            grad_tol: 1e-10,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.max_iters == 0 || self.memory == 0 || self.max_backtracks == 0 {
            return Err(Error::Invalid(
                "ascent max_iters, memory and max_backtracks must be positive".into(),
            ));
        }
        if !open_unit(self.armijo_c) || !open_unit(self.backtrack_factor) {
            return Err(Error::Invalid(
                "ascent armijo_c and backtrack_factor must lie in (0, 1)".into(),
            ));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Invalid("ascent grad_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentStatus {
    /// Gradient max-norm fell to `grad_tol`.
    Converged,
    IterLimit,
    /// No step length within `max_backtracks` gave sufficient increase.
    LineSearchStalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ascent<T> {
    pub theta: Vec<T>,
    pub value: T,
    pub initial_value: T,
    pub status: AscentStatus,
    /// Accepted steps.
    pub iterations: usize,
    pub evaluations: usize,
}

struct Pair<T> {
    s: Vec<T>,
    y: Vec<T>,
    inv_sy: T,
}

/// Maximizes `objective`, which returns value and gradient, starting from
/// `theta0`.
///
/// Internally minimizes the negated objective. Trial points whose evaluation
/// is non-finite (or fails with a non-finite error) count as backtracks.
pub fn lbfgs_ascend<T: Scalar>(
    mut objective: impl FnMut(&[T]) -> Result<(T, Vec<T>)>,
    theta0: &[T],
    config: &AscentConfig,
) -> Result<Ascent<T>> {
    config.validate()?;
    if !all_finite(theta0) {
        return Err(Error::NonFinite("ascent start point"));
    }
    let (v0, g0) = objective(theta0)?;
    if !v0.is_finite() || !all_finite(&g0) {
        return Err(Error::NonFinite("objective at ascent start point"));
    }
    crate::error::check_len("objective gradient", theta0.len(), g0.len())?;

    let c = T::of(config.armijo_c);
    let shrink = T::of(config.backtrack_factor);
    let tol = T::of(config.grad_tol);
    let pair_eps = T::of(1e-12);

    let mut x = theta0.to_vec();
    let mut f = -v0;
    let mut gf: Vec<T> = g0.iter().map(|&v| -v).collect();
    let mut pairs: VecDeque<Pair<T>> = VecDeque::with_capacity(config.memory);
    let mut evaluations = 1;
    let mut accepted = 0;

    let mut status = AscentStatus::IterLimit;
    if max_abs(&gf) <= tol {
        status = AscentStatus::Converged;
    } else {
        for _ in 0..config.max_iters {
            let mut d = two_loop(&gf, &pairs);
            let mut slope = dot(&gf, &d);
            if !(slope < T::zero()) || !all_finite(&d) {
                pairs.clear();
                d = gf.iter().map(|&v| -v).collect();
                slope = dot(&gf, &d);
            }
            let mut t = if pairs.is_empty() {
                T::one().min(T::one() / norm(&gf))
            } else {
                T::one()
            };

            let mut trial = vec![T::zero(); x.len()];
            let mut found = None;
            for _ in 0..=config.max_backtracks {
                for ((ti, &xi), &di) in trial.iter_mut().zip(&x).zip(&d) {
                    *ti = xi + t * di;
                }
                evaluations += 1;
                match objective(&trial) {
                    Ok((v, g)) if v.is_finite() && all_finite(&g) => {
                        if -v <= f + c * t * slope {
                            found = Some((v, g));
                            break;
                        }
                    }
                    Ok(_) => {}
                    Err(e) if e.is_non_finite() => {}
                    Err(e) => return Err(e),
                }
                t *= shrink;
            }
            let Some((v, g)) = found else {
                status = AscentStatus::LineSearchStalled;
                break;
            };

            let gf_new: Vec<T> = g.iter().map(|&v| -v).collect();
            let s: Vec<T> = trial.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let y: Vec<T> = gf_new.iter().zip(&gf).map(|(&a, &b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > pair_eps * norm(&s) * norm(&y) {
                if pairs.len() == config.memory {
                    pairs.pop_front();
                }
                pairs.push_back(Pair {
                    s,
                    y,
                    inv_sy: T::one() / sy,
                });
            }
            x = trial;
            f = -v;
            gf = gf_new;
            accepted += 1;
            if max_abs(&gf) <= tol {
                status = AscentStatus::Converged;
                break;
            }
        }
    }
    Ok(Ascent {
        theta: x,
        value: -f,
        initial_value: v0,
        status,
        iterations: accepted,
        evaluations,
    })
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// `−H·g` with the inverse-Hessian approximation from `pairs`.
fn two_loop<T: Scalar>(g: &[T], pairs: &VecDeque<Pair<T>>) -> Vec<T> {
    let mut q = g.to_vec();
    let mut alpha = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.inv_sy * dot(&p.s, &q);
        for (qi, &yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alpha.push(a);
    }
    if let Some(last) = pairs.back() {
        let gamma = T::one() / (last.inv_sy * dot(&last.y, &last.y));
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in pairs.iter().zip(alpha.into_iter().rev()) {
        let b = p.inv_sy * dot(&p.y, &q);
        for (qi, &si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Approximate `argmax_ϑ H̃_n(ϑ)` warm-started at `theta_k`.
pub fn maximize_layer<T: Scalar>(
    ctx: &LayerContext<'_, T>,
    theta_k: &[T],
    config: &AscentConfig,
) -> Result<Ascent<T>> {
    lbfgs_ascend(|t| augmented_value_and_grad(ctx, t), theta_k, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Activation, LayerSpec, Linearization};
    use crate::hamiltonian::{augmented_hamiltonian, hamiltonian};
    use crate::linalg::Matrix;
    use crate::testutil::{random_matrix, rng, uniform_vec};

    fn neg_dist(c: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |t: &[f64]| {
            let d: Vec<f64> = t.iter().zip(&c).map(|(a, b)| a - b).collect();
            Ok((-dot(&d, &d), d.iter().map(|v| -2.0 * v).collect()))
        }
    }

    #[test]
    fn concave_quadratic_reaches_center() {
        for dim in [1, 3, 10] {
            let mut r = rng(dim as u64);
            let c = uniform_vec(&mut r, dim, 3.0);
            let x0 = uniform_vec(&mut r, dim, 5.0);
            let out = lbfgs_ascend(neg_dist(c.clone()), &x0, &AscentConfig::default()).unwrap();
            assert!(out.iterations <= 10);
            assert!(max_abs_diff(&out.theta, &c) < 1e-8, "dim {dim}: {:?}", out.status);
        }
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        crate::linalg::max_abs_diff(a, b)
    }

    #[test]
    fn stationary_start_is_returned() {
        let c = vec![1.0, -2.0];
        let out = lbfgs_ascend(neg_dist(c.clone()), &c, &AscentConfig::default()).unwrap();
        assert_eq!(out.theta, c);
        assert_eq!(out.status, AscentStatus::Converged);
        assert_eq!(out.evaluations, 1);
    }

    /// Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn random_concave_quadratic_matches_linear_solve() {
        for seed in 0..5 {
            let mut r = rng(100 + seed);
            let n = 6;
            let m = random_matrix(&mut r, n, n, 1.0);
            // A = MᵀM + I is symmetric positive definite
            let a: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|k| m.get(k, i) * m.get(k, j)).sum::<f64>() + f64::from(i == j))
                        .collect()
                })
                .collect();
            let b = uniform_vec(&mut r, n, 2.0);
            let (a2, b2) = (a.clone(), b.clone());
            let obj = move |t: &[f64]| {
                let at: Vec<f64> = a2.iter().map(|row| dot(row, t)).collect();
                Ok((dot(&b2, t) - 0.5 * dot(t, &at), b2.iter().zip(&at).map(|(x, y)| x - y).collect()))
            };
            let cfg = AscentConfig {
                max_iters: 200,
                ..AscentConfig::default()
            };
            let out = lbfgs_ascend(obj, &vec![0.0; n], &cfg).unwrap();
            let want = solve(a, b);
            assert!(max_abs_diff(&out.theta, &want) < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn value_never_decreases() {
        // a nonconcave objective with many local features
        let obj = |t: &[f64]| {
            let v = t.iter().map(|x| (3.0 * x).sin() - 0.1 * x * x).sum::<f64>();
            Ok((v, t.iter().map(|x| 3.0 * (3.0 * x).cos() - 0.2 * x).collect()))
        };
        let mut r = rng(7);
        for _ in 0..20 {
            let x0 = uniform_vec(&mut r, 4, 5.0);
            let out = lbfgs_ascend(obj, &x0, &AscentConfig::default()).unwrap();
            assert!(out.value >= out.initial_value);
            assert_eq!(out.value, obj(&out.theta).unwrap().0);
        }
    }

    #[test]
    fn rejects_non_finite_start() {
        let obj = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(lbfgs_ascend(obj, &[0.0], &AscentConfig::default()).is_err());
        assert!(lbfgs_ascend(neg_dist(vec![0.0]), &[f64::INFINITY], &AscentConfig::default()).is_err());
    }

    #[test]
    fn non_finite_trials_are_backtracked() {
        // undefined beyond 1, maximum at 0.9
        let obj = |t: &[f64]| {
            if t[0] > 1.0 {
                Ok((f64::NAN, vec![f64::NAN]))
            } else {
                Ok((-(t[0] - 0.9).powi(2), vec![-2.0 * (t[0] - 0.9)]))
            }
        };
        let out = lbfgs_ascend(obj, &[-50.0], &AscentConfig::default()).unwrap();
        assert!(out.value >= out.initial_value);
        assert!(out.theta[0] <= 1.0);
    }

    #[test]
    fn stalled_line_search_keeps_start() {
        // gradient points the wrong way, so no step increases the value
        let obj = |t: &[f64]| Ok((-t[0] * t[0], vec![1.0]));
        let out = lbfgs_ascend(obj, &[0.0], &AscentConfig::default()).unwrap();
        assert_eq!(out.status, AscentStatus::LineSearchStalled);
        assert_eq!(out.theta, vec![0.0]);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = AscentConfig {
            armijo_c: 1.0,
            ..AscentConfig::default()
        };
        assert!(lbfgs_ascend(neg_dist(vec![0.0]), &[1.0], &bad).is_err());
    }

    struct Generated {
        layer: LayerSpec,
        x: Matrix<f64>,
        p_next: Matrix<f64>,
        x_next: Matrix<f64>,
        p_curr: Matrix<f64>,
        theta: Vec<f64>,
    }

    fn generated(layer: LayerSpec, seed: u64) -> Generated {
        let mut r = rng(seed);
        let theta = uniform_vec(&mut r, layer.param_len(), 0.5);
        let x = random_matrix(&mut r, 4, layer.in_dim, 1.0);
        let p_next = random_matrix(&mut r, 4, layer.out_dim, 1.0);
        let lin = Linearization::new(&layer, &x, &theta).unwrap();
        let x_next = lin.output().clone();
        let p_curr = lin.pullback(&p_next).unwrap();
        Generated {
            layer,
            x,
            p_next,
            x_next,
            p_curr,
            theta,
        }
    }

    impl Generated {
        fn ctx(&self, rho: f64, reg: f64) -> LayerContext<'_, f64> {
            LayerContext::new(0, &self.layer, reg, &self.x, &self.p_next, &self.x_next, &self.p_curr, rho)
                .unwrap()
        }
    }

    #[test]
    fn large_rho_pins_parameters() {
        let g = generated(LayerSpec::residual_dense(4, 0.25), 11);
        let mut steps = Vec::new();
        for rho in [1e2, 1e4, 1e6, 1e8] {
            let out = maximize_layer(&g.ctx(rho, 0.0), &g.theta, &AscentConfig::default()).unwrap();
            steps.push(crate::linalg::norm(
                &out.theta.iter().zip(&g.theta).map(|(a, b)| a - b).collect::<Vec<_>>(),
            ));
        }
        for w in steps.windows(2) {
            assert!(w[1] <= w[0], "{steps:?}");
        }
        assert!(steps[3] < 1e-3 * steps[0].max(1e-300) || steps[3] < 1e-8, "{steps:?}");
    }

    #[test]
    fn zero_rho_linear_layer_matches_closed_form() {
        // g = x + δ(Wx + b) is linear in ϑ, so H = cᵀϑ − δw‖ϑ‖² peaks at c/(2δw)
        let layer = LayerSpec::residual_dense(3, 0.5).with_activation(Activation::Identity);
        let g = generated(layer, 12);
        let w = 0.3;
        let ctx = g.ctx(0.0, w);
        let zero = vec![0.0; g.theta.len()];
        let c = crate::dynamics::layer_grad_theta(&g.layer, &g.x, &zero, &g.p_next).unwrap();
        let want: Vec<f64> = c.iter().map(|v| v / (2.0 * 0.5 * w)).collect();
        let out = maximize_layer(&ctx, &g.theta, &AscentConfig::default()).unwrap();
        assert!(max_abs_diff(&out.theta, &want) < 1e-8, "{:?}", out.status);
    }

    #[test]
    fn layer_ascent_guarantee() {
        let layers = [
            LayerSpec::residual_dense(4, 0.25),
            LayerSpec::dense_projection(5, 3),
            LayerSpec::classifier(3, 2),
            LayerSpec::residual_conv2d(2, 4, 4, 0.5),
        ];
        for (k, layer) in layers.into_iter().enumerate() {
            for rho in [0.0, 1.0, 10.0] {
                let g = generated(layer.clone(), 20 + k as u64);
                let ctx = g.ctx(rho, 0.0);
                let out = maximize_layer(&ctx, &g.theta, &AscentConfig::default()).unwrap();
                let before = augmented_hamiltonian(&ctx, &g.theta).unwrap();
                assert!(augmented_hamiltonian(&ctx, &out.theta).unwrap() >= before);
                // the penalties vanish at the warm start, so H cannot fall either
                assert!(hamiltonian(&ctx, &out.theta).unwrap() >= hamiltonian(&ctx, &g.theta).unwrap());
                assert!(all_finite(&out.theta));
            }
        }
    }

    #[test]
    fn deterministic() {
        let g = generated(LayerSpec::residual_dense(4, 0.25), 30);
        let ctx = g.ctx(1.0, 0.0);
        let a = maximize_layer(&ctx, &g.theta, &AscentConfig::default()).unwrap();
        let b = maximize_layer(&ctx, &g.theta, &AscentConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
