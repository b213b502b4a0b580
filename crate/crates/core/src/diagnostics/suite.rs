//! The invariant suite behind `emsa diag`: every analytic derivative
//! against central differences, the grad-MSA/SGD equivalence, the co-state
//! identity, μ_k sign, the Lemma-1 audit and the co-state norm bound.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::sine_dataset;
use crate::dynamics::{
    layer_forward, layer_pullback_x, regularizer, terminal_loss, Batch, LayerSpec, Linearization,
    LossKind, NetworkSpec, ParamStack, Targets,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{augmented_value_and_grad, grad_theta_hamiltonian, hamiltonian, LayerContext};
use crate::linalg::Matrix;
use crate::propagation::{backward_propagate_with, forward_propagate, PullbackFn};
use crate::solvers::{
    baseline_iteration, grad_msa_iteration, initialize, train, BaselineState, Init, Method,
    SolverConfig,
};

use super::{costate_norm_audit, gradient_check, lemma1_audit, IterationReport, Status};

/// Finite-difference step for every derivative check.
pub const FD_STEP: f64 = 1e-5;
/// Relative-error tolerance of the derivative checks.
pub const DERIVATIVE_TOL: f64 = 1e-6;
/// Relative-error tolerance of the co-state identity.
pub const COSTATE_IDENTITY_TOL: f64 = 1e-5;
/// Largest parameter deviation allowed between grad-MSA and SGD.
pub const EQUIVALENCE_TOL: f64 = 1e-12;
/// μ_k may undershoot zero by rounding only.
pub const MU_TOL: f64 = 1e-12;

/// Deliberate defects used to confirm the suite can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Negates the layer pullback used for the co-state recursion.
    PullbackSign,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "pullback-sign" => Ok(Fault::PullbackSign),
            _ => Err(Error::Invalid(format!("unknown fault {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    /// Random instances per layer kind (and networks per audit).
    pub instances: usize,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            seed: 0,
            fault: Fault::None,
        }
    }
}

/// One row of the pass/fail table.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// The checked quantity: worst relative error, worst deviation, or the
    /// most negative μ_k, depending on the check.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn from_result(name: &'static str, tolerance: f64, r: Result<(bool, f64, String)>) -> Self {
        match r {
            Ok((passed, worst, detail)) => Self {
                name,
                passed,
                worst,
                tolerance,
                detail,
            },
            Err(e) => Self {
                name,
                passed: false,
                worst: f64::NAN,
                tolerance,
                detail: format!("error: {e}"),
            },
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:<4} worst={:<10.3e} tol={:<8.1e} {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.worst,
            self.tolerance,
            self.detail
        )
    }
}

/// Runs every check.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<CheckOutcome> {
    let s = cfg.seed;
    let sine = sine_network();
    let (emsa_history, emsa_outcome) = short_emsa_run(&sine, s);
    vec![
        check_layer_derivatives(cfg.instances, s),
        check_hamiltonian_gradients(cfg.instances, s.wrapping_add(1)),
        check_loss_gradients(cfg.instances, s.wrapping_add(2)),
        check_grad_msa_equivalence(cfg.instances.min(10), 50, s.wrapping_add(3)),
        check_costate_identity(&sine, s.wrapping_add(4), cfg.fault),
        emsa_outcome,
        check_mu_sign(&emsa_history),
        check_lemma1(&emsa_history),
        check_costate_bound(&sine, cfg.instances, s.wrapping_add(5)),
    ]
}

/// Every layer kind the dynamics support, at small sizes.
pub fn layer_kinds() -> Vec<LayerSpec> {
    vec![
        LayerSpec::residual_dense(5, 0.25),
        LayerSpec::dense_projection(6, 4),
        LayerSpec::classifier(4, 3),
        LayerSpec::residual_conv2d(2, 4, 4, 0.5),
        LayerSpec::conv_projection(2, 3, 4, 4),
    ]
}

/// 20 residual dense layers of width 5, `δ = 0.25`, squared error on the
/// summed output.
pub fn sine_network() -> NetworkSpec {
    NetworkSpec::residual_stack(5, 20, 0.25, LossKind::SumSquaredScalarTarget)
        .expect("static configuration is valid")
}

fn uniform(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * r.random_range(-1.0..1.0)).collect()
}

fn matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, uniform(r, rows * cols, scale)).expect("sizes agree")
}

fn params(spec: &NetworkSpec, r: &mut ChaCha8Rng, scale: f64) -> ParamStack<f64> {
    let layers = spec.layers.iter().map(|l| uniform(r, l.param_len(), scale)).collect();
    ParamStack::new(spec, layers).expect("sizes agree")
}

/// Running maximum of the relative errors of a batch of gradient checks.
#[derive(Default)]
struct Worst {
    err: f64,
    at: String,
}

impl Worst {
    fn record(&mut self, err: f64, at: impl FnOnce() -> String) {
        if err > self.err || self.at.is_empty() {
            self.err = self.err.max(err);
            self.at = at();
        }
    }

    fn finish(self, count: usize, tol: f64) -> (bool, f64, String) {
        (self.err < tol, self.err, format!("{count} checks, worst at {}", self.at))
    }
}

/// Layer pullback `∇_x⟨p, g⟩`, parameter gradient `∇_ϑ⟨p, g⟩` and the mixed
/// derivative `∇_ϑ⟨u, J_xᵀp⟩` for every layer kind.
pub fn check_layer_derivatives(instances: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = Worst::default();
        let mut count = 0;
        for l in layer_kinds() {
            for i in 0..instances {
                let m = 2;
                let th = uniform(&mut r, l.param_len(), 0.5);
                let x = matrix(&mut r, m, l.in_dim, 1.0);
                let p = matrix(&mut r, m, l.out_dim, 1.0);
                let u = matrix(&mut r, m, l.in_dim, 1.0);
                let lin = Linearization::new(&l, &x, &th)?;
                let tag = |what: &str| format!("{:?} #{i} {what}", l.kind);

                let fx = |xs: &[f64]| -> Result<f64> {
                    let xm = Matrix::from_vec(m, l.in_dim, xs.to_vec())?;
                    p.frobenius_dot(&layer_forward(&l, &xm, &th)?)
                };
                let c = gradient_check(fx, lin.pullback(&p)?.as_slice(), x.as_slice(), FD_STEP, DERIVATIVE_TOL)?;
                worst.record(c.worst_rel_error, || tag("pullback"));

                let ft = |t: &[f64]| p.frobenius_dot(&layer_forward(&l, &x, t)?);
                let c = gradient_check(ft, &lin.grad_theta(&p)?, &th, FD_STEP, DERIVATIVE_TOL)?;
                worst.record(c.worst_rel_error, || tag("grad_theta"));

                let fm = |t: &[f64]| u.frobenius_dot(&layer_pullback_x(&l, &x, t, &p)?);
                let c = gradient_check(fm, &lin.mixed_grad(&p, &u)?, &th, FD_STEP, DERIVATIVE_TOL)?;
                worst.record(c.worst_rel_error, || tag("mixed"));
                count += 3;
            }
        }
        Ok(worst.finish(count, DERIVATIVE_TOL))
    };
    CheckOutcome::from_result("layer derivatives", DERIVATIVE_TOL, run())
}

/// `∇_ϑ H` and `∇_ϑ H̃` on random layer contexts, with a regularizer.
pub fn check_hamiltonian_gradients(instances: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = Worst::default();
        let mut count = 0;
        for l in layer_kinds() {
            for i in 0..instances {
                let m = 3;
                // frozen trajectory generated by a nearby ϑ^k, as in training
                let x = matrix(&mut r, m, l.in_dim, 1.0);
                let p_next = matrix(&mut r, m, l.out_dim, 1.0);
                let th = uniform(&mut r, l.param_len(), 0.5);
                let th_k: Vec<f64> = th.iter().map(|t| t + 0.1 * r.random_range(-1.0..1.0)).collect();
                let x_next = layer_forward(&l, &x, &th_k)?;
                let p_curr = layer_pullback_x(&l, &x, &th_k, &p_next)?;
                let rho = r.random_range(0.1..2.0);
                let reg = r.random_range(0.0..0.1);
                let ctx = LayerContext::new(0, &l, reg, &x, &p_next, &x_next, &p_curr, rho)?;

                let g = grad_theta_hamiltonian(&ctx, &th)?;
                let c = gradient_check(|t| hamiltonian(&ctx, t), &g, &th, FD_STEP, DERIVATIVE_TOL)?;
                worst.record(c.worst_rel_error, || format!("{:?} #{i} H", l.kind));

                let (_, g) = augmented_value_and_grad(&ctx, &th)?;
                let f = |t: &[f64]| Ok(augmented_value_and_grad(&ctx, t)?.0);
                let c = gradient_check(f, &g, &th, FD_STEP, DERIVATIVE_TOL)?;
                worst.record(c.worst_rel_error, || format!("{:?} #{i} augmented H", l.kind));
                count += 2;
            }
        }
        Ok(worst.finish(count, DERIVATIVE_TOL))
    };
    CheckOutcome::from_result("hamiltonian gradients", DERIVATIVE_TOL, run())
}

/// `∇Φ` for both losses and the regularizer gradient.
pub fn check_loss_gradients(instances: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = Worst::default();
        let reg_net = NetworkSpec::new(vec![LayerSpec::residual_dense(5, 0.25)], LossKind::SumSquaredScalarTarget)?;
        let ce_net = NetworkSpec::new(vec![LayerSpec::classifier(3, 4)], LossKind::SoftmaxCrossEntropy)?;
        for i in 0..instances {
            for (net, targets) in [
                (&reg_net, Targets::Regression(vec![r.random_range(-1.0..1.0)])),
                (&ce_net, Targets::classes(vec![r.random_range(0..4)], 4)?),
            ] {
                let x = matrix(&mut r, 1, net.output_dim(), 2.0);
                let (_, g) = terminal_loss(net, &x, &targets)?;
                let f = |v: &[f64]| {
                    let xm = Matrix::from_vec(1, v.len(), v.to_vec())?;
                    Ok(terminal_loss(net, &xm, &targets)?.0[0])
                };
                let c = gradient_check(f, g.as_slice(), x.as_slice(), FD_STEP, DERIVATIVE_TOL)?;
                worst.record(c.worst_rel_error, || format!("{:?} #{i}", net.loss));
            }
            let th = uniform(&mut r, 12, 2.0);
            let w = r.random_range(0.01..1.0);
            let (_, g) = regularizer(&th, w)?;
            let c = gradient_check(|t| Ok(regularizer(t, w)?.0), &g, &th, FD_STEP, DERIVATIVE_TOL)?;
            worst.record(c.worst_rel_error, || format!("regularizer #{i}"));
        }
        Ok(worst.finish(3 * instances, DERIVATIVE_TOL))
    };
    CheckOutcome::from_result("loss gradients", DERIVATIVE_TOL, run())
}

/// A random dense network: projection, residual stack, then either a
/// classifier with cross-entropy or squared error on the summed state.
pub fn random_dense_problem(r: &mut ChaCha8Rng) -> Result<(NetworkSpec, ParamStack<f64>, Batch<f64>)> {
    let d_in = r.random_range(2..6);
    let d = r.random_range(2..6);
    let depth = r.random_range(1..5);
    let m = r.random_range(3..9);
    let mut layers = vec![LayerSpec::dense_projection(d_in, d)];
    layers.extend((0..depth).map(|_| LayerSpec::residual_dense(d, r.random_range(0.1..0.6))));
    let x = matrix(r, m, d_in, 1.0);
    let (loss, targets) = if r.random_bool(0.5) {
        let k = r.random_range(2..5);
        layers.push(LayerSpec::classifier(d, k));
        let labels = (0..m).map(|_| r.random_range(0..k)).collect();
        (LossKind::SoftmaxCrossEntropy, Targets::classes(labels, k)?)
    } else {
        (LossKind::SumSquaredScalarTarget, Targets::Regression(uniform(r, m, 1.0)))
    };
    let spec = NetworkSpec::new(layers, loss)?.with_regularizer(r.random_range(0.0..0.01))?;
    let p = params(&spec, r, 0.5);
    Ok((spec, p, Batch::new(x, targets)?))
}

/// grad-MSA and plain full-batch SGD produce the same parameter sequence.
pub fn check_grad_msa_equivalence(nets: usize, iterations: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..nets {
            let (spec, p0, batch) = random_dense_problem(&mut r)?;
            let eta = r.random_range(0.01..0.2);
            let gm = SolverConfig {
                eta,
                ..SolverConfig::new(Method::GradMsa)
            };
            let sgd = SolverConfig {
                eta,
                ..SolverConfig::new(Method::Sgd)
            };
            let (mut a, mut b) = (p0.clone(), p0);
            let mut state = BaselineState::default();
            for k in 0..iterations {
                let sa = grad_msa_iteration(&spec, &a, &batch, &gm);
                let sb = baseline_iteration(&spec, &b, &batch, &sgd, &mut state);
                if sa.report.status != Status::Ok || sb.report.status != Status::Ok {
                    return Err(Error::Invalid(format!(
                        "iteration {k} stopped: {} / {}",
                        sa.report.message.unwrap_or_default(),
                        sb.report.message.unwrap_or_default()
                    )));
                }
                a = sa.params;
                b = sb.params;
                worst = worst.max(a.max_abs_diff(&b));
            }
        }
        Ok((worst < EQUIVALENCE_TOL, worst, format!("{nets} nets x {iterations} iterations")))
    };
    CheckOutcome::from_result("grad-MSA = SGD", EQUIVALENCE_TOL, run())
}

fn negated_pullback(l: &LayerSpec, x: &Matrix<f64>, th: &[f64], p: &Matrix<f64>) -> Result<Matrix<f64>> {
    Ok(layer_pullback_x(l, x, th, p)?.scale(-1.0))
}

/// `p_n = −∇_{x_n} J` by central differences through the layers after `n`,
/// for every `n`.
pub fn check_costate_identity(spec: &NetworkSpec, seed: u64, fault: Fault) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let p = params(spec, &mut r, 0.5);
        let data = sine_dataset(6, seed)?.lifted(spec.input_dim())?;
        let (inputs, targets) = (data.inputs(), data.targets());
        let states = forward_propagate(spec, &p, inputs)?;
        let pullback: &PullbackFn<f64> = match fault {
            Fault::None => &layer_pullback_x,
            Fault::PullbackSign => &negated_pullback,
        };
        let costates = backward_propagate_with(spec, &p, &states, targets, pullback)?;
        let m = inputs.rows();
        let mut worst = Worst::default();
        for n in 0..=spec.depth() {
            let tail = |xs: &[f64]| -> Result<f64> {
                let mut x = Matrix::from_vec(m, spec.layers.get(n).map_or(spec.output_dim(), |l| l.in_dim), xs.to_vec())?;
                for (k, l) in spec.layers.iter().enumerate().skip(n) {
                    x = layer_forward(l, &x, p.layer(k))?;
                }
                let (losses, _) = terminal_loss(spec, &x, targets)?;
                Ok(-losses.iter().sum::<f64>() / m as f64)
            };
            let c = gradient_check(tail, costates.costate(n).as_slice(), states.state(n).as_slice(), FD_STEP, COSTATE_IDENTITY_TOL)?;
            worst.record(c.worst_rel_error, || format!("n = {n}"));
        }
        Ok(worst.finish(spec.depth() + 1, COSTATE_IDENTITY_TOL))
    };
    CheckOutcome::from_result("costate identity", COSTATE_IDENTITY_TOL, run())
}

/// A short full-batch E-MSA run on a small sine set; its history feeds the
/// μ_k and Lemma-1 checks.
fn short_emsa_run(spec: &NetworkSpec, seed: u64) -> (Vec<IterationReport>, CheckOutcome) {
    let run = || -> Result<Vec<IterationReport>> {
        let data = sine_dataset(50, seed)?.lifted(spec.input_dim())?;
        let p0 = initialize(spec, Init::default(), seed)?;
        let cfg = SolverConfig {
            iterations: 10,
            eval_every: 10,
            ..SolverConfig::new(Method::Emsa)
        };
        Ok(train(spec, p0, &data, None, &cfg)?.history)
    };
    match run() {
        Ok(h) => {
            let ok = h.iter().all(|r| r.status == Status::Ok);
            let drop = match (h.first(), h.last()) {
                (Some(a), Some(b)) => b.j_after - a.j_before,
                _ => f64::NAN,
            };
            let outcome = CheckOutcome {
                name: "E-MSA run",
                passed: ok && drop < 0.0,
                worst: drop,
                tolerance: 0.0,
                detail: format!("{} iterations, change in J {drop:.3e}", h.len()),
            };
            (h, outcome)
        }
        Err(e) => (
            Vec::new(),
            CheckOutcome::from_result("E-MSA run", 0.0, Err(e)),
        ),
    }
}

/// Every μ_k is nonnegative up to rounding.
pub fn check_mu_sign(history: &[IterationReport]) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        if history.is_empty() {
            return Err(Error::Empty("history"));
        }
        let min = history.iter().map(|r| r.mu_k).fold(f64::INFINITY, f64::min);
        Ok((min >= -MU_TOL, min, format!("min over {} iterations", history.len())))
    };
    CheckOutcome::from_result("mu_k >= 0", MU_TOL, run())
}

pub fn check_lemma1(history: &[IterationReport]) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        let a = lemma1_audit(history)?;
        Ok((
            a.passed(),
            a.max_c_min.unwrap_or(0.0),
            format!(
                "{} rows, {} flags, max implied C {:.3e}",
                a.rows.len(),
                a.flags.len(),
                a.max_c_min.unwrap_or(0.0)
            ),
        ))
    };
    CheckOutcome::from_result("lemma-1 audit", super::LEMMA1_SLACK, run())
}

/// The discrete Gronwall bound on `‖p_n‖` for random parameter draws.
pub fn check_costate_bound(spec: &NetworkSpec, nets: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, f64, String)> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut failed = 0;
        for i in 0..nets {
            let scale = r.random_range(0.1..2.0);
            let p = params(spec, &mut r, scale);
            let data = sine_dataset(16, seed.wrapping_add(i as u64))?.lifted(spec.input_dim())?;
            let a = costate_norm_audit(spec, &p, data.inputs(), data.targets())?;
            worst = worst.max(a.worst_ratio);
            failed += usize::from(!a.passed);
        }
        Ok((failed == 0, worst, format!("{nets} nets, {failed} failed, worst |p|/bound {worst:.4}")))
    };
    CheckOutcome::from_result("costate bound", super::COSTATE_BOUND_SLACK, run())
}
