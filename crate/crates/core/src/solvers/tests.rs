use super::*;
use crate::data::{sine_dataset, Dataset, Normalization};
use crate::diagnostics::{central_difference, mu_k, total_loss, Status};
use crate::dynamics::{Activation, Batch, LayerSpec, LossKind, NetworkSpec, ParamStack, Targets};
use crate::hamiltonian::LayerContext;
use crate::linalg::Matrix;
use crate::propagation::sweep;
use crate::testutil::{random_matrix, random_params, rng};

fn sine_spec(depth: usize) -> NetworkSpec {
    NetworkSpec::residual_stack(5, depth, 0.25, LossKind::SumSquaredScalarTarget).unwrap()
}

fn sine_batch(n: usize, seed: u64) -> Batch<f64> {
    sine_dataset(n, seed).unwrap().lifted(5).unwrap().samples
}

fn cfg(method: Method) -> SolverConfig {
    SolverConfig::new(method)
}

#[test]
fn exact_fixed_point_is_kept() {
    // zero dynamics with targets Σx: zero loss, zero co-states
    let spec = sine_spec(4);
    let x = random_matrix(&mut rng(1), 6, 5, 1.0);
    let y = x.iter_rows().map(|r| r.iter().sum()).collect();
    let batch = Batch::new(x, Targets::Regression(y)).unwrap();
    let p0 = ParamStack::zeros(&spec);
    let step = emsa_iteration(&spec, &p0, &batch, &cfg(Method::Emsa));
    assert_eq!(step.report.status, Status::Ok);
    assert_eq!(step.params, p0);
    assert_eq!(step.report.mu_k, 0.0);
    assert_eq!(step.report.delta_j, 0.0);
}

#[test]
fn emsa_decreases_sine_objective_for_some_rho() {
    let spec = sine_spec(20);
    let batch = sine_batch(100, 2);
    let p0 = initialize(&spec, Init::default(), 3).unwrap();
    let mut rho = 1.0;
    let mut decreased = false;
    for _ in 0..8 {
        let c = SolverConfig { rho, ..cfg(Method::Emsa) };
        let step = emsa_iteration(&spec, &p0, &batch, &c);
        assert!(step.report.mu_k >= 0.0);
        if step.report.delta_j < 0.0 {
            decreased = true;
            break;
        }
        rho *= 2.0;
    }
    assert!(decreased);
}

#[test]
fn mu_nonnegative_on_random_instances() {
    let spec = sine_spec(6);
    let mut r = rng(4);
    for rho in [0.0, 0.5, 5.0] {
        for _ in 0..5 {
            let p = random_params(&spec, &mut r, 1.0);
            let x = random_matrix(&mut r, 8, 5, 2.0);
            let b = Batch::new(x, Targets::Regression((0..8).map(|i| i as f64 * 0.1).collect())).unwrap();
            let step = emsa_iteration(&spec, &p, &b, &SolverConfig { rho, ..cfg(Method::Emsa) });
            assert!(step.report.mu_k >= 0.0, "{}", step.report.mu_k);
            assert!(step.report.feas_state >= 0.0 && step.report.feas_costate >= 0.0);
        }
    }
}

#[test]
fn reported_mu_matches_recomputation() {
    let spec = sine_spec(5);
    let batch = sine_batch(30, 5);
    let p0 = initialize(&spec, Init::default(), 6).unwrap();
    let step = emsa_iteration(&spec, &p0, &batch, &cfg(Method::Emsa));
    let s = sweep(&spec, &p0, &batch.inputs, &batch.targets).unwrap();
    let ctxs = LayerContext::all_from_sweep(&spec, &s, 0.0).unwrap();
    let mu = mu_k(&ctxs, &p0, &step.params).unwrap();
    assert!((mu - step.report.mu_k).abs() <= 1e-12 * mu.abs().max(1.0));
}

#[test]
fn basic_msa_is_emsa_without_penalty() {
    let spec = sine_spec(5);
    let batch = sine_batch(20, 7);
    let p0 = initialize(&spec, Init::default(), 8).unwrap();
    let a = basic_msa_iteration(&spec, &p0, &batch, &cfg(Method::BasicMsa));
    let b = emsa_iteration(&spec, &p0, &batch, &SolverConfig { rho: 0.0, ..cfg(Method::Emsa) });
    assert_eq!(a.params, b.params);
    assert_eq!(a.report.mu_k.to_bits(), b.report.mu_k.to_bits());
}

/// Scalar identity-activation chain with a quadratic regularizer: every
/// Hamiltonian is concave quadratic in its layer's parameters.
fn lqr_problem() -> (NetworkSpec, Batch<f64>) {
    let layers = (0..3)
        .map(|_| LayerSpec::residual_dense(1, 0.5).with_activation(Activation::Identity))
        .collect();
    let spec = NetworkSpec::new(layers, LossKind::SumSquaredScalarTarget)
        .unwrap()
        .with_regularizer(5.0)
        .unwrap();
    let x = Matrix::from_vec(4, 1, vec![-1.0, -0.3, 0.4, 1.0]).unwrap();
    let batch = Batch::new(x, Targets::Regression(vec![-0.5, 0.1, 0.6, 0.9])).unwrap();
    (spec, batch)
}

#[test]
fn basic_msa_monotone_on_linear_quadratic_problem() {
    let (spec, batch) = lqr_problem();
    let mut p = ParamStack::new(&spec, vec![vec![0.3, -0.2]; 3]).unwrap();
    let c = cfg(Method::BasicMsa);
    for k in 0..50 {
        let step = basic_msa_iteration(&spec, &p, &batch, &c);
        assert_eq!(step.report.status, Status::Ok);
        assert!(step.report.delta_j <= 1e-12, "iteration {k}: {}", step.report.delta_j);
        p = step.params;
    }
}

#[test]
fn basic_msa_diverges_on_unbounded_hamiltonian() {
    // identity activation and no regularizer: every H_n is linear in ϑ
    let layers = (0..20)
        .map(|_| LayerSpec::residual_dense(5, 0.25).with_activation(Activation::Identity))
        .collect();
    let spec = NetworkSpec::new(layers, LossKind::SumSquaredScalarTarget).unwrap();
    let ds = sine_dataset(50, 9).unwrap().lifted(5).unwrap();
    let p0 = initialize(&spec, Init::TruncatedNormal { std: 1.0, bias: 0.5 }, 10).unwrap();
    let c = SolverConfig {
        iterations: 100,
        ..cfg(Method::BasicMsa)
    };
    let out = train(&spec, p0, &ds, None, &c).unwrap();
    assert_eq!(out.status, Status::Diverged);
    assert!(out.history.len() < 100);
}

#[test]
fn grad_msa_step_is_gradient_descent() {
    let spec = sine_spec(4).with_regularizer(0.05).unwrap();
    let batch = sine_batch(7, 11);
    let p0 = initialize(&spec, Init::default(), 12).unwrap();
    let eta = 0.01;
    let step = grad_msa_iteration(&spec, &p0, &batch, &SolverConfig { eta, ..cfg(Method::GradMsa) });
    for n in 0..4 {
        let j = |th: &[f64]| {
            let mut p = p0.clone();
            p.layer_mut(n).copy_from_slice(th);
            total_loss(&spec, &p, &batch.inputs, &batch.targets)
        };
        let g = central_difference(j, p0.layer(n), 1e-5).unwrap();
        for ((new, old), gi) in step.params.layer(n).iter().zip(p0.layer(n)).zip(&g) {
            let want = old - eta * gi;
            assert!((new - old - (want - old)).abs() <= 1e-5 * (eta * gi).abs().max(1e-10));
        }
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let spec = sine_spec(3);
    let batch = sine_batch(5, 13);
    let p0 = initialize(&spec, Init::default(), 14).unwrap();
    let z = |m| SolverConfig { eta: 0.0, ..cfg(m) };
    assert_eq!(grad_msa_iteration(&spec, &p0, &batch, &z(Method::GradMsa)).params, p0);
    for m in [Method::Sgd, Method::Adagrad, Method::Adam] {
        let mut st = BaselineState::default();
        assert_eq!(baseline_iteration(&spec, &p0, &batch, &z(m), &mut st).params, p0);
    }
}

#[test]
fn grad_msa_matches_sgd() {
    let spec = sine_spec(5);
    let batch = sine_batch(10, 15);
    let mut a = random_params(&spec, &mut rng(16), 0.5);
    let mut b = a.clone();
    let mut st = BaselineState::default();
    for _ in 0..20 {
        a = grad_msa_iteration(&spec, &a, &batch, &SolverConfig { eta: 0.05, ..cfg(Method::GradMsa) }).params;
        b = baseline_iteration(&spec, &b, &batch, &SolverConfig { eta: 0.05, ..cfg(Method::Sgd) }, &mut st).params;
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
}

fn perfect_fit() -> (NetworkSpec, ParamStack<f64>, Batch<f64>) {
    let spec = sine_spec(3);
    let x = random_matrix(&mut rng(17), 4, 5, 1.0);
    let y = x.iter_rows().map(|r| r.iter().sum()).collect();
    (spec.clone(), ParamStack::zeros(&spec), Batch::new(x, Targets::Regression(y)).unwrap())
}

#[test]
fn baselines_ignore_zero_gradient() {
    let (spec, p0, batch) = perfect_fit();
    for m in [Method::Sgd, Method::Adagrad, Method::Adam] {
        let mut st = BaselineState::default();
        let step = baseline_iteration(&spec, &p0, &batch, &cfg(m), &mut st);
        assert_eq!(step.params, p0, "{m}");
    }
}

#[test]
fn sgd_on_half_square() {
    // classifier 1→1 on input 0 with target 0: J = ½W² at b = 0
    let spec = NetworkSpec::new(vec![LayerSpec::classifier(1, 1)], LossKind::SumSquaredScalarTarget)
        .unwrap()
        .with_regularizer(0.5)
        .unwrap();
    let batch = Batch::new(Matrix::zeros(1, 1), Targets::Regression(vec![0.0])).unwrap();
    let p0 = ParamStack::new(&spec, vec![vec![1.0, 0.0]]).unwrap();
    let mut st = BaselineState::default();
    let step = baseline_iteration(&spec, &p0, &batch, &SolverConfig { eta: 0.1, ..cfg(Method::Sgd) }, &mut st);
    assert!((step.params.layer(0)[0] - 0.9f64).abs() < 1e-15);
    assert_eq!(step.params.layer(0)[1], 0.0);
}

#[test]
fn adam_first_step_is_sign_step() {
    let spec = sine_spec(2);
    let p0 = initialize(&spec, Init::default(), 18).unwrap();
    for scale in [1e-3, 1.0, 1e3] {
        let batch = sine_batch(5, 19);
        let batch = Batch::new(batch.inputs.clone(), match batch.targets {
            Targets::Regression(y) => Targets::Regression(y.iter().map(|v| v * scale).collect()),
            t => t,
        })
        .unwrap();
        let mut st = BaselineState::default();
        let eta = 1e-3;
        let step = baseline_iteration(&spec, &p0, &batch, &SolverConfig { eta, ..cfg(Method::Adam) }, &mut st);
        for (a, b) in step.params.layers().iter().flatten().zip(p0.layers().iter().flatten()) {
            let d = (a - b).abs();
            assert!(d <= eta * (1.0 + 1e-12) && d > 0.9 * eta, "scale {scale}: {d}");
        }
    }
}

#[test]
fn non_baseline_method_rejected_by_baseline_step() {
    let (spec, p0, batch) = perfect_fit();
    let mut st = BaselineState::default();
    let s = baseline_iteration(&spec, &p0, &batch, &cfg(Method::Emsa), &mut st);
    assert_eq!(s.report.status, Status::Failed);
}

fn small_sine() -> (NetworkSpec, Dataset<f64>, Dataset<f64>) {
    let spec = sine_spec(6);
    (
        spec,
        sine_dataset(60, 20).unwrap().lifted(5).unwrap(),
        sine_dataset(40, 21).unwrap().lifted(5).unwrap(),
    )
}

#[test]
fn zero_iterations_is_a_no_op() {
    let (spec, tr, te) = small_sine();
    let p0 = initialize(&spec, Init::default(), 22).unwrap();
    let out = train(&spec, p0.clone(), &tr, Some(&te), &SolverConfig { iterations: 0, ..cfg(Method::Emsa) }).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.params, p0);
    assert!(out.initial_test.is_some());
}

#[test]
fn training_is_deterministic() {
    let (spec, tr, te) = small_sine();
    for method in Method::ALL {
        let c = SolverConfig {
            iterations: 6,
            batch_size: BatchSize::Size(16),
            eval_every: 2,
            seed: 3,
            eta: 0.01,
            ..cfg(method)
        };
        let run = || {
            let p0 = initialize(&spec, Init::default(), 23).unwrap();
            let out = train(&spec, p0, &tr, Some(&te), &c).unwrap();
            let h: Vec<_> = out
                .history
                .into_iter()
                .map(|mut r| {
                    r.times = Default::default();
                    r
                })
                .collect();
            (h, out.params)
        };
        assert_eq!(run(), run(), "{method}");
    }
}

#[test]
fn evaluation_schedule() {
    let (spec, tr, te) = small_sine();
    let p0 = initialize(&spec, Init::default(), 24).unwrap();
    let c = SolverConfig {
        iterations: 7,
        eval_every: 3,
        eta: 0.01,
        ..cfg(Method::Sgd)
    };
    let out = train(&spec, p0, &tr, Some(&te), &c).unwrap();
    let evals: Vec<usize> = out.history.iter().filter(|r| r.is_eval_point()).map(|r| r.iter).collect();
    assert_eq!(evals, vec![3, 6, 7]);
    assert!(out.history[2].j_test.is_some());
}

#[test]
fn full_batch_emsa_reduces_objective() {
    let spec = sine_spec(20);
    let tr = sine_dataset(100, 25).unwrap().lifted(5).unwrap();
    let p0 = initialize(&spec, Init::default(), 26).unwrap();
    let out = train(&spec, p0, &tr, None, &SolverConfig { iterations: 200, eval_every: 200, ..cfg(Method::Emsa) }).unwrap();
    assert_eq!(out.status, Status::Ok);
    assert!(out.history.last().unwrap().j_train.unwrap() < out.initial_train.j);
}

#[test]
fn classification_reports_accuracy() {
    let spec = NetworkSpec::new(
        vec![LayerSpec::dense_projection(4, 3), LayerSpec::residual_dense(3, 0.5), LayerSpec::classifier(3, 2)],
        LossKind::SoftmaxCrossEntropy,
    )
    .unwrap();
    let mut r = rng(27);
    let x = random_matrix(&mut r, 20, 4, 1.0);
    let labels = x.iter_rows().map(|row| usize::from(row[0] > 0.0)).collect();
    let ds = Dataset::new("toy", Normalization::None, Batch::new(x, Targets::classes(labels, 2).unwrap()).unwrap()).unwrap();
    let p0 = initialize(&spec, Init::default(), 28).unwrap();
    let out = train(&spec, p0, &ds, None, &SolverConfig { iterations: 20, eval_every: 20, ..cfg(Method::Emsa) }).unwrap();
    let last = out.history.last().unwrap();
    assert!(last.acc_train.unwrap() >= 0.9, "{last:?}");
}

#[test]
fn invalid_configs_rejected() {
    let (spec, tr, _) = small_sine();
    let p0 = initialize(&spec, Init::default(), 29).unwrap();
    for bad in [
        SolverConfig { rho: -1.0, ..cfg(Method::Emsa) },
        SolverConfig { eval_every: 0, ..cfg(Method::Emsa) },
        SolverConfig { batch_size: BatchSize::Size(1000), ..cfg(Method::Emsa) },
        SolverConfig { momentum: 1.0, ..cfg(Method::Sgd) },
    ] {
        assert!(train(&spec, p0.clone(), &tr, None, &bad).is_err());
    }
}

#[test]
fn batch_size_parsing() {
    assert_eq!("full".parse::<BatchSize>().unwrap(), BatchSize::Full);
    assert_eq!("100".parse::<BatchSize>().unwrap(), BatchSize::Size(100));
    assert!("0".parse::<BatchSize>().is_err());
    assert!("half".parse::<BatchSize>().is_err());
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
}

#[test]
fn initialization() {
    let spec = sine_spec(3);
    let z: ParamStack<f64> = initialize(&spec, Init::Zeros, 0).unwrap();
    assert_eq!(z, ParamStack::zeros(&spec));
    let p: ParamStack<f64> = initialize(&spec, Init::default(), 1).unwrap();
    for l in p.layers() {
        assert!(l[..25].iter().all(|w| w.abs() <= 0.2));
        assert!(l[25..].iter().all(|&b| b == 0.1));
    }
    assert_eq!(p, initialize(&spec, Init::default(), 1).unwrap());
    assert_ne!(p, initialize(&spec, Init::default(), 2).unwrap());
    assert!(initialize::<f64>(&spec, Init::TruncatedNormal { std: 0.0, bias: 0.0 }, 0).is_err());
}

