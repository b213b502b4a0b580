use super::*;
use crate::dynamics::{regularizer, LayerSpec, LossKind, NetworkSpec, ParamStack, Targets};
use crate::hamiltonian::{hamiltonian, LayerContext};
use crate::linalg::Matrix;
use crate::propagation::{forward_propagate, sweep, CostateTrajectory};
use crate::solvers::Method;
use crate::testutil::{random_matrix, random_params, rng};

fn sine_like(depth: usize) -> NetworkSpec {
    NetworkSpec::residual_stack(5, depth, 0.25, LossKind::SumSquaredScalarTarget).unwrap()
}

#[test]
fn perfect_fit_has_zero_loss() {
    let spec = sine_like(3);
    let x = random_matrix(&mut rng(1), 4, 5, 1.0);
    let y = x.iter_rows().map(|r| r.iter().sum()).collect();
    let j = total_loss(&spec, &ParamStack::zeros(&spec), &x, &Targets::Regression(y)).unwrap();
    assert_eq!(j, 0.0);
}

#[test]
fn uniform_logits_cost_ln_ten() {
    let spec = NetworkSpec::new(vec![LayerSpec::classifier(3, 10)], LossKind::SoftmaxCrossEntropy).unwrap();
    let x = random_matrix(&mut rng(2), 5, 3, 1.0);
    let t = Targets::classes(vec![0, 3, 9, 2, 2], 10).unwrap();
    let j = total_loss(&spec, &ParamStack::zeros(&spec), &x, &t).unwrap();
    assert!((j - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn total_loss_term_by_term() {
    let spec = sine_like(4).with_regularizer(0.3).unwrap();
    let mut r = rng(3);
    let params = random_params(&spec, &mut r, 0.5);
    let x = random_matrix(&mut r, 6, 5, 1.0);
    let y: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
    let t = Targets::Regression(y.clone());
    let xn = forward_propagate(&spec, &params, &x).unwrap().terminal().clone();
    let phi: f64 = (0..6).map(|i| (xn.row(i).iter().sum::<f64>() - y[i]).powi(2)).sum::<f64>() / 6.0;
    let reg: f64 = params.layers().iter().map(|l| 0.25 * 0.3 * l.iter().map(|v| v * v).sum::<f64>()).sum();
    assert!((total_loss(&spec, &params, &x, &t).unwrap() - (phi + reg)).abs() < 1e-12);
    let s = sweep(&spec, &params, &x, &t).unwrap();
    assert!((total_loss_from_sweep(&spec, &params, &s).unwrap() - (phi + reg)).abs() < 1e-12);
}

#[test]
fn accuracy_ties_go_low() {
    let logits = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 2.0, 2.0], [0.5, 0.1, 0.9]]).unwrap();
    assert_eq!(accuracy(&logits, &[0, 1, 2]).unwrap(), 1.0);
    assert_eq!(accuracy(&logits, &[1, 2, 0]).unwrap(), 0.0);
    assert!(accuracy(&logits, &[0]).is_err());
}

fn two_layer() -> (NetworkSpec, ParamStack<f64>, ParamStack<f64>, crate::propagation::Sweep<f64>) {
    let spec = sine_like(2).with_regularizer(0.1).unwrap();
    let mut r = rng(4);
    let a = random_params(&spec, &mut r, 0.5);
    let b = random_params(&spec, &mut r, 0.5);
    let x = random_matrix(&mut r, 3, 5, 1.0);
    let s = sweep(&spec, &a, &x, &Targets::Regression(vec![0.3, -0.2, 0.9])).unwrap();
    (spec, a, b, s)
}

#[test]
fn unchanged_parameters_change_nothing() {
    let (spec, a, _, s) = two_layer();
    let ctxs = LayerContext::all_from_sweep(&spec, &s, 0.0).unwrap();
    assert_eq!(mu_k(&ctxs, &a, &a).unwrap(), 0.0);
    assert_eq!(feasibility_errors(&ctxs, &a, &a).unwrap(), (0.0, 0.0));
}

#[test]
fn mu_is_sum_of_layer_changes() {
    let (spec, a, b, s) = two_layer();
    let ctxs = LayerContext::all_from_sweep(&spec, &s, 0.0).unwrap();
    let want: f64 = (0..2)
        .map(|n| hamiltonian(&ctxs[n], b.layer(n)).unwrap() - hamiltonian(&ctxs[n], a.layer(n)).unwrap())
        .sum();
    assert!((mu_k(&ctxs, &a, &b).unwrap() - want).abs() < 1e-12);
}

#[test]
fn feasibility_matches_direct_norms() {
    let spec = sine_like(1);
    let mut r = rng(5);
    let a = random_params(&spec, &mut r, 0.5);
    let b = random_params(&spec, &mut r, 0.5);
    let x = random_matrix(&mut r, 2, 5, 1.0);
    let s = sweep(&spec, &a, &x, &Targets::Regression(vec![0.3, -0.2])).unwrap();
    let ctxs = LayerContext::all_from_sweep(&spec, &s, 0.0).unwrap();
    let (fs, fc) = feasibility_errors(&ctxs, &a, &b).unwrap();
    // straight-line g and ∇_x H for both parameter sets
    let eval = |th: &[f64], i: usize| {
        let xi = x.row(i);
        let p = s.costates.costate(1).row(i);
        let mut g = [0.0; 5];
        let mut hx = [0.0; 5];
        let mut d = [0.0; 5];
        for k in 0..5 {
            let z = th[25 + k] + (0..5).map(|j| th[5 * k + j] * xi[j]).sum::<f64>();
            g[k] = xi[k] + 0.25 * z.tanh();
            d[k] = 1.0 - z.tanh().powi(2);
        }
        for j in 0..5 {
            hx[j] = p[j] + 0.25 * (0..5).map(|k| th[5 * k + j] * d[k] * p[k]).sum::<f64>();
        }
        (g, hx)
    };
    let (mut ws, mut wc) = (0.0, 0.0);
    for i in 0..2 {
        let (ga, ha) = eval(a.layer(0), i);
        let (gb, hb) = eval(b.layer(0), i);
        ws += (0..5).map(|k| (ga[k] - gb[k]).powi(2)).sum::<f64>();
        wc += (0..5).map(|k| (ha[k] - hb[k]).powi(2)).sum::<f64>();
    }
    assert!((fs - ws).abs() < 1e-12 && (fc - wc).abs() < 1e-12);
    assert!(fs > 0.0 && fc > 0.0);
}

fn report(iter: usize, dj: f64, mu: f64, fs: f64, fc: f64) -> IterationReport {
    IterationReport {
        iter,
        method: Method::Emsa,
        batch_size: 1,
        j_before: 1.0,
        delta_j: dj,
        mu_k: mu,
        feas_state: fs,
        feas_costate: fc,
        ..IterationReport::default()
    }
}

#[test]
fn lemma1_vanishing_errors() {
    let ok = lemma1_audit(&[report(1, -0.5, 0.5, 0.0, 0.0), report(2, -0.7, 0.5, 0.0, 0.0)]).unwrap();
    assert!(ok.passed());
    assert_eq!(ok.max_c_min, None);
    let bad = lemma1_audit(&[report(1, -0.4, 0.5, 0.0, 0.0)]).unwrap();
    assert_eq!(bad.flags, vec![1]);
}

#[test]
fn lemma1_constant_algebra() {
    let a = lemma1_audit(&[report(1, -0.5, 0.5, 0.1, 0.2), report(2, 0.1, 0.2, 0.2, 0.1)]).unwrap();
    assert_eq!(a.rows[0].c_min, Some(0.0));
    assert!((a.rows[1].c_min.unwrap() - 1.0).abs() < 1e-12);
    assert!((a.max_c_min.unwrap() - 1.0).abs() < 1e-12);
    assert!(a.passed());
}

#[test]
fn lemma1_flags_non_finite_and_skips_failures() {
    let mut failed = report(2, f64::NAN, 0.0, 0.0, 0.0);
    failed.status = Status::Failed;
    let a = lemma1_audit(&[report(1, f64::NAN, 0.1, 0.1, 0.1), failed]).unwrap();
    assert_eq!(a.flags, vec![1]);
    assert_eq!(a.rows.len(), 1);
    assert!(lemma1_audit(&[]).is_err());
}

#[test]
fn zero_weights_bound_is_tight() {
    let spec = sine_like(6);
    let params = ParamStack::zeros(&spec);
    let x = random_matrix(&mut rng(6), 3, 5, 1.0);
    let t = Targets::Regression(vec![0.1, 0.2, 0.3]);
    let a = costate_norm_audit(&spec, &params, &x, &t).unwrap();
    assert!(a.passed);
    assert!((a.worst_ratio - 1.0).abs() < 1e-12);
    assert!(a.min_slack.iter().all(|s| s.abs() < 1e-12));
}

#[test]
fn random_nets_satisfy_bound() {
    let spec = sine_like(20);
    let mut r = rng(7);
    for _ in 0..20 {
        let params = random_params(&spec, &mut r, 1.0);
        let x = random_matrix(&mut r, 4, 5, 2.0);
        let t = Targets::Regression(vec![0.5, -0.5, 0.0, 1.0]);
        let a = costate_norm_audit(&spec, &params, &x, &t).unwrap();
        assert!(a.passed && a.worst_ratio <= 1.0, "{a:?}");
    }
}

#[test]
fn inflated_costates_fail_bound() {
    let spec = sine_like(5);
    let mut r = rng(8);
    let params = random_params(&spec, &mut r, 0.3);
    let x = random_matrix(&mut r, 3, 5, 1.0);
    let t = Targets::Regression(vec![0.5, -0.5, 0.0]);
    let s = sweep(&spec, &params, &x, &t).unwrap();
    let bad = CostateTrajectory::from_costates(s.costates.costates().iter().map(|p| p.scale(10.0)).collect()).unwrap();
    let a = costate_norm_audit_on(&spec, &params, &s.states, &bad, &t).unwrap();
    assert!(!a.passed);
    assert!(a.worst_ratio > 1.0);
}

#[test]
fn conv_layers_not_audited() {
    let spec = NetworkSpec::new(
        vec![LayerSpec::residual_conv2d(1, 2, 2, 0.5), LayerSpec::classifier(4, 2)],
        LossKind::SoftmaxCrossEntropy,
    )
    .unwrap();
    let params = ParamStack::<f64>::zeros(&spec);
    let x = Matrix::zeros(1, 4);
    let t = Targets::classes(vec![1], 2).unwrap();
    assert!(costate_norm_audit(&spec, &params, &x, &t).is_err());
}

#[test]
fn regularization_term_weights_by_delta() {
    let spec = sine_like(2).with_regularizer(2.0).unwrap();
    let params = random_params(&spec, &mut rng(9), 0.5);
    let want: f64 = params.layers().iter().map(|l| 0.25 * regularizer(l, 2.0).unwrap().0).sum();
    assert!((regularization_term(&spec, &params).unwrap() - want).abs() < 1e-12);
}
