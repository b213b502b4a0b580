use super::*;
use crate::diagnostics::gradient_check;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::testutil::{random_matrix, rng, uniform_vec};

fn kinds() -> Vec<LayerSpec> {
    vec![
        LayerSpec::residual_dense(5, 0.25),
        LayerSpec::dense_projection(6, 4),
        LayerSpec::classifier(4, 3),
        LayerSpec::residual_conv2d(2, 4, 4, 0.5),
        LayerSpec::conv_projection(2, 3, 4, 4),
    ]
}

fn frob(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.frobenius_dot(b).unwrap()
}

#[test]
fn zero_residual_layer_is_identity() {
    let l = LayerSpec::residual_dense(3, 0.25);
    let x = random_matrix(&mut rng(0), 4, 3, 2.0);
    let y = layer_forward(&l, &x, &vec![0.0; l.param_len()]).unwrap();
    assert_eq!(y, x);
}

#[test]
fn scalar_residual_formula() {
    let l = LayerSpec::residual_dense(1, 0.25);
    let x = Matrix::from_rows(&[[0.5f64]]).unwrap();
    let y = layer_forward(&l, &x, &[1.0, 0.0]).unwrap();
    assert_eq!(y.get(0, 0), 0.5 + 0.25 * 0.5f64.tanh());
}

#[test]
fn dense_forward_matches_straight_line() {
    let l = LayerSpec::residual_dense(5, 0.25);
    let mut r = rng(1);
    for _ in 0..5 {
        let th = uniform_vec(&mut r, l.param_len(), 1.0);
        let x = random_matrix(&mut r, 3, 5, 1.5);
        let y = layer_forward(&l, &x, &th).unwrap();
        for s in 0..3 {
            for i in 0..5 {
                let mut z = th[25 + i];
                for j in 0..5 {
                    z += th[5 * i + j] * x.get(s, j);
                }
                let want = x.get(s, i) + 0.25 * z.tanh();
                assert!((y.get(s, i) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn forward_is_deterministic() {
    for l in kinds() {
        let mut r = rng(2);
        let th = uniform_vec(&mut r, l.param_len(), 0.5);
        let x = random_matrix(&mut r, 3, l.in_dim, 1.0);
        let a = layer_forward(&l, &x, &th).unwrap();
        let b = layer_forward(&l, &x, &th).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}

#[test]
fn shape_and_finiteness_errors() {
    let l = LayerSpec::residual_dense(3, 0.25);
    let x = Matrix::<f64>::zeros(2, 4);
    assert!(layer_forward(&l, &x, &[0.0; 12]).is_err());
    let x = Matrix::<f64>::zeros(2, 3);
    assert!(layer_forward(&l, &x, &[0.0; 5]).is_err());
    let mut x = Matrix::<f64>::zeros(2, 3);
    x.set(1, 2, f64::NAN);
    let err = layer_forward(&l, &x, &[0.0; 12]).unwrap_err();
    assert!(err.is_non_finite());
}

#[test]
fn zero_residual_pullback_is_identity() {
    let l = LayerSpec::residual_dense(4, 0.3);
    let mut r = rng(3);
    let x = random_matrix(&mut r, 2, 4, 1.0);
    let p = random_matrix(&mut r, 2, 4, 1.0);
    let q = layer_pullback_x(&l, &x, &vec![0.0; l.param_len()], &p).unwrap();
    assert_eq!(q, p);
}

#[test]
fn classifier_pullback_of_one_hot_is_weight_row() {
    let l = LayerSpec::classifier(4, 3);
    let mut r = rng(4);
    let th = uniform_vec(&mut r, l.param_len(), 1.0);
    let x = random_matrix(&mut r, 1, 4, 1.0);
    let p = Matrix::from_rows(&[[0.0, 1.0, 0.0]]).unwrap();
    let q = layer_pullback_x(&l, &x, &th, &p).unwrap();
    assert_eq!(q.row(0), &th[4..8]);
}

#[test]
fn zero_costate_gives_zero_parameter_gradient() {
    for l in kinds() {
        let mut r = rng(5);
        let th = uniform_vec(&mut r, l.param_len(), 0.5);
        let x = random_matrix(&mut r, 2, l.in_dim, 1.0);
        let g = layer_grad_theta(&l, &x, &th, &Matrix::zeros(2, l.out_dim)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn parameter_gradient_is_additive_over_samples() {
    for l in kinds() {
        let mut r = rng(6);
        let th = uniform_vec(&mut r, l.param_len(), 0.5);
        let x = random_matrix(&mut r, 2, l.in_dim, 1.0);
        let p = random_matrix(&mut r, 2, l.out_dim, 1.0);
        let both = layer_grad_theta(&l, &x, &th, &p).unwrap();
        let g0 = layer_grad_theta(&l, &x.select_rows(&[0]), &th, &p.select_rows(&[0])).unwrap();
        let g1 = layer_grad_theta(&l, &x.select_rows(&[1]), &th, &p.select_rows(&[1])).unwrap();
        for ((a, b), c) in both.iter().zip(&g0).zip(&g1) {
            assert!((a - (b + c)).abs() < 1e-12);
        }
    }
}

#[test]
fn derivatives_are_linear_in_costate() {
    for l in kinds() {
        let mut r = rng(7);
        let th = uniform_vec(&mut r, l.param_len(), 0.5);
        let x = random_matrix(&mut r, 2, l.in_dim, 1.0);
        let p = random_matrix(&mut r, 2, l.out_dim, 1.0);
        let u = random_matrix(&mut r, 2, l.in_dim, 1.0);
        let alpha = -1.75;
        let pa = p.scale(alpha);
        let lin = Linearization::new(&l, &x, &th).unwrap();
        let q1 = lin.pullback(&p).unwrap().scale(alpha);
        let q2 = lin.pullback(&pa).unwrap();
        assert!(q1.max_abs_diff(&q2) < 1e-12);
        let g1 = lin.grad_theta(&p).unwrap();
        let g2 = lin.grad_theta(&pa).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((alpha * a - b).abs() < 1e-12);
        }
        let m1 = lin.mixed_grad(&p, &u).unwrap();
        let m2 = lin.mixed_grad(&pa, &u).unwrap();
        for (a, b) in m1.iter().zip(&m2) {
            assert!((alpha * a - b).abs() < 1e-12);
        }
    }
}

fn check_layer_derivatives(l: &LayerSpec, seed: u64) {
    let mut r = rng(seed);
    let m = 2;
    let th = uniform_vec(&mut r, l.param_len(), 0.5);
    let x = random_matrix(&mut r, m, l.in_dim, 1.0);
    let p = random_matrix(&mut r, m, l.out_dim, 1.0);
    let u = random_matrix(&mut r, m, l.in_dim, 1.0);
    let lin = Linearization::new(l, &x, &th).unwrap();

    // ∇_x ⟨p, g⟩
    let pull = lin.pullback(&p).unwrap();
    let fx = |xs: &[f64]| -> Result<f64> {
        let xm = Matrix::from_vec(m, l.in_dim, xs.to_vec())?;
        Ok(frob(&p, &layer_forward(l, &xm, &th)?))
    };
    let c = gradient_check(fx, pull.as_slice(), x.as_slice(), 1e-5, 1e-6).unwrap();
    assert!(c.passed, "{:?} pullback: {}", l.kind, c.worst_rel_error);

    // ∇_ϑ ⟨p, g⟩
    let gt = lin.grad_theta(&p).unwrap();
    let ft = |t: &[f64]| -> Result<f64> { Ok(frob(&p, &layer_forward(l, &x, t)?)) };
    let c = gradient_check(ft, &gt, &th, 1e-5, 1e-6).unwrap();
    assert!(c.passed, "{:?} grad_theta: {}", l.kind, c.worst_rel_error);

    // ∇_ϑ ⟨u, J_xᵀ p⟩
    let mg = lin.mixed_grad(&p, &u).unwrap();
    let fm = |t: &[f64]| -> Result<f64> { Ok(frob(&u, &layer_pullback_x(l, &x, t, &p)?)) };
    let c = gradient_check(fm, &mg, &th, 1e-5, 1e-6).unwrap();
    assert!(c.passed, "{:?} mixed: {}", l.kind, c.worst_rel_error);
}

#[test]
fn derivatives_match_finite_differences() {
    for (k, l) in kinds().iter().enumerate() {
        for s in 0..4 {
            check_layer_derivatives(l, 100 * k as u64 + s);
        }
    }
}

#[test]
fn identity_activation_derivatives() {
    let l = LayerSpec::residual_dense(3, 0.4).with_activation(Activation::Identity);
    check_layer_derivatives(&l, 77);
}

#[test]
fn small_step_approaches_identity() {
    // ‖g(x) − x‖ ≤ δ·‖tanh(·)‖ ≤ δ·√d
    let mut r = rng(8);
    let d = 5;
    for delta in [1e-1, 1e-3, 1e-6] {
        let l = LayerSpec::residual_dense(d, delta);
        let th = uniform_vec(&mut r, l.param_len(), 3.0);
        let x = random_matrix(&mut r, 4, d, 2.0);
        let y = layer_forward(&l, &x, &th).unwrap();
        for s in 0..4 {
            let diff: f64 = y
                .row(s)
                .iter()
                .zip(x.row(s))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= delta * (d as f64).sqrt() * (1.0 + 1e-12));
        }
    }
}

#[test]
fn terminal_loss_gradients_match_finite_differences() {
    let mut r = rng(9);
    let reg = NetworkSpec::new(
        vec![LayerSpec::residual_dense(5, 0.25)],
        LossKind::SumSquaredScalarTarget,
    )
    .unwrap();
    let ce = NetworkSpec::new(vec![LayerSpec::classifier(3, 4)], LossKind::SoftmaxCrossEntropy).unwrap();
    for _ in 0..5 {
        let x = random_matrix(&mut r, 1, 5, 1.0);
        let t = Targets::Regression(vec![0.3]);
        let (_, g) = terminal_loss(&reg, &x, &t).unwrap();
        let f = |v: &[f64]| Ok(terminal_loss(&reg, &Matrix::from_vec(1, 5, v.to_vec())?, &t)?.0[0]);
        assert!(gradient_check(f, g.as_slice(), x.as_slice(), 1e-5, 1e-6).unwrap().passed);

        let x = random_matrix(&mut r, 1, 4, 2.0);
        let t = Targets::classes(vec![2], 4).unwrap();
        let (l, g) = terminal_loss(&ce, &x, &t).unwrap();
        assert!(l[0] >= 0.0);
        let f = |v: &[f64]| Ok(terminal_loss(&ce, &Matrix::from_vec(1, 4, v.to_vec())?, &t)?.0[0]);
        assert!(gradient_check(f, g.as_slice(), x.as_slice(), 1e-5, 1e-6).unwrap().passed);
    }
}

#[test]
fn regularizer_gradient_matches_finite_differences() {
    let th = uniform_vec(&mut rng(10), 12, 2.0);
    let (_, g) = regularizer(&th, 0.7).unwrap();
    let f = |t: &[f64]| Ok(regularizer(t, 0.7)?.0);
    let c = gradient_check(f, &g, &th, 1e-5, 1e-8).unwrap();
    assert!(c.passed, "{}", c.worst_rel_error);
}

#[test]
fn generic_over_f32() {
    let l = LayerSpec::residual_dense(2, 0.5);
    let x = Matrix::from_rows(&[[0.5f32, -0.5]]).unwrap();
    let y = layer_forward(&l, &x, &[0.1f32, 0.2, 0.3, 0.4, 0.0, 0.0]).unwrap();
    let y64 = layer_forward(&l, &x.cast::<f64>(), &[0.1, 0.2, 0.3, 0.4, 0.0, 0.0]).unwrap();
    assert!((y.get(0, 0) as f64 - y64.get(0, 0)).abs() < 1e-6);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pullback_linear_in_costate(seed in 0u64..1000, alpha in -3.0f64..3.0) {
            let l = LayerSpec::residual_dense(3, 0.25);
            let mut r = rng(seed);
            let th = uniform_vec(&mut r, l.param_len(), 1.0);
            let x = random_matrix(&mut r, 2, 3, 1.0);
            let p = random_matrix(&mut r, 2, 3, 1.0);
            let a = layer_pullback_x(&l, &x, &th, &p).unwrap().scale(alpha);
            let b = layer_pullback_x(&l, &x, &th, &p.scale(alpha)).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }
}
