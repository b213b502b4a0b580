//! Layer transition maps `g_n(x, ϑ)` and their exact first derivatives.
//!
//! Every layer kind has the form
//!
//! ```text
//! z = K(W)·x + b,   s = σ(z),   y = pool(s) or s,   g = [x +] δ·y
//! ```
//!
//! (`δ = 1` and no residual term for projections and classifiers). A
//! [`Linearization`] caches `z`, the pooling winners and `g` for one batch
//! so that the vector-Jacobian products in `x` and `ϑ`, and the mixed
//! derivative `∇_ϑ⟨p, J_x u⟩` used by the costate penalty, reuse them.

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::kernels::{max_pool2, LinearOp};
use super::spec::{Activation, LayerSpec};

pub struct Linearization<'a, T> {
    spec: &'a LayerSpec,
    theta: &'a [T],
    x: &'a Matrix<T>,
    op: LinearOp,
    act: Activation,
    delta: T,
    pre: Matrix<T>,
    out: Matrix<T>,
    /// Per sample, per pooled output: flat index of the winning pre-activation.
    pool_idx: Vec<usize>,
}

fn linear_op(spec: &LayerSpec) -> LinearOp {
    match spec.conv {
        Some(c) => LinearOp::Conv(c),
        None => LinearOp::Dense {
            in_dim: spec.in_dim,
            out_dim: spec.out_dim,
        },
    }
}

impl<'a, T: Scalar> Linearization<'a, T> {
    pub fn new(spec: &'a LayerSpec, x: &'a Matrix<T>, theta: &'a [T]) -> Result<Self> {
        check_len("layer input width", spec.in_dim, x.cols())?;
        check_len("layer parameters", spec.param_len(), theta.len())?;
        if !x.is_finite() {
            return Err(Error::NonFinite("layer input"));
        }
        let op = linear_op(spec);
        let act = spec.effective_activation();
        let delta = T::of(spec.effective_delta());
        let residual = spec.kind.is_residual();
        let pool = spec.conv.filter(|c| c.pool);
        let (w, b) = theta.split_at(op.weight_len());

        let m = x.rows();
        let zl = spec.preact_len();
        let mut pre = Matrix::zeros(m, zl);
        let mut out = Matrix::zeros(m, spec.out_dim);
        let mut pool_idx = if pool.is_some() {
            vec![0; m * spec.out_dim]
        } else {
            Vec::new()
        };
        let mut s = vec![T::zero(); zl];
        for i in 0..m {
            let xi = x.row(i);
            let zi = pre.row_mut(i);
            op.apply(w, xi, zi);
            for (k, zk) in zi.iter_mut().enumerate() {
                *zk += b[op.bias_index(k)];
            }
            let oi = out.row_mut(i);
            if let Some(c) = pool {
                for (sk, &zk) in s.iter_mut().zip(zi.iter()) {
                    *sk = act.eval(zk);
                }
                let idx = &mut pool_idx[i * spec.out_dim..(i + 1) * spec.out_dim];
                max_pool2(&s, c.out_channels, c.height, c.width, oi, idx);
            } else {
                for (ok, &zk) in oi.iter_mut().zip(zi.iter()) {
                    *ok = act.eval(zk);
                }
            }
            if residual {
                for (ok, &xk) in oi.iter_mut().zip(xi) {
                    *ok = xk + delta * *ok;
                }
            } else if delta != T::one() {
                oi.iter_mut().for_each(|ok| *ok *= delta);
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("layer output"));
        }
        Ok(Self {
            spec,
            theta,
            x,
            op,
            act,
            delta,
            pre,
            out,
            pool_idx,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        self.spec
    }

    /// `g_n(x, ϑ)` for every sample.
    pub fn output(&self) -> &Matrix<T> {
        &self.out
    }

    pub fn into_output(self) -> Matrix<T> {
        self.out
    }

    fn check_costate(&self, p: &Matrix<T>) -> Result<()> {
        p.check_shape("costate batch", self.x.rows(), self.spec.out_dim)
    }

    /// Routes an output-space costate row into pre-activation space, scaled
    /// by δ: pooled layers scatter each entry to its winner.
    fn route(&self, i: usize, p: &[T], buf: &mut [T]) {
        if self.pool_idx.is_empty() {
            for (b, &v) in buf.iter_mut().zip(p) {
                *b = self.delta * v;
            }
        } else {
            buf.iter_mut().for_each(|b| *b = T::zero());
            let idx = &self.pool_idx[i * self.spec.out_dim..(i + 1) * self.spec.out_dim];
            for (&k, &v) in idx.iter().zip(p) {
                buf[k] += self.delta * v;
            }
        }
    }

    /// `∇_x ⟨p, g_n(x, ϑ)⟩ = J_xᵀ p` per sample.
    pub fn pullback(&self, p: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_costate(p)?;
        let (w, _) = self.theta.split_at(self.op.weight_len());
        let residual = self.spec.kind.is_residual();
        let mut res = Matrix::zeros(p.rows(), self.spec.in_dim);
        let mut c = vec![T::zero(); self.spec.preact_len()];
        for i in 0..p.rows() {
            self.route(i, p.row(i), &mut c);
            for (ck, &zk) in c.iter_mut().zip(self.pre.row(i)) {
                *ck *= self.act.derivs(zk).1;
            }
            let ri = res.row_mut(i);
            if residual {
                ri.copy_from_slice(p.row(i));
            }
            self.op.apply_transpose(w, &c, ri);
        }
        Ok(res)
    }

    /// `∇_ϑ Σ_samples ⟨p, g_n(x, ϑ)⟩ = Σ J_ϑᵀ p`.
    pub fn grad_theta(&self, p: &Matrix<T>) -> Result<Vec<T>> {
        self.check_costate(p)?;
        let wl = self.op.weight_len();
        let mut grad = vec![T::zero(); self.spec.param_len()];
        let mut c = vec![T::zero(); self.spec.preact_len()];
        for i in 0..p.rows() {
            self.route(i, p.row(i), &mut c);
            for (ck, &zk) in c.iter_mut().zip(self.pre.row(i)) {
                *ck *= self.act.derivs(zk).1;
            }
            self.accumulate(self.x.row(i), &c, &mut grad, wl);
        }
        Ok(grad)
    }

    fn accumulate(&self, x: &[T], c: &[T], grad: &mut [T], wl: usize) {
        let (dw, db) = grad.split_at_mut(wl);
        self.op.weight_grad(x, c, dw);
        for (k, &ck) in c.iter().enumerate() {
            db[self.op.bias_index(k)] += ck;
        }
    }

    /// Mixed second derivative `∇_ϑ Σ_samples ⟨p, J_x(x, ϑ)·u⟩` with `p` and
    /// `u` held fixed. This is the parameter gradient of `⟨u, ∇_x⟨p, g⟩⟩`.
    pub fn mixed_grad(&self, p: &Matrix<T>, u: &Matrix<T>) -> Result<Vec<T>> {
        self.check_costate(p)?;
        u.check_shape("tangent batch", self.x.rows(), self.spec.in_dim)?;
        let wl = self.op.weight_len();
        let (w, _) = self.theta.split_at(wl);
        let zl = self.spec.preact_len();
        let mut grad = vec![T::zero(); self.spec.param_len()];
        let mut q = vec![T::zero(); zl];
        let mut ku = vec![T::zero(); zl];
        let mut a = vec![T::zero(); zl];
        let mut c = vec![T::zero(); zl];
        for i in 0..p.rows() {
            // ⟨p, J_x u⟩ = ⟨q ⊙ σ'(z), K(W)u⟩ (+ ⟨p, u⟩ for residual layers,
            // which is independent of ϑ), with q = δ·route(p)
            self.route(i, p.row(i), &mut q);
            self.op.apply(w, u.row(i), &mut ku);
            for k in 0..zl {
                let (_, d1, d2) = self.act.derivs(self.pre.get(i, k));
                a[k] = q[k] * d2 * ku[k];
                c[k] = q[k] * d1;
            }
            // d/dz contribution (through z = K(W)x + b) and the direct
            // dependence of K(W)u on W
            self.accumulate(self.x.row(i), &a, &mut grad, wl);
            self.op.weight_grad(u.row(i), &c, &mut grad[..wl]);
        }
        Ok(grad)
    }
}

/// `g_n(x, ϑ)` for a batch.
pub fn layer_forward<T: Scalar>(spec: &LayerSpec, x: &Matrix<T>, theta: &[T]) -> Result<Matrix<T>> {
    Ok(Linearization::new(spec, x, theta)?.into_output())
}

/// `∇_x (p·g_n(x, ϑ))` per sample.
pub fn layer_pullback_x<T: Scalar>(
    spec: &LayerSpec,
    x: &Matrix<T>,
    theta: &[T],
    p: &Matrix<T>,
) -> Result<Matrix<T>> {
    Linearization::new(spec, x, theta)?.pullback(p)
}

/// `∇_ϑ (p·g_n(x, ϑ))`, summed over the batch.
pub fn layer_grad_theta<T: Scalar>(
    spec: &LayerSpec,
    x: &Matrix<T>,
    theta: &[T],
    p: &Matrix<T>,
) -> Result<Vec<T>> {
    Linearization::new(spec, x, theta)?.grad_theta(p)
}

/// `∇_ϑ Σ ⟨p, J_x(x, ϑ)·u⟩`, summed over the batch.
pub fn layer_mixed_grad<T: Scalar>(
    spec: &LayerSpec,
    x: &Matrix<T>,
    theta: &[T],
    p: &Matrix<T>,
    u: &Matrix<T>,
) -> Result<Vec<T>> {
    Linearization::new(spec, x, theta)?.mixed_grad(p, u)
}
