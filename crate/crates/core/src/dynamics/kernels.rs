//! Single-sample linear maps behind the layers: the weight operator `K(W)`,
//! its transpose in `x`, and its transpose in `W`. Every layer kind is
//! `z = K(W)·x + b` followed by an activation, optional pooling and an
//! optional residual sum, so these three products are all the derivatives
//! need.

use crate::linalg::{axpy, dot};
use crate::scalar::Scalar;

use super::spec::ConvShape;

#[derive(Clone, Copy, Debug)]
pub(crate) enum LinearOp {
    Dense { in_dim: usize, out_dim: usize },
    Conv(ConvShape),
}

impl LinearOp {
    /// `z = K(W)·x`, overwriting `z`.
    pub(crate) fn apply<T: Scalar>(&self, w: &[T], x: &[T], z: &mut [T]) {
        match *self {
            LinearOp::Dense { in_dim, .. } => {
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi = dot(&w[i * in_dim..(i + 1) * in_dim], x);
                }
            }
            LinearOp::Conv(s) => conv_forward(&s, w, x, z),
        }
    }

    /// `acc += K(W)ᵀ·c`
    pub(crate) fn apply_transpose<T: Scalar>(&self, w: &[T], c: &[T], acc: &mut [T]) {
        match *self {
            LinearOp::Dense { in_dim, .. } => {
                for (i, &ci) in c.iter().enumerate() {
                    if ci != T::zero() {
                        axpy(ci, &w[i * in_dim..(i + 1) * in_dim], acc);
                    }
                }
            }
            LinearOp::Conv(s) => conv_transpose(&s, w, c, acc),
        }
    }

    /// `dw += ∂⟨c, K(W)·x⟩/∂W`, which is `c xᵀ` for dense maps.
    pub(crate) fn weight_grad<T: Scalar>(&self, x: &[T], c: &[T], dw: &mut [T]) {
        match *self {
            LinearOp::Dense { in_dim, .. } => {
                for (i, &ci) in c.iter().enumerate() {
                    if ci != T::zero() {
                        axpy(ci, x, &mut dw[i * in_dim..(i + 1) * in_dim]);
                    }
                }
            }
            LinearOp::Conv(s) => conv_weight_grad(&s, x, c, dw),
        }
    }

    /// Index of the bias feeding pre-activation entry `i`.
    #[inline]
    pub(crate) fn bias_index(&self, i: usize) -> usize {
        match *self {
            LinearOp::Dense { .. } => i,
            LinearOp::Conv(s) => i / (s.height * s.width),
        }
    }

    pub(crate) fn weight_len(&self) -> usize {
        match *self {
            LinearOp::Dense { in_dim, out_dim } => in_dim * out_dim,
            LinearOp::Conv(s) => s.weight_len(),
        }
    }
}

/// Iterates the valid `(input offset, output offset)` pairs of a same-padded
/// stride-1 correlation for one kernel tap `(ky, kx)` within one channel pair.
#[inline]
fn for_each_tap(
    s: &ConvShape,
    ky: usize,
    kx: usize,
    mut f: impl FnMut(usize, usize),
) {
    let pad = s.kernel / 2;
    let (h, w) = (s.height as isize, s.width as isize);
    let dy = ky as isize - pad as isize;
    let dx = kx as isize - pad as isize;
    let y0 = (-dy).max(0);
    let y1 = (h - dy).min(h);
    let x0 = (-dx).max(0);
    let x1 = (w - dx).min(w);
    for y in y0..y1 {
        let out_row = (y * w) as usize;
        let in_row = ((y + dy) * w) as usize;
        for x in x0..x1 {
            f((in_row as isize + x + dx) as usize, out_row + x as usize);
        }
    }
}

fn conv_forward<T: Scalar>(s: &ConvShape, w: &[T], x: &[T], z: &mut [T]) {
    let hw = s.height * s.width;
    let kk = s.kernel * s.kernel;
    z.iter_mut().for_each(|v| *v = T::zero());
    for o in 0..s.out_channels {
        let zo = &mut z[o * hw..(o + 1) * hw];
        for ic in 0..s.in_channels {
            let xi = &x[ic * hw..(ic + 1) * hw];
            let wk = &w[(o * s.in_channels + ic) * kk..(o * s.in_channels + ic + 1) * kk];
            for ky in 0..s.kernel {
                for kx in 0..s.kernel {
                    let wv = wk[ky * s.kernel + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for_each_tap(s, ky, kx, |src, dst| zo[dst] += wv * xi[src]);
                }
            }
        }
    }
}

fn conv_transpose<T: Scalar>(s: &ConvShape, w: &[T], c: &[T], acc: &mut [T]) {
    let hw = s.height * s.width;
    let kk = s.kernel * s.kernel;
    for o in 0..s.out_channels {
        let co = &c[o * hw..(o + 1) * hw];
        for ic in 0..s.in_channels {
            let ai = &mut acc[ic * hw..(ic + 1) * hw];
            let wk = &w[(o * s.in_channels + ic) * kk..(o * s.in_channels + ic + 1) * kk];
            for ky in 0..s.kernel {
                for kx in 0..s.kernel {
                    let wv = wk[ky * s.kernel + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for_each_tap(s, ky, kx, |src, dst| ai[src] += wv * co[dst]);
                }
            }
        }
    }
}

fn conv_weight_grad<T: Scalar>(s: &ConvShape, x: &[T], c: &[T], dw: &mut [T]) {
    let hw = s.height * s.width;
    let kk = s.kernel * s.kernel;
    for o in 0..s.out_channels {
        let co = &c[o * hw..(o + 1) * hw];
        if co.iter().all(|v| v.is_zero()) {
            continue;
        }
        for ic in 0..s.in_channels {
            let xi = &x[ic * hw..(ic + 1) * hw];
            let base = (o * s.in_channels + ic) * kk;
            for ky in 0..s.kernel {
                for kx in 0..s.kernel {
                    let mut acc = T::zero();
                    for_each_tap(s, ky, kx, |src, dst| acc += co[dst] * xi[src]);
                    dw[base + ky * s.kernel + kx] += acc;
                }
            }
        }
    }
}

/// 2×2 max-pool with stride 2 over `channels × h × w`, flooring odd sizes.
/// Writes the pooled values and, per pooled entry, the flat index of the
/// winner. Ties go to the first position in row-major window order.
pub(crate) fn max_pool2<T: Scalar>(
    s: &[T],
    channels: usize,
    h: usize,
    w: usize,
    out: &mut [T],
    idx: &mut [usize],
) {
    let (ph, pw) = (h / 2, w / 2);
    for c in 0..channels {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = c * h * w + (2 * py) * w + 2 * px;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let k = c * h * w + (2 * py + dy) * w + 2 * px + dx;
                        if s[k] > s[best] {
                            best = k;
                        }
                    }
                }
                let o = c * ph * pw + py * pw + px;
                out[o] = s[best];
                idx[o] = best;
            }
        }
    }
}
