use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::batch::Targets;
use super::spec::{LossKind, NetworkSpec};

/// Terminal loss `Φ(x_N)` and its gradient, per sample.
///
/// Returns the loss of each row and a matrix whose rows are `∇Φ` at the
/// corresponding row of `x_n`.
pub fn terminal_loss<T: Scalar>(
    spec: &NetworkSpec,
    x_n: &Matrix<T>,
    targets: &Targets<T>,
) -> Result<(Vec<T>, Matrix<T>)> {
    check_len("terminal state width", spec.output_dim(), x_n.cols())?;
    check_len("targets", x_n.rows(), targets.len())?;
    let mut grad = Matrix::zeros(x_n.rows(), x_n.cols());
    let mut loss = Vec::with_capacity(x_n.rows());
    match (spec.loss, targets) {
        (LossKind::SumSquaredScalarTarget, Targets::Regression(y)) => {
            for (i, &yi) in y.iter().enumerate() {
                let r = x_n.row(i).iter().copied().sum::<T>() - yi;
                loss.push(r * r);
                grad.row_mut(i).iter_mut().for_each(|g| *g = T::two() * r);
            }
        }
        (
            LossKind::SoftmaxCrossEntropy,
            Targets::Classes {
                labels,
                num_classes,
            },
        ) => {
            check_len("class count", x_n.cols(), *num_classes)?;
            for (i, &label) in labels.iter().enumerate() {
                let z = x_n.row(i);
                let zmax = z.iter().copied().fold(T::neg_infinity(), T::max);
                let sum: T = z.iter().map(|&v| (v - zmax).exp()).sum();
                let lse = zmax + sum.ln();
                loss.push(lse - z[label]);
                let g = grad.row_mut(i);
                for (gk, &zk) in g.iter_mut().zip(z) {
                    *gk = (zk - lse).exp();
                }
                g[label] -= T::one();
            }
        }
        (kind, _) => {
            return Err(Error::Target(format!(
                "{kind:?} loss given incompatible targets"
            )))
        }
    }
    Ok((loss, grad))
}

/// Running cost `L(ϑ) = weight·‖ϑ‖²` and its gradient `2·weight·ϑ`.
pub fn regularizer<T: Scalar>(theta: &[T], weight: f64) -> Result<(T, Vec<T>)> {
    if !(weight >= 0.0) {
        return Err(Error::Invalid(format!(
            "regularizer weight must be nonnegative, got {weight}"
        )));
    }
    let w = T::of(weight);
    if weight == 0.0 {
        return Ok((T::zero(), vec![T::zero(); theta.len()]));
    }
    let value = w * crate::linalg::sq_norm(theta);
    let grad = theta.iter().map(|&t| T::two() * w * t).collect();
    Ok((value, grad))
}
