use crate::data::Dataset;
use crate::dynamics::{regularizer, terminal_loss, NetworkSpec, ParamStack, Targets};
use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::propagation::{forward_terminal, Sweep};
use crate::scalar::Scalar;

/// `Σ_n δ_n L(ϑ_n)`
pub fn regularization_term<T: Scalar>(spec: &NetworkSpec, params: &ParamStack<T>) -> Result<T> {
    params.check(spec)?;
    let mut total = T::zero();
    for (layer, theta) in spec.layers.iter().zip(params.layers()) {
        total += T::of(layer.effective_delta()) * regularizer(theta, spec.regularizer_weight)?.0;
    }
    Ok(total)
}

/// `J = mean_i Φ(x_N^i) + Σ_n δ_n L(ϑ_n)` on `batch`.
pub fn total_loss<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    inputs: &Matrix<T>,
    targets: &Targets<T>,
) -> Result<T> {
    let (losses, _) = terminal_loss(spec, &forward_terminal(spec, params, inputs)?, targets)?;
    mean_plus(spec, params, &losses)
}

/// `J` from the losses already computed by a sweep at `params`.
pub fn total_loss_from_sweep<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    sweep: &Sweep<T>,
) -> Result<T> {
    mean_plus(spec, params, &sweep.losses)
}

fn mean_plus<T: Scalar>(spec: &NetworkSpec, params: &ParamStack<T>, losses: &[T]) -> Result<T> {
    if losses.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mean = losses.iter().copied().sum::<T>() / T::of(losses.len() as f64);
    Ok(mean + regularization_term(spec, params)?)
}

/// Fraction of rows whose arg-max logit equals the label; ties go to the
/// lower class index.
pub fn accuracy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    check_len("labels", logits.rows(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::Empty("accuracy batch"));
    }
    Ok(hit_count(logits, labels) as f64 / labels.len() as f64)
}

fn hit_count<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> usize {
    logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count()
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Objective and (for classification) accuracy over a whole dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub j: f64,
    pub accuracy: Option<f64>,
}

/// Evaluates `J` and accuracy in chunks of at most `chunk` samples so that
/// only one chunk's activations are alive at a time.
pub fn evaluate<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParamStack<T>,
    data: &Dataset<T>,
    chunk: usize,
) -> Result<Evaluation> {
    let n = data.len();
    let chunk = chunk.max(1);
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    for start in (0..n).step_by(chunk) {
        let idx: Vec<usize> = (start..(start + chunk).min(n)).collect();
        let b = data.select(&idx);
        let out = forward_terminal(spec, params, &b.inputs)?;
        let (losses, _) = terminal_loss(spec, &out, &b.targets)?;
        loss_sum += losses.iter().map(|v| v.as_f64()).sum::<f64>();
        if let Targets::Classes { labels, .. } = &b.targets {
            hits += hit_count(&out, labels);
        }
    }
    let j = loss_sum / n as f64 + regularization_term(spec, params)?.as_f64();
    let accuracy = data.num_classes().map(|_| hits as f64 / n as f64);
    Ok(Evaluation { j, accuracy })
}
