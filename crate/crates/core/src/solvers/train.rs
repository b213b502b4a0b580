use std::borrow::Cow;
use std::time::Instant;

use crate::data::{Dataset, MinibatchSampler};
use crate::diagnostics::{evaluate, Evaluation, IterationReport, Status};
use crate::dynamics::{Batch, NetworkSpec, ParamStack};
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

use super::config::{BatchSize, SolverConfig};
use super::iteration::{iteration, BaselineState};

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub history: Vec<IterationReport>,
    pub params: ParamStack<T>,
    pub initial_train: Evaluation,
    pub initial_test: Option<Evaluation>,
    /// Status of the last iteration; anything but `Ok` ended the run early.
    pub status: Status,
}

/// Runs `config.iterations` outer iterations from `init`.
///
/// Full-batch runs use the training set in stored order; otherwise each
/// epoch is a fresh seeded shuffle. Train (and test) objectives are
/// evaluated every `eval_every` iterations, after the last one, and after
/// any iteration that ends the run.
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    init: ParamStack<T>,
    train_set: &Dataset<T>,
    test_set: Option<&Dataset<T>>,
    config: &SolverConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    init.check(spec)?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    check_len("training input width", spec.input_dim(), train_set.input_dim())?;
    if let Some(t) = test_set {
        check_len("test input width", spec.input_dim(), t.input_dim())?;
    }
    let mut sampler = match config.batch_size {
        BatchSize::Full => None,
        BatchSize::Size(b) => Some(MinibatchSampler::new(train_set.len(), b, config.seed)?),
    };

    let eval = |p: &ParamStack<T>| -> Result<(Evaluation, Option<Evaluation>)> {
        let tr = evaluate(spec, p, train_set, config.eval_chunk)?;
        let te = test_set.map(|t| evaluate(spec, p, t, config.eval_chunk)).transpose()?;
        Ok((tr, te))
    };
    let (initial_train, initial_test) = eval(&init)?;

    let mut params = init;
    let mut state = BaselineState::default();
    let mut history = Vec::with_capacity(config.iterations);
    let mut status = Status::Ok;
    for k in 1..=config.iterations {
        let batch: Cow<'_, Batch<T>> = match sampler.as_mut() {
            None => Cow::Borrowed(&train_set.samples),
            Some(s) => Cow::Owned(train_set.select(s.next_indices())),
        };
        let step = iteration(spec, &params, &batch, config, &mut state);
        let mut report = step.report;
        report.iter = k;
        params = step.params;
        status = report.status;

        if k % config.eval_every == 0 || k == config.iterations || status != Status::Ok {
            let t = Instant::now();
            if let Ok((tr, te)) = eval(&params) {
                report.j_train = Some(tr.j);
                report.acc_train = tr.accuracy;
                report.j_test = te.map(|e| e.j);
                report.acc_test = te.and_then(|e| e.accuracy);
            }
            report.times.evaluate = t.elapsed().as_secs_f64();
        }
        history.push(report);
        if status != Status::Ok {
            break;
        }
    }
    Ok(TrainOutcome {
        history,
        params,
        initial_train,
        initial_test,
        status,
    })
}
