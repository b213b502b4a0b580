use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Per-sample supervision.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    Regression(Vec<T>),
    Classes {
        labels: Vec<usize>,
        num_classes: usize,
    },
}

impl<T: Scalar> Targets<T> {
    pub fn classes(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Target(format!(
                "class index {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Targets::Classes {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(v) => v.len(),
            Targets::Classes { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Targets::Regression(v) => Targets::Regression(idx.iter().map(|&i| v[i]).collect()),
            Targets::Classes {
                labels,
                num_classes,
            } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
        }
    }

    pub fn cast<U: Scalar>(&self) -> Targets<U> {
        match self {
            Targets::Regression(v) => Targets::Regression(v.iter().map(|x| U::of(x.as_f64())).collect()),
            Targets::Classes {
                labels,
                num_classes,
            } => Targets::Classes {
                labels: labels.clone(),
                num_classes: *num_classes,
            },
        }
    }
}

/// Inputs (one row per sample) paired with their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub inputs: Matrix<T>,
    pub targets: Targets<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Matrix<T>, targets: Targets<T>) -> Result<Self> {
        check_len("batch targets", inputs.rows(), targets.len())?;
        if let Targets::Classes {
            labels,
            num_classes,
        } = &targets
        {
            if labels.iter().any(|&l| l >= *num_classes) {
                return Err(Error::Target("class index out of range".into()));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            targets: self.targets.select(idx),
        }
    }
}
