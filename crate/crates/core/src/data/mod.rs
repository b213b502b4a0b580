//! Datasets: sine regression, IDX image archives, input lifting and
//! mini-batch sampling.

mod idx;
mod mnist;
mod sampler;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Batch, Targets};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub use idx::{encode_idx_images, encode_idx_labels, parse_idx, IdxData};
pub use mnist::{load_idx_dataset, load_mnist, MnistFiles, MnistSplits, MNIST_VALIDATION};
pub use sampler::MinibatchSampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Bytes divided by 255.
    UnitInterval,
}

/// A named, immutable collection of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub name: String,
    pub normalization: Normalization,
    pub samples: Batch<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: impl Into<String>, normalization: Normalization, samples: Batch<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if !samples.inputs.is_finite() {
            return Err(Error::NonFinite("dataset inputs"));
        }
        if let Targets::Regression(y) = &samples.targets {
            if !crate::linalg::all_finite(y) {
                return Err(Error::NonFinite("dataset targets"));
            }
        }
        Ok(Self {
            name: name.into(),
            normalization,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples.inputs.cols()
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.samples.inputs
    }

    pub fn targets(&self) -> &Targets<T> {
        &self.samples.targets
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.samples.targets {
            Targets::Classes { num_classes, .. } => Some(*num_classes),
            Targets::Regression(_) => None,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Batch<T> {
        self.samples.select(idx)
    }

    /// The first `k` samples and the rest, in order.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.len() {
            return Err(Error::Invalid(format!(
                "split point {k} must lie strictly inside 0..{}",
                self.len()
            )));
        }
        let head: Vec<usize> = (0..k).collect();
        let tail: Vec<usize> = (k..self.len()).collect();
        let part = |idx: &[usize], tag: &str| Self {
            name: format!("{}[{tag}]", self.name),
            normalization: self.normalization,
            samples: self.samples.select(idx),
        };
        Ok((part(&head, &format!("..{k}")), part(&tail, &format!("{k}.."))))
    }

    /// The first `k` samples (all of them if `k ≥ len`).
    pub fn take(&self, k: usize) -> Self {
        if k >= self.len() {
            return self.clone();
        }
        let idx: Vec<usize> = (0..k).collect();
        Self {
            name: format!("{}[..{k}]", self.name),
            normalization: self.normalization,
            samples: self.samples.select(&idx),
        }
    }

    /// Replaces each scalar input with `d` copies of itself.
    pub fn lifted(&self, d: usize) -> Result<Self> {
        Ok(Self {
            name: self.name.clone(),
            normalization: self.normalization,
            samples: Batch::new(lift_input(&self.samples.inputs, d)?, self.samples.targets.clone())?,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            name: self.name.clone(),
            normalization: self.normalization,
            samples: Batch {
                inputs: self.samples.inputs.cast(),
                targets: self.samples.targets.cast(),
            },
        }
    }
}

/// `n` inputs drawn uniformly from `[−π, π]` with targets `sin(x)`.
pub fn sine_dataset(n: usize, seed: u64) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::Empty("sine dataset size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..=PI)).collect();
    let y = x.iter().map(|v| v.sin()).collect();
    Dataset::new(
        "sine",
        Normalization::None,
        Batch::new(Matrix::from_vec(n, 1, x)?, Targets::Regression(y))?,
    )
}

/// Each row of the single-column `x` repeated `d` times.
pub fn lift_input<T: Scalar>(x: &Matrix<T>, d: usize) -> Result<Matrix<T>> {
    if d == 0 {
        return Err(Error::Invalid("lift dimension must be positive".into()));
    }
    crate::error::check_len("lifted input width", 1, x.cols())?;
    let data = x
        .as_slice()
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, d))
        .collect();
    Matrix::from_vec(x.rows(), d, data)
}
