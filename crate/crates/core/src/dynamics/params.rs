use crate::error::{check_len, Error, Result};
use crate::linalg::{all_finite, max_abs_diff};
use crate::scalar::Scalar;

use super::spec::NetworkSpec;

/// The control `ϑ = (ϑ_0, …, ϑ_{N-1})`: one flat parameter vector per layer,
/// weights first (row-major `[out][in]`, or `[out_c][in_c][k][k]` for
/// convolutions) followed by the biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStack<T> {
    layers: Vec<Vec<T>>,
}

impl<T: Scalar> ParamStack<T> {
    /// Wraps per-layer vectors after checking them against `spec`.
    pub fn new(spec: &NetworkSpec, layers: Vec<Vec<T>>) -> Result<Self> {
        let p = Self { layers };
        p.check(spec)?;
        Ok(p)
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.param_len()])
                .collect(),
        }
    }

    /// Layer count and per-layer lengths match `spec`, all entries finite.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        check_len("parameter stack depth", spec.depth(), self.layers.len())?;
        for (n, (l, th)) in spec.layers.iter().zip(&self.layers).enumerate() {
            check_len("layer parameters", l.param_len(), th.len()).map_err(|e| e.at_layer(n))?;
            if !all_finite(th) {
                return Err(Error::NonFinite("parameters").at_layer(n));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, n: usize) -> &[T] {
        &self.layers[n]
    }

    pub fn layer_mut(&mut self, n: usize) -> &mut Vec<T> {
        &mut self.layers[n]
    }

    pub fn layers(&self) -> &[Vec<T>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Vec<T>> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| all_finite(l))
    }

    /// Largest absolute entrywise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        if self.layers.len() != other.layers.len() {
            return T::infinity();
        }
        self.layers
            .iter()
            .zip(&other.layers)
            .fold(T::zero(), |m, (a, b)| m.max(max_abs_diff(a, b)))
    }

    pub fn sq_norm(&self) -> T {
        self.layers
            .iter()
            .flatten()
            .fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn cast<U: Scalar>(&self) -> ParamStack<U> {
        ParamStack {
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(|v| U::of(v.as_f64())).collect())
                .collect(),
        }
    }
}
