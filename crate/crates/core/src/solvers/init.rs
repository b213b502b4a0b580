use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{NetworkSpec, ParamStack};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Starting parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    /// Weights from a zero-mean normal with standard deviation `std`,
    /// redrawn until they fall within two standard deviations; every bias
    /// set to `bias`.
    TruncatedNormal { std: f64, bias: f64 },
    Zeros,
}

impl Default for Init {
    fn default() -> Self {
        Init::TruncatedNormal { std: 0.1, bias: 0.1 }
    }
}

/// Draws layer by layer, weights before biases, from one seeded stream.
pub fn initialize<T: Scalar>(spec: &NetworkSpec, init: Init, seed: u64) -> Result<ParamStack<T>> {
    match init {
        Init::Zeros => Ok(ParamStack::zeros(spec)),
        Init::TruncatedNormal { std, bias } => {
            if !(std > 0.0 && std.is_finite() && bias.is_finite()) {
                return Err(Error::Invalid(format!(
                    "truncated normal needs positive finite std and finite bias, got {std}, {bias}"
                )));
            }
            let normal = Normal::new(0.0, std).map_err(|e| Error::Invalid(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layers = spec
                .layers
                .iter()
                .map(|l| {
                    let mut theta = Vec::with_capacity(l.param_len());
                    for _ in 0..l.weight_len() {
                        let v = loop {
                            let v: f64 = normal.sample(&mut rng);
                            if v.abs() <= 2.0 * std {
                                break v;
                            }
                        };
                        theta.push(T::of(v));
                    }
                    theta.extend(std::iter::repeat_n(T::of(bias), l.bias_len()));
                    theta
                })
                .collect();
            ParamStack::new(spec, layers)
        }
    }
}
