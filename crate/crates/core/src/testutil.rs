//! Random instances for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{NetworkSpec, ParamStack};
use crate::linalg::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect()
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, uniform_vec(r, rows * cols, scale)).unwrap()
}

pub fn random_params(spec: &NetworkSpec, r: &mut ChaCha8Rng, scale: f64) -> ParamStack<f64> {
    let layers = spec
        .layers
        .iter()
        .map(|l| uniform_vec(r, l.param_len(), scale))
        .collect();
    ParamStack::new(spec, layers).unwrap()
}
