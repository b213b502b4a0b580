use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maximizer::AscentConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Augmented-Hamiltonian maximization with penalty `ρ`.
    #[default]
    Emsa,
    /// Plain Hamiltonian maximization (`ρ = 0`).
    BasicMsa,
    /// One gradient-ascent step on each `H_n`.
    GradMsa,
    Sgd,
    Adagrad,
    Adam,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Emsa,
        Method::BasicMsa,
        Method::GradMsa,
        Method::Sgd,
        Method::Adagrad,
        Method::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Emsa => "emsa",
            Method::BasicMsa => "basic_msa",
            Method::GradMsa => "grad_msa",
            Method::Sgd => "sgd",
            Method::Adagrad => "adagrad",
            Method::Adam => "adam",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Method::Sgd | Method::Adagrad | Method::Adam)
    }

    pub fn uses_maximizer(self) -> bool {
        matches!(self, Method::Emsa | Method::BasicMsa)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?}")))
    }
}

/// Mini-batch size, or the whole dataset in its stored order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BatchSizeRepr", into = "BatchSizeRepr")]
pub enum BatchSize {
    #[default]
    Full,
    Size(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BatchSizeRepr {
    Size(usize),
    Name(String),
}

impl TryFrom<BatchSizeRepr> for BatchSize {
    type Error = String;

    fn try_from(r: BatchSizeRepr) -> std::result::Result<Self, String> {
        match r {
            BatchSizeRepr::Size(0) => Err("batch_size must be positive".into()),
            BatchSizeRepr::Size(n) => Ok(BatchSize::Size(n)),
            BatchSizeRepr::Name(s) if s == "full" => Ok(BatchSize::Full),
            BatchSizeRepr::Name(s) => Err(format!("batch_size must be a positive integer or \"full\", got {s:?}")),
        }
    }
}

impl From<BatchSize> for BatchSizeRepr {
    fn from(b: BatchSize) -> Self {
        match b {
            BatchSize::Full => BatchSizeRepr::Name("full".into()),
            BatchSize::Size(n) => BatchSizeRepr::Size(n),
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Full => f.write_str("full"),
            BatchSize::Size(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(BatchSize::Full),
            _ => match s.parse::<usize>() {
                Ok(n) if n > 0 => Ok(BatchSize::Size(n)),
                _ => Err(Error::Invalid(format!(
                    "batch size must be a positive integer or \"full\", got {s:?}"
                ))),
            },
        }
    }
}

/// Everything an outer training loop needs besides network and data.
///
/// Hamiltonians sum over the batch with co-states of the batch-mean loss,
/// so the penalty terms scale with the batch size while `H_n` does not;
/// `rho` is therefore tuned per batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    /// Penalty coefficient; used by `emsa` only.
    pub rho: f64,
    /// Learning rate; used by `grad_msa` and the baselines.
    pub eta: f64,
    pub ascent: AscentConfig,
    pub batch_size: BatchSize,
    pub iterations: usize,
    /// Seeds the mini-batch sampler.
    pub seed: u64,
    /// Evaluate on the full train/test sets every this many iterations (and
    /// after the last).
    pub eval_every: usize,
    /// Samples per forward pass during evaluation.
    pub eval_chunk: usize,
    pub momentum: f64,
    pub adagrad_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Emsa,
            rho: 1.0,
            eta: 0.1,
            ascent: AscentConfig::default(),
            batch_size: BatchSize::Full,
            iterations: 100,
            seed: 0,
            eval_every: 1,
            eval_chunk: 1000,
            momentum: 0.0,
            adagrad_eps: 1e-8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be finite and nonnegative, got {}", self.rho));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and nonnegative, got {}", self.eta));
        }
        if self.eval_every == 0 || self.eval_chunk == 0 {
            return bad("eval_every and eval_chunk must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adagrad_eps > 0.0 && self.adam_eps > 0.0) {
            return bad("adagrad_eps and adam_eps must be positive".into());
        }
        if let BatchSize::Size(0) = self.batch_size {
            return bad("batch_size must be positive".into());
        }
        self.ascent.validate()
    }
}
