//! Run configuration: a preset chosen by `experiment`, overridden by a TOML
//! file and then by `--set key=value` pairs.

use std::env;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use emsa::data::{load_idx_dataset, load_mnist, sine_dataset, Dataset, MnistFiles};
use emsa::dynamics::{LayerSpec, LossKind, NetworkSpec};
use emsa::solvers::{BatchSize, Init, Method, SolverConfig};

/// Environment variable naming the base directory for run outputs.
pub const OUTPUT_DIR_ENV: &str = "EMSA_OUTPUT_DIR";
/// Environment variable overriding the full-MNIST directory.
pub const MNIST_DIR_ENV: &str = "EMSA_MNIST_DIR";
/// Environment variable overriding the MNIST-subset directory.
pub const MNIST_SUBSET_DIR_ENV: &str = "EMSA_MNIST_SUBSET_DIR";
/// Environment variable overriding the Fashion-MNIST directory.
pub const FASHION_DIR_ENV: &str = "EMSA_FASHION_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Sine regression, good initialization.
    #[default]
    Sine,
    /// Sine regression from all-zero parameters.
    SineZero,
    /// Dense residual classifier on the MNIST subset.
    MnistDense,
    /// Convolutional residual classifier on MNIST.
    MnistConv,
    FashionConv,
    /// Starts from the sine preset; every section is meant to be overridden.
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Sine,
        Experiment::SineZero,
        Experiment::MnistDense,
        Experiment::MnistConv,
        Experiment::FashionConv,
        Experiment::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sine => "sine",
            Experiment::SineZero => "sine_zero",
            Experiment::MnistDense => "mnist_dense",
            Experiment::MnistConv => "mnist_conv",
            Experiment::FashionConv => "fashion_conv",
            Experiment::Custom => "custom",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .with_context(|| format!("unknown experiment {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Input lifted to `width` copies, `depth` residual dense layers, squared
    /// error on the summed output.
    ResidualRegression,
    /// Dense projection to `width`, `depth` residual dense layers, linear
    /// classifier, softmax cross-entropy.
    DenseClassifier,
    /// Two conv projections (3×3, tanh, 2×2 max-pool) to `width` channels,
    /// `depth` residual 3×3 conv layers, linear classifier.
    ConvClassifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    /// State dimension (dense) or channel count (conv).
    pub width: usize,
    /// Number of residual layers.
    pub depth: usize,
    pub delta: f64,
    /// Weight `w` of the running cost `w‖ϑ‖²`.
    pub regularizer: f64,
    pub init: Init,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Sine,
    /// MNIST-style IDX files in `dir`.
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_seed: u64,
    pub test_seed: u64,
    pub dir: PathBuf,
    /// Leading training images moved to a validation split (unused in
    /// training).
    pub validation: usize,
    /// Keep only the first this many training samples; 0 keeps all.
    pub train_limit: usize,
    /// Keep only the first this many test samples; 0 keeps all.
    pub test_limit: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogConfig {
    /// Fill `wall_time_s` in history.csv. Off by default so repeated runs
    /// produce byte-identical files; timing.csv always has the timings.
    pub wall_time_in_history: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Parameter initialization seed.
    pub seed: u64,
    /// Worker threads; 0 lets the thread pool decide.
    pub threads: usize,
    /// Run directory; empty means `$EMSA_OUTPUT_DIR/<name>` or `runs/<name>`.
    pub output_dir: PathBuf,
    pub network: NetworkConfig,
    pub data: DataConfig,
    pub solver: SolverConfig,
    pub log: LogConfig,
}

fn env_dir(var: &str, fallback: &str) -> PathBuf {
    env::var_os(var).map_or_else(|| PathBuf::from(fallback), PathBuf::from)
}

impl RunConfig {
    pub fn preset(experiment: Experiment) -> Self {
        let sine = RunConfig {
            experiment,
            seed: 7,
            threads: 0,
            output_dir: PathBuf::new(),
            network: NetworkConfig {
                architecture: Architecture::ResidualRegression,
                width: 5,
                depth: 20,
                delta: 0.25,
                regularizer: 0.0,
                init: Init::default(),
            },
            data: DataConfig {
                source: DataSource::Sine,
                train_samples: 1000,
                test_samples: 1000,
                train_seed: 1,
                test_seed: 2,
                dir: PathBuf::new(),
                validation: 0,
                train_limit: 0,
                test_limit: 0,
            },
            solver: SolverConfig {
                rho: 1.0,
                eta: 0.03,
                iterations: 200,
                ..SolverConfig::new(Method::Emsa)
            },
            log: LogConfig::default(),
        };
        let conv = |dir: PathBuf| RunConfig {
            seed: 0,
            network: NetworkConfig {
                architecture: Architecture::ConvClassifier,
                width: 32,
                depth: 7,
                delta: 0.5,
                regularizer: 0.0,
                init: Init::default(),
            },
            data: DataConfig {
                source: DataSource::Idx,
                dir,
                validation: emsa::data::MNIST_VALIDATION,
                ..sine.data.clone()
            },
            solver: SolverConfig {
                rho: 0.01,
                eta: 0.01,
                batch_size: BatchSize::Size(100),
                iterations: 550,
                eval_every: 55,
                ..SolverConfig::new(Method::Emsa)
            },
            ..sine.clone()
        };
        match experiment {
            Experiment::Sine | Experiment::Custom => sine,
            Experiment::SineZero => RunConfig {
                network: NetworkConfig {
                    init: Init::Zeros,
                    ..sine.network.clone()
                },
                solver: SolverConfig {
                    iterations: 100,
                    eta: 0.01,
                    ..sine.solver.clone()
                },
                ..sine
            },
            Experiment::MnistDense => RunConfig {
                seed: 0,
                network: NetworkConfig {
                    architecture: Architecture::DenseClassifier,
                    width: 64,
                    depth: 3,
                    delta: 0.5,
                    regularizer: 0.0,
                    init: Init::default(),
                },
                data: DataConfig {
                    source: DataSource::Idx,
                    dir: env_dir(MNIST_SUBSET_DIR_ENV, "data/mnist-subset"),
                    validation: 0,
                    train_limit: 5000,
                    ..sine.data.clone()
                },
                solver: SolverConfig {
                    rho: 0.01,
                    eta: 0.01,
                    batch_size: BatchSize::Size(100),
                    iterations: 250,
                    eval_every: 50,
                    ..SolverConfig::new(Method::Emsa)
                },
                ..sine
            },
            Experiment::MnistConv => conv(env_dir(MNIST_DIR_ENV, "data/mnist")),
            Experiment::FashionConv => RunConfig {
                experiment,
                ..conv(env_dir(FASHION_DIR_ENV, "data/fashion-mnist"))
            },
        }
    }

    /// Preset for `experiment` (taken from `file` when it names one, else
    /// from `preset`, else `sine`), then the file's values, then `sets`.
    pub fn resolve(file: Option<&Path>, preset: Option<Experiment>, sets: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                text.parse::<Table>()
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => Table::new(),
        };
        for set in sets {
            apply_set(&mut table, set)?;
        }
        let experiment = match table.get("experiment") {
            Some(Value::String(s)) => s.parse()?,
            Some(v) => bail!("experiment must be a string, got {v}"),
            None => preset.unwrap_or_default(),
        };
        if let (Some(p), true) = (preset, table.contains_key("experiment")) {
            if p != experiment {
                bail!("--preset {p} conflicts with experiment = {experiment:?} in the config");
            }
        }
        let mut merged = Table::try_from(RunConfig::preset(experiment)).context("serializing preset")?;
        merge(&mut merged, table);
        let cfg: RunConfig = Value::Table(merged).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let n = &self.network;
        if n.width == 0 {
            bail!("network.width must be positive");
        }
        if !(n.delta > 0.0 && n.delta.is_finite()) {
            bail!("network.delta must be positive, got {}", n.delta);
        }
        if !(n.regularizer >= 0.0) {
            bail!("network.regularizer must be nonnegative, got {}", n.regularizer);
        }
        match (n.architecture, self.data.source) {
            (Architecture::ResidualRegression, DataSource::Sine) => {}
            (Architecture::DenseClassifier | Architecture::ConvClassifier, DataSource::Idx) => {}
            (a, s) => bail!("architecture {a:?} cannot train on {s:?} data"),
        }
        if self.data.source == DataSource::Sine && (self.data.train_samples == 0 || self.data.test_samples == 0) {
            bail!("sine data needs positive train_samples and test_samples");
        }
        Ok(())
    }

    /// Short label used for default output directories.
    pub fn run_name(&self) -> String {
        format!("{}-{}", self.experiment, self.solver.method)
    }

    /// `output_dir`, else `$EMSA_OUTPUT_DIR/<run name>`, else `runs/<run name>`.
    pub fn output_dir(&self) -> PathBuf {
        if !self.output_dir.as_os_str().is_empty() {
            return self.output_dir.clone();
        }
        env_dir(OUTPUT_DIR_ENV, "runs").join(self.run_name())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Network for data of width `input_dim`.
    pub fn network_spec(&self, input_dim: usize) -> Result<NetworkSpec> {
        let n = &self.network;
        let spec = match n.architecture {
            Architecture::ResidualRegression => {
                NetworkSpec::residual_stack(n.width, n.depth, n.delta, LossKind::SumSquaredScalarTarget)?
            }
            Architecture::DenseClassifier => {
                let mut layers = vec![LayerSpec::dense_projection(input_dim, n.width)];
                layers.extend((0..n.depth).map(|_| LayerSpec::residual_dense(n.width, n.delta)));
                layers.push(LayerSpec::classifier(n.width, 10));
                NetworkSpec::new(layers, LossKind::SoftmaxCrossEntropy)?
            }
            Architecture::ConvClassifier => {
                let side = (input_dim as f64).sqrt().round() as usize;
                if side * side != input_dim || side % 4 != 0 {
                    bail!("conv classifier needs square images with side divisible by 4, got {input_dim} pixels");
                }
                let c = n.width;
                let mut layers = vec![
                    LayerSpec::conv_projection(1, c, side, side),
                    LayerSpec::conv_projection(c, c, side / 2, side / 2),
                ];
                let s = side / 4;
                layers.extend((0..n.depth).map(|_| LayerSpec::residual_conv2d(c, s, s, n.delta)));
                layers.push(LayerSpec::classifier(c * s * s, 10));
                NetworkSpec::new(layers, LossKind::SoftmaxCrossEntropy)?
            }
        };
        Ok(spec.with_regularizer(n.regularizer)?)
    }

    /// Training and test sets, already lifted/limited for the network.
    pub fn load_data(&self) -> Result<(Dataset<f64>, Dataset<f64>)> {
        let d = &self.data;
        let (train, test) = match d.source {
            DataSource::Sine => {
                let w = self.network.width;
                (
                    sine_dataset(d.train_samples, d.train_seed)?.lifted(w)?,
                    sine_dataset(d.test_samples, d.test_seed)?.lifted(w)?,
                )
            }
            DataSource::Idx => {
                let files = MnistFiles::in_dir(&d.dir);
                if !files.all_exist() {
                    bail!(
                        "IDX files not found in {} (expected train-images-idx3-ubyte etc.; see README)",
                        d.dir.display()
                    );
                }
                let splits = load_mnist(&files, d.validation)?;
                (splits.train, splits.test)
            }
        };
        let limit = |ds: Dataset<f64>, k: usize| if k == 0 || k >= ds.len() { ds } else { ds.take(k) };
        Ok((limit(train, d.train_limit), limit(test, d.test_limit)))
    }
}

/// Loads one IDX image/label pair, for `data-info` on arbitrary files.
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset<f64>> {
    Ok(load_idx_dataset(images, labels, "idx")?)
}

/// `a.b.c=value`; the value is parsed as TOML, falling back to a string.
fn apply_set(table: &mut Table, set: &str) -> Result<()> {
    let (key, raw) = set
        .split_once('=')
        .with_context(|| format!("--set expects key=value, got {set:?}"))?;
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).with_context(|| format!("empty key in {set:?}"))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = match entry {
            Value::Table(inner) => inner,
            _ => bail!("{key}: {p} is not a table"),
        };
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Recursive overlay of `top` onto `base`; inline tables that carry a
/// `kind` tag replace rather than merge, so switching `init.kind` drops the
/// previous variant's fields.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) if !t.contains_key("kind") => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for e in Experiment::ALL {
            let cfg = RunConfig::preset(e);
            let text = cfg.to_toml().unwrap();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, cfg, "{e}");
        }
    }

    #[test]
    fn set_values_are_typed() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("true"), Value::Boolean(true));
        assert_eq!(parse_value("sgd"), Value::String("sgd".into()));
        assert_eq!(parse_value("\"full\""), Value::String("full".into()));
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg = RunConfig::resolve(
            None,
            Some(Experiment::Sine),
            &["solver.method=adam".into(), "solver.eta=0.5".into(), "network.depth=4".into()],
        )
        .unwrap();
        assert_eq!(cfg.solver.method, Method::Adam);
        assert_eq!(cfg.solver.eta, 0.5);
        assert_eq!(cfg.network.depth, 4);
        assert_eq!(cfg.network.width, 5);
    }

    #[test]
    fn init_variant_switch_replaces_fields() {
        let cfg = RunConfig::resolve(None, None, &["network.init={kind=\"zeros\"}".into()]).unwrap();
        assert_eq!(cfg.network.init, Init::Zeros);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::resolve(None, None, &["solver.learning_rate=1".into()]).is_err());
        assert!(RunConfig::resolve(None, None, &["nonsense".into()]).is_err());
        assert!(RunConfig::resolve(None, None, &["experiment=\"imagenet\"".into()]).is_err());
    }

    #[test]
    fn preset_shapes() {
        let sine = RunConfig::preset(Experiment::Sine);
        let spec = sine.network_spec(5).unwrap();
        assert_eq!(spec.depth(), 20);
        assert!(spec.layers.iter().all(|l| l.delta == 0.25));

        let conv = RunConfig::preset(Experiment::MnistConv);
        let spec = conv.network_spec(784).unwrap();
        assert_eq!(spec.depth(), 10);
        let residual = spec.layers.iter().filter(|l| l.kind.is_residual()).count();
        assert_eq!(residual, 7);
        assert!(spec.layers.iter().filter(|l| l.kind.is_residual()).all(|l| l.delta == 0.5));
        assert_eq!(spec.output_dim(), 10);
    }

    #[test]
    fn mismatched_architecture_rejected() {
        assert!(RunConfig::resolve(None, None, &["network.architecture=\"dense_classifier\"".into()]).is_err());
    }
}
