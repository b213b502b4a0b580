//! The subcommands, as library functions so tests can drive them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use emsa::data::{parse_idx, Dataset, IdxData};
use emsa::diagnostics::suite::{run_suite, CheckOutcome, SuiteConfig};
use emsa::diagnostics::Status;
use emsa::dynamics::Targets;
use emsa::solvers::{initialize, train, Method};

use crate::config::RunConfig;
use crate::output::{self, HistoryRow};

/// Caps the global worker pool; 0 leaves the default. Only the first call
/// in a process takes effect.
pub fn configure_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub experiment: String,
    pub method: Method,
    pub status: Status,
    pub iterations_run: usize,
    pub param_count: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub elapsed_s: f64,
    pub first: HistoryRow,
    pub last: HistoryRow,
    #[serde(skip)]
    pub rows: Vec<HistoryRow>,
}

/// Trains per `cfg` and writes the run directory: config echo, history,
/// timing, final parameters and a summary. Divergence is reported through
/// the status, not as an error.
pub fn train_command(cfg: &RunConfig, out: Option<&Path>) -> Result<RunSummary> {
    let dir = out.map_or_else(|| cfg.output_dir(), Path::to_path_buf);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(output::CONFIG_FILE), cfg.to_toml()?)?;

    let (train_set, test_set) = cfg.load_data()?;
    let spec = cfg.network_spec(train_set.input_dim())?;
    let p0 = initialize::<f64>(&spec, cfg.network.init, cfg.seed)?;
    let start = std::time::Instant::now();
    let outcome = train(&spec, p0, &train_set, Some(&test_set), &cfg.solver)?;
    let elapsed_s = start.elapsed().as_secs_f64();

    let rows = output::history_rows(
        cfg.solver.method,
        &outcome.initial_train,
        outcome.initial_test.as_ref(),
        &outcome.history,
        cfg.log.wall_time_in_history,
    );
    output::write_csv(&dir.join(output::HISTORY_FILE), &rows)?;
    output::write_timing(&dir.join(output::TIMING_FILE), &outcome.history)?;
    output::write_params(&dir, &spec, &outcome.params)?;
    let summary = RunSummary {
        dir: dir.clone(),
        experiment: cfg.experiment.to_string(),
        method: cfg.solver.method,
        status: outcome.status,
        iterations_run: outcome.history.len(),
        param_count: spec.param_count(),
        train_samples: train_set.len(),
        test_samples: test_set.len(),
        elapsed_s,
        first: rows[0].clone(),
        last: rows[rows.len() - 1].clone(),
        rows,
    };
    output::write_json(&dir.join(output::SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// One row of the merged comparison file.
#[derive(Serialize)]
struct MergedRow<'a> {
    run: &'a str,
    iter: usize,
    method: Method,
    #[serde(rename = "J_train")]
    j_train: Option<f64>,
    #[serde(rename = "J_test")]
    j_test: Option<f64>,
    acc_train: Option<f64>,
    acc_test: Option<f64>,
    mu_k: Option<f64>,
    feas_state: Option<f64>,
    feas_costate: Option<f64>,
    #[serde(rename = "delta_J")]
    delta_j: Option<f64>,
    wall_time_s: Option<f64>,
    status: Status,
}

/// Runs labelled configurations that share experiment, network and data,
/// each into `base/<label>`, and merges their histories into
/// `base/compare.csv` ordered by run, then iteration.
pub fn compare_command(runs: &[(String, RunConfig)], base: &Path) -> Result<PathBuf> {
    let Some((_, first)) = runs.first() else {
        bail!("compare needs at least one configuration");
    };
    let mut labels = BTreeMap::new();
    for (label, cfg) in runs {
        if cfg.experiment != first.experiment || cfg.network != first.network || cfg.data != first.data {
            bail!(
                "run {label:?} is not comparable with {:?}: experiment, network and data must match",
                runs[0].0
            );
        }
        if labels.insert(label.as_str(), ()).is_some() {
            bail!("duplicate run label {label:?}");
        }
    }
    let mut results = Vec::with_capacity(runs.len());
    for (label, cfg) in runs {
        let s = train_command(cfg, Some(&base.join(label)))?;
        results.push((label.as_str(), s.rows));
    }
    let merged: Vec<MergedRow> = results
        .iter()
        .flat_map(|(label, rows)| {
            rows.iter().map(move |r| MergedRow {
                run: label,
                iter: r.iter,
                method: r.method,
                j_train: r.j_train,
                j_test: r.j_test,
                acc_train: r.acc_train,
                acc_test: r.acc_test,
                mu_k: r.mu_k,
                feas_state: r.feas_state,
                feas_costate: r.feas_costate,
                delta_j: r.delta_j,
                wall_time_s: r.wall_time_s,
                status: r.status,
            })
        })
        .collect();
    let path = base.join("compare.csv");
    output::write_csv(&path, &merged)?;
    Ok(path)
}

fn describe(out: &mut String, name: &str, ds: &Dataset<f64>) -> Result<()> {
    let x = ds.inputs().as_slice();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    writeln!(out, "{name}: {} samples, input dim {}, inputs in [{lo:.4}, {hi:.4}], normalization {:?}", ds.len(), ds.input_dim(), ds.normalization)?;
    match ds.targets() {
        Targets::Regression(y) => {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            writeln!(out, "  targets: regression, mean {mean:.4}, range [{lo:.4}, {hi:.4}]")?;
        }
        Targets::Classes { labels, num_classes } => {
            let mut counts = vec![0usize; *num_classes];
            for &l in labels {
                counts[l] += 1;
            }
            writeln!(out, "  targets: {num_classes} classes, counts {counts:?}")?;
        }
    }
    Ok(())
}

/// Summary of the datasets and network a configuration would train on.
pub fn data_info(cfg: &RunConfig) -> Result<String> {
    let (train_set, test_set) = cfg.load_data()?;
    let spec = cfg.network_spec(train_set.input_dim())?;
    let mut out = String::new();
    writeln!(out, "experiment {}", cfg.experiment)?;
    describe(&mut out, "train", &train_set)?;
    describe(&mut out, "test", &test_set)?;
    writeln!(out, "network: {} layers, {} parameters, loss {:?}", spec.depth(), spec.param_count(), spec.loss)?;
    if let Some(b) = match cfg.solver.batch_size {
        emsa::solvers::BatchSize::Full => None,
        emsa::solvers::BatchSize::Size(b) => Some(b),
    } {
        writeln!(out, "batches per epoch at size {b}: {}", train_set.len().div_ceil(b))?;
    }
    Ok(out)
}

/// Header summary of a single IDX file.
pub fn idx_info(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = parse_idx(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match parsed {
        IdxData::Images { rows, cols, pixels } => {
            format!("{}: {} images of {rows}x{cols}", path.display(), pixels.rows())
        }
        IdxData::Labels(l) => {
            let mut counts = [0usize; 256];
            for &v in &l {
                counts[v as usize] += 1;
            }
            let used: Vec<_> = counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(k, c)| (k, *c)).collect();
            format!("{}: {} labels, counts {used:?}", path.display(), l.len())
        }
    })
}

/// Runs the invariant suite and renders the table; the flag is true when
/// every check passed.
pub fn diag_command(cfg: &SuiteConfig) -> (bool, Vec<CheckOutcome>, String) {
    let outcomes = run_suite(cfg);
    let mut table = String::new();
    for c in &outcomes {
        let _ = writeln!(table, "{c}");
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    let _ = writeln!(table, "{} checks, {failed} failed", outcomes.len());
    (failed == 0, outcomes, table)
}
