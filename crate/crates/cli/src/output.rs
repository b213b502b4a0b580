//! Files written into a run directory.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use emsa::diagnostics::{Evaluation, IterationReport, Status};
use emsa::dynamics::{NetworkSpec, ParamStack};
use emsa::solvers::Method;

pub const HISTORY_FILE: &str = "history.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "params.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// One history.csv row. Column order is part of the file format.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub method: Method,
    #[serde(rename = "J_train")]
    pub j_train: Option<f64>,
    #[serde(rename = "J_test")]
    pub j_test: Option<f64>,
    pub acc_train: Option<f64>,
    pub acc_test: Option<f64>,
    pub mu_k: Option<f64>,
    pub feas_state: Option<f64>,
    pub feas_costate: Option<f64>,
    #[serde(rename = "delta_J")]
    pub delta_j: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub status: Status,
}

/// Row 0 holds the initial evaluation; later rows are the evaluation points
/// of `history`. `wall_time_s` is cumulative and only filled on request.
pub fn history_rows(
    method: Method,
    initial_train: &Evaluation,
    initial_test: Option<&Evaluation>,
    history: &[IterationReport],
    wall_time: bool,
) -> Vec<HistoryRow> {
    let mut rows = vec![HistoryRow {
        iter: 0,
        method,
        j_train: Some(initial_train.j),
        j_test: initial_test.map(|e| e.j),
        acc_train: initial_train.accuracy,
        acc_test: initial_test.and_then(|e| e.accuracy),
        mu_k: None,
        feas_state: None,
        feas_costate: None,
        delta_j: None,
        wall_time_s: wall_time.then_some(0.0),
        status: Status::Ok,
    }];
    let mut elapsed = 0.0;
    for r in history {
        elapsed += r.times.total();
        if !r.is_eval_point() {
            continue;
        }
        rows.push(HistoryRow {
            iter: r.iter,
            method,
            j_train: r.j_train,
            j_test: r.j_test,
            acc_train: r.acc_train,
            acc_test: r.acc_test,
            mu_k: Some(r.mu_k),
            feas_state: Some(r.feas_state),
            feas_costate: Some(r.feas_costate),
            delta_j: Some(r.delta_j),
            wall_time_s: wall_time.then_some(elapsed),
            status: r.status,
        });
    }
    rows
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TimingRow {
    iter: usize,
    batch_size: usize,
    forward_s: f64,
    backward_s: f64,
    update_s: f64,
    audit_s: f64,
    evaluate_s: f64,
    total_s: f64,
}

/// Per-phase seconds for every iteration.
pub fn write_timing(path: &Path, history: &[IterationReport]) -> Result<()> {
    let rows: Vec<TimingRow> = history
        .iter()
        .map(|r| TimingRow {
            iter: r.iter,
            batch_size: r.batch_size,
            forward_s: r.times.forward,
            backward_s: r.times.backward,
            update_s: r.times.update,
            audit_s: r.times.audit,
            evaluate_s: r.times.evaluate,
            total_s: r.times.total(),
        })
        .collect();
    write_csv(path, &rows)
}

#[derive(Serialize)]
struct Block {
    offset: usize,
    len: usize,
    shape: Vec<usize>,
}

#[derive(Serialize)]
struct LayerEntry {
    index: usize,
    kind: String,
    in_dim: usize,
    out_dim: usize,
    delta: f64,
    weights: Block,
    bias: Block,
}

#[derive(Serialize)]
struct Manifest {
    dtype: &'static str,
    byte_order: &'static str,
    total_len: usize,
    layer_order: &'static str,
    layers: Vec<LayerEntry>,
}

/// `params.bin`: every layer's weights then biases, layers in order, as
/// little-endian f64. `params.json` describes the layout.
pub fn write_params(dir: &Path, spec: &NetworkSpec, params: &ParamStack<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * params.len());
    let mut layers = Vec::with_capacity(spec.depth());
    let mut offset = 0;
    for (index, (l, theta)) in spec.layers.iter().zip(params.layers()).enumerate() {
        for v in theta {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let shape = match l.conv {
            Some(c) => vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
            None => vec![l.out_dim, l.in_dim],
        };
        let (w, b) = (l.weight_len(), l.bias_len());
        layers.push(LayerEntry {
            index,
            kind: format!("{:?}", l.kind),
            in_dim: l.in_dim,
            out_dim: l.out_dim,
            delta: l.effective_delta(),
            weights: Block { offset, len: w, shape },
            bias: Block {
                offset: offset + w,
                len: b,
                shape: vec![b],
            },
        });
        offset += theta.len();
    }
    let manifest = Manifest {
        dtype: "f64",
        byte_order: "little",
        total_len: offset,
        layer_order: "input to output; weights (row-major in the listed shape) then biases",
        layers,
    };
    fs::write(dir.join(PARAMS_FILE), bytes)?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Reads a `params.bin` back.
pub fn read_params(path: &Path, spec: &NetworkSpec) -> Result<ParamStack<f64>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    anyhow::ensure!(bytes.len() % 8 == 0, "{}: length {} is not a multiple of 8", path.display(), bytes.len());
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    anyhow::ensure!(
        flat.len() == spec.param_count(),
        "{}: {} values, network has {}",
        path.display(),
        flat.len(),
        spec.param_count()
    );
    let mut it = flat.into_iter();
    let layers = spec.layers.iter().map(|l| it.by_ref().take(l.param_len()).collect()).collect();
    Ok(ParamStack::new(spec, layers)?)
}
