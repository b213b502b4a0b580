use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use emsa::diagnostics::suite::{Fault, SuiteConfig};
use emsa::solvers::Method;
use emsa_cli::config::{Experiment, RunConfig};
use emsa_cli::run::{self, configure_threads};

#[derive(Parser)]
#[command(name = "emsa", version, about = "Maximum-principle training of residual networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML run configuration
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Preset to start from when the config does not name one
    #[arg(short, long)]
    preset: Option<Experiment>,
    /// Override a value, e.g. `--set solver.rho=2` (repeatable)
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), self.preset, &self.sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory (default: output_dir, else $EMSA_OUTPUT_DIR/<name>, else runs/<name>)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table
    Diag {
        /// Random instances per layer kind and networks per audit
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true, default_value = "none")]
        inject_fault: String,
    },
    /// Train several comparable configurations and merge their histories
    Compare {
        /// Config files, one run each (label = file stem)
        configs: Vec<PathBuf>,
        /// Instead of files: one run per method on the base configuration
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        /// Base configuration for --methods
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(short, long)]
        preset: Option<Experiment>,
        /// Override applied to every run (repeatable)
        #[arg(short, long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Directory receiving one subdirectory per run and compare.csv
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Describe the data and network a configuration would use
    DataInfo {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Describe these IDX files instead
        #[arg(long)]
        idx: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run_cli(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run_cli(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { cfg, out } => {
            let cfg = cfg.resolve()?;
            configure_threads(cfg.threads);
            let s = run::train_command(&cfg, out.as_deref())?;
            println!(
                "{} {}: {} iterations, status {:?}, J_train {} -> {}, J_test {} -> {}",
                s.experiment,
                s.method,
                s.iterations_run,
                s.status,
                fmt_opt(s.first.j_train),
                fmt_opt(s.last.j_train),
                fmt_opt(s.first.j_test),
                fmt_opt(s.last.j_test),
            );
            if let Some(a) = s.last.acc_test {
                println!("test accuracy {a:.4}");
            }
            println!("wrote {} ({:.1}s)", s.dir.display(), s.elapsed_s);
            Ok(ExitCode::SUCCESS)
        }
        Command::Diag {
            instances,
            seed,
            inject_fault,
        } => {
            let fault: Fault = inject_fault.parse()?;
            let (ok, _, table) = run::diag_command(&SuiteConfig { instances, seed, fault });
            print!("{table}");
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Compare {
            configs,
            methods,
            base,
            preset,
            sets,
            out,
        } => {
            let runs = compare_runs(&configs, &methods, base, preset, &sets)?;
            if let Some((_, c)) = runs.first() {
                configure_threads(c.threads);
            }
            let dir = match out {
                Some(d) => d,
                None => runs
                    .first()
                    .map(|(_, c)| {
                        let base = std::env::var_os(emsa_cli::OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
                        base.join(format!("compare-{}", c.experiment))
                    })
                    .context("compare needs at least one configuration")?,
            };
            let path = run::compare_command(&runs, &dir)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::DataInfo { cfg, idx } => {
            if idx.is_empty() {
                print!("{}", run::data_info(&cfg.resolve()?)?);
            } else {
                for p in &idx {
                    println!("{}", run::idx_info(p)?);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn compare_runs(
    configs: &[PathBuf],
    methods: &[Method],
    base: Option<PathBuf>,
    preset: Option<Experiment>,
    sets: &[String],
) -> Result<Vec<(String, RunConfig)>> {
    if !configs.is_empty() && !methods.is_empty() {
        bail!("give either config files or --methods, not both");
    }
    if methods.is_empty() {
        return configs
            .iter()
            .map(|p| {
                let label = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .with_context(|| format!("no usable file name in {}", p.display()))?;
                Ok((label.to_string(), RunConfig::resolve(Some(p), preset, sets)?))
            })
            .collect();
    }
    methods
        .iter()
        .map(|m| {
            let mut s = sets.to_vec();
            s.push(format!("solver.method=\"{m}\""));
            Ok((m.to_string(), RunConfig::resolve(base.as_deref(), preset, &s)?))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}
