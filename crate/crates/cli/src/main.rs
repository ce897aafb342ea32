use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use sparsegrad::experiments::{
    run_gcn_experiment, run_heavyball_experiment, run_jacobi_experiment, run_pcg_experiment, run_spai_experiment,
    ExperimentResult, GcnConfig, HeavyballConfig, JacobiConfig, PcgConfig, SpaiConfig,
};
use sparsegrad::gradcheck::{run_suite, SuiteConfig};
use sparsegrad::mmio::{read_matrix_market, write_matrix_market, write_to};
use sparsegrad::poisson::{poisson_1d, poisson_2d};
use sparsegrad_cli::{bench, load_config, scaling_fit, write_bench_csv, write_history_csv, write_json, write_series_csv, BenchOp, Direction};

#[derive(Parser)]
#[command(name = "sparsegrad", version, about = "Sparse autodiff experiments, gradient checks and kernel benchmarks")]
struct Cli {
    /// Seed for every random draw (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the kernels; 1 gives the sequential baseline.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Poisson matrix in Matrix Market format.
    Gen {
        /// 1 for the tridiagonal A_N, 2 for the five-point grid operator.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        dim: u8,
        /// Grid points per dimension (x direction for `--dim 2`).
        #[arg(long)]
        n: usize,
        /// Grid points in y for `--dim 2`; defaults to `--n`.
        #[arg(long)]
        ny: Option<usize>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment and write `<name>.json` and `<name>_history.csv`.
    Run(RunArgs),
    /// Run the kernel gradient-check suite and write a JSON report.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Report file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time forward and backward kernel calls on A_N, one CSV row each.
    Bench {
        #[arg(long)]
        op: BenchOp,
        /// Comma-separated matrix sizes N.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// CSV file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Jacobi,
    Heavyball,
    Pcg,
    Gcn,
    Spai,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Jacobi => "jacobi",
            Experiment::Heavyball => "heavyball",
            Experiment::Pcg => "pcg",
            Experiment::Gcn => "gcn",
            Experiment::Spai => "spai",
        }
    }
}

#[derive(Args)]
struct RunArgs {
    experiment: Experiment,
    /// Key-value configuration file (TOML syntax).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    epochs: Option<i64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_it: Option<i64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Grid size for `pcg` and `spai`.
    #[arg(long)]
    nx: Option<i64>,
    #[arg(long)]
    ny: Option<i64>,
    /// Matrix Market file for `spai` instead of the Poisson grid.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self, seed: Option<u64>) -> Result<toml::Table> {
        let mut t = toml::Table::new();
        let ints = [("n", self.n), ("epochs", self.epochs), ("n_it", self.n_it)];
        for (key, v) in ints {
            if let Some(v) = v {
                t.insert(key.into(), toml::Value::Integer(v));
            }
        }
        for (key, v) in [("lr", self.lr), ("gamma", self.gamma), ("tol", self.tol)] {
            if let Some(v) = v {
                t.insert(key.into(), toml::Value::Float(v));
            }
        }
        if let Some(s) = seed {
            let s = i64::try_from(s).context("--seed must fit in a signed 64-bit integer")?;
            t.insert("seed".into(), toml::Value::Integer(s));
        }
        Ok(t)
    }
}

fn grid(args: &RunArgs, table: &mut toml::Table) {
    for (key, v) in [("nx", args.nx), ("ny", args.ny)] {
        if let Some(v) = v {
            table.insert(key.into(), toml::Value::Integer(v));
        }
    }
}

/// Key-value layout of a `spai` configuration: the grid plus the solver
/// settings.
#[derive(serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpaiFile {
    nx: usize,
    ny: usize,
    grad_norm_tol: f64,
    initial_step: f64,
    max_halvings: usize,
    max_iterations: usize,
}

impl Default for SpaiFile {
    fn default() -> Self {
        let c = SpaiConfig::default();
        SpaiFile {
            nx: 8,
            ny: 8,
            grad_norm_tol: c.grad_norm_tol,
            initial_step: c.initial_step,
            max_halvings: c.max_halvings,
            max_iterations: c.max_iterations,
        }
    }
}

fn config<T: DeserializeOwned>(args: &RunArgs, table: toml::Table) -> Result<T> {
    load_config(args.config.as_deref(), table)
}

fn run_experiment(args: &RunArgs, seed: Option<u64>) -> Result<ExperimentResult> {
    let mut table = args.overrides(seed)?;
    let result = match args.experiment {
        Experiment::Jacobi => run_jacobi_experiment(&config::<JacobiConfig>(args, table)?)?,
        Experiment::Heavyball => run_heavyball_experiment(&config::<HeavyballConfig>(args, table)?)?,
        Experiment::Gcn => run_gcn_experiment(&config::<GcnConfig>(args, table)?)?,
        Experiment::Pcg => {
            grid(args, &mut table);
            run_pcg_experiment(&config::<PcgConfig>(args, table)?)?
        }
        Experiment::Spai => {
            if seed.is_some() {
                // the experiment draws nothing at random
                table.remove("seed");
            }
            grid(args, &mut table);
            let file: SpaiFile = config(args, table)?;
            let a = match &args.matrix {
                Some(p) => read_matrix_market(p).with_context(|| format!("reading {}", p.display()))?,
                None => poisson_2d(file.nx, file.ny)?,
            };
            let c = SpaiConfig {
                grad_norm_tol: file.grad_norm_tol,
                initial_step: file.initial_step,
                max_halvings: file.max_halvings,
                max_iterations: file.max_iterations,
            };
            run_spai_experiment(&a, &c)?
        }
    };
    Ok(result)
}

/// Writes to `path`, or to standard output when `path` is `None`.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Gen { dim, n, ny, out } => {
            let a = match dim {
                1 => poisson_1d(n)?,
                _ => poisson_2d(n, ny.unwrap_or(n))?,
            };
            match out {
                Some(p) => write_matrix_market(&p, &a).with_context(|| format!("writing {}", p.display()))?,
                None => emit(None, |mut w| write_to(&mut w, &a).map_err(Into::into))?,
            }
            Ok(true)
        }
        Command::Run(args) => {
            let result = run_experiment(&args, cli.seed)?;
            fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            let name = args.experiment.name();
            write_json(&args.out.join(format!("{name}.json")), &result)?;
            let history = args.out.join(format!("{name}_history.csv"));
            emit(Some(&history), |w| write_history_csv(w, &result))?;
            if !result.series.is_empty() {
                let series = args.out.join(format!("{name}_series.csv"));
                emit(Some(&series), |w| write_series_csv(w, &result))?;
            }
            let metrics: Vec<String> = result.metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!("{name}: {}", metrics.join(" "));
            Ok(true)
        }
        Command::Gradcheck { instances, out } => {
            let config = SuiteConfig {
                seed: cli.seed.unwrap_or(0),
                instances_per_kernel: instances,
                ..SuiteConfig::default()
            };
            let report = run_suite(&config)?;
            match &out {
                Some(p) => write_json(p, &report)?,
                None => emit(None, |w| {
                    serde_json::to_writer_pretty(&mut *w, &report)?;
                    writeln!(w)?;
                    Ok(())
                })?,
            }
            let failed = report.instances.iter().filter(|r| !r.passed).count();
            eprintln!("gradcheck: {} instances, {failed} failed", report.instances.len());
            Ok(report.passed)
        }
        Command::Bench { op, sizes, reps, out } => {
            let records = bench(op, &sizes, reps)?;
            emit(out.as_deref(), |w| write_bench_csv(w, &records))?;
            for direction in [Direction::Forward, Direction::Backward] {
                let subset: Vec<_> = records.iter().filter(|r| r.direction == direction).cloned().collect();
                if let Ok(slope) = scaling_fit(&subset) {
                    eprintln!("{op} {direction:?}: log-log slope {slope:.3}");
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
