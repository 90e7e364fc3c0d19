use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dshap_bench::commands::{
    run_bounds, run_point_addition_table, run_synergy_table, run_time_bench_table, run_value,
    DATA_STREAM,
};
use dshap_bench::config::{BoundSide, Format, Kernel, Method, Task};
use dshap_bench::datasets::{generate, load_csv, write_csv, Dataset, SyntheticKind, TargetColumn};
use dshap_bench::output::write_results;
use dshap_bench::time_bench::{TimingCell, TimingSettings};
use dshap_bench::{BenchError, ExperimentConfig, Result};
use dshap_core::RandomStream;

/// Distributional Shapley valuation experiments.
#[derive(Parser)]
#[command(name = "dshap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen {
        #[arg(long, value_enum)]
        kind: SyntheticKind,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Value points with the configured method.
    Value(Experiment),
    /// Lower and upper bounds per point.
    Bounds(Experiment),
    /// Value points with the Monte-Carlo baseline.
    Baseline(Experiment),
    /// Held-out utility as points are added in value order.
    PointAddition {
        #[command(flatten)]
        exp: Experiment,
        /// Also write the values of the first repetition here.
        #[arg(long)]
        values_output: Option<PathBuf>,
    },
    /// Time the fast estimators against the baseline.
    TimeBench {
        /// Cells as MxP, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "200x10")]
        cells: Vec<TimingCell>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "regression")]
        tasks: Vec<Task>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 500)]
        baseline_draws: usize,
        #[arg(long, default_value_t = 2)]
        baseline_points: usize,
        #[arg(long, default_value_t = 1000)]
        n_test: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Synergy threshold and probability of random pairs across bandwidths.
    SynergyScan {
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 0.2)]
        c_den: f64,
        #[arg(long, default_value_t = 5000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct Experiment {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV: feature columns, then the target unless --no-target.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["target_index", "no_target"])]
    target: Option<String>,
    #[arg(long, conflicts_with = "no_target")]
    target_index: Option<usize>,
    #[arg(long)]
    no_target: bool,
    #[arg(long)]
    no_header: bool,
    /// Generate the dataset instead of reading one.
    #[arg(long, value_enum)]
    synthetic: Option<SyntheticKind>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long, default_value_t = 10)]
    dim: usize,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<Task>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_value_points: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    n_background: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long)]
    rho1: Option<f64>,
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long, value_enum)]
    bound_side: Option<BoundSide>,
    #[arg(long)]
    bound_c: Option<f64>,
    #[arg(long)]
    bound_c_small: Option<f64>,
    #[arg(long)]
    bound_rho: Option<f64>,
    #[arg(long)]
    clamp_weights: bool,
    #[arg(long)]
    logistic_penalty: Option<f64>,
    #[arg(long)]
    baseline_draws: Option<usize>,
    #[arg(long, value_enum)]
    kernel: Option<Kernel>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    bandwidth_grid: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    mc_budget: Option<usize>,
    #[arg(long)]
    c_den: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

macro_rules! override_fields {
    ($cfg:ident, $args:ident; $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let a = self;
        override_fields!(cfg, a; task, method, seed, n_value_points, n_test, gamma, ridge,
            max_inner, rho1, rho2, bound_side, bound_c, bound_c_small, bound_rho, logistic_penalty, baseline_draws,
            kernel, bandwidth_grid, folds, mc_budget, c_den, repetitions, format);
        if a.n_background.is_some() {
            cfg.n_background = a.n_background;
        }
        if a.m.is_some() {
            cfg.m = a.m;
        }
        if a.q.is_some() {
            cfg.q = a.q;
        }
        if a.bandwidth.is_some() {
            cfg.bandwidth = a.bandwidth;
        }
        if a.threads.is_some() {
            cfg.threads = a.threads;
        }
        if a.output.is_some() {
            cfg.output = a.output;
        }
        cfg.clamp_weights |= a.clamp_weights;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl DataArgs {
    fn load(&self, cfg: &ExperimentConfig) -> Result<Dataset> {
        if let Some(path) = &self.input {
            let target = if self.no_target || (cfg.task == Task::Density && self.target.is_none() && self.target_index.is_none()) {
                TargetColumn::None
            } else if let Some(name) = &self.target {
                TargetColumn::Name(name.clone())
            } else if let Some(i) = self.target_index {
                TargetColumn::Index(i)
            } else {
                TargetColumn::Last
            };
            return load_csv(path, &target, !self.no_header);
        }
        let kind = self.synthetic.ok_or_else(|| {
            BenchError::Config("give --input or --synthetic".into())
        })?;
        let default_background = if cfg.task == Task::Density { 2000 } else { 5000 };
        let rows = self
            .rows
            .unwrap_or(cfg.n_value_points + cfg.n_test + default_background);
        generate(kind, rows, self.dim, &mut RandomStream::new(cfg.seed, DATA_STREAM))
    }
}

impl Experiment {
    fn resolve(self) -> Result<(ExperimentConfig, Dataset)> {
        let data = self.data;
        let cfg = self.cfg.resolve()?;
        let dataset = data.load(&cfg)?;
        Ok((cfg, dataset))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            kind,
            rows,
            dim,
            seed,
            output,
        } => {
            let data = generate(kind, rows, dim, &mut RandomStream::new(seed, DATA_STREAM))?;
            write_csv(&data, &output)
        }
        Command::Value(exp) => {
            let (cfg, data) = exp.resolve()?;
            write_results(&run_value(&cfg, &data)?, cfg.output.as_deref(), cfg.format)
        }
        Command::Baseline(exp) => {
            let (mut cfg, data) = exp.resolve()?;
            cfg.method = Method::Baseline;
            write_results(&run_value(&cfg, &data)?, cfg.output.as_deref(), cfg.format)
        }
        Command::Bounds(exp) => {
            let (cfg, data) = exp.resolve()?;
            write_results(&run_bounds(&cfg, &data)?, cfg.output.as_deref(), cfg.format)
        }
        Command::PointAddition { exp, values_output } => {
            let (cfg, data) = exp.resolve()?;
            let table = run_point_addition_table(&cfg, &data, values_output.as_deref())?;
            write_results(&table, cfg.output.as_deref(), cfg.format)
        }
        Command::TimeBench {
            cells,
            tasks,
            repetitions,
            baseline_draws,
            baseline_points,
            n_test,
            threads,
            seed,
            out,
        } => {
            let settings = TimingSettings {
                repetitions,
                baseline_draws,
                baseline_points,
                n_test,
                threads,
                seed,
            };
            let table = run_time_bench_table(&cells, &tasks, &settings)?;
            write_results(&table, out.output.as_deref(), out.format)
        }
        Command::SynergyScan {
            grid,
            m,
            c_den,
            draws,
            seed,
            out,
        } => {
            let grid = if grid.is_empty() {
                (1..=17).map(|i| 0.02 * i as f64).collect()
            } else {
                grid
            };
            let table = run_synergy_table(&grid, m, c_den, draws, seed)?;
            write_results(&table, out.output.as_deref(), out.format)
        }
    }
}

/// One-line error report: `error kind=<tag> message=<JSON string>`.
fn report(kind: &str, message: &str) {
    let flat = message.trim().replace('\n', " ");
    eprintln!("error kind={kind} message={}", serde_json::Value::from(flat));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            report("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
