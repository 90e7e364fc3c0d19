//! Subcommand bodies: each turns a resolved configuration and dataset into a
//! result table.

use std::path::Path;

use dshap_core::density::synergy_scan;
use dshap_core::RandomStream;
use serde_json::Value;

use crate::config::{ExperimentConfig, Method, Task};
use crate::datasets::Dataset;
use crate::error::{config_err, Result};
use crate::output::{write_results, Table};
use crate::point_addition::{run_point_addition, run_repetition, Ordering};
use crate::time_bench::{run_time_bench, TimingCell, TimingSettings};
use crate::valuation::{bound_points, prepare, split_rows, value_points, Split, ValueRow};

/// Stream for the synthetic dataset; experiments run on stream 0.
pub const DATA_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 1 << 52;
const VALUE_STREAM: u64 = (1 << 52) + 1;

pub const VALUE_COLUMNS: [&str; 7] = ["index", "value", "std_error", "method", "m", "q", "seed"];
pub const BOUND_COLUMNS: [&str; 7] = ["index", "lower", "upper", "skipped_terms", "m", "q", "seed"];
pub const CURVE_COLUMNS: [&str; 5] = ["ordering", "step", "utility_mean", "utility_stderr", "repetitions"];
pub const TIMING_COLUMNS: [&str; 6] = ["task", "m", "p", "fast_seconds", "baseline_seconds", "speedup"];
pub const SYNERGY_COLUMNS: [&str; 3] = ["h", "threshold", "probability"];

fn metadata(cfg: &ExperimentConfig, command: &str, data: Option<&Dataset>) -> Result<Value> {
    let mut meta = cfg.to_json()?;
    if let Value::Object(map) = &mut meta {
        map.insert("command".into(), command.into());
        if let Some(d) = data {
            map.insert("rows".into(), d.len().into());
            map.insert("dim".into(), d.dim().into());
        }
    }
    Ok(meta)
}

/// Runs `f` in a pool of `cfg.threads` threads, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| config_err(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn value_split(cfg: &ExperimentConfig, data: &Dataset, root: &RandomStream) -> Result<Split> {
    if cfg.n_value_points > data.len() {
        return Err(config_err(format!(
            "n_value_points = {} exceeds the {} rows available",
            cfg.n_value_points,
            data.len()
        )));
    }
    let n_test = if cfg.method == Method::Baseline { cfg.n_test } else { 0 };
    split_rows(
        data.len(),
        cfg.n_value_points,
        n_test,
        cfg.background_cap(),
        &mut root.substream(SPLIT_STREAM),
    )
}

pub fn values_table(cfg: &ExperimentConfig, rows: &[ValueRow], gate: usize, meta: Value) -> Result<Table> {
    let mut t = Table::new(&VALUE_COLUMNS).with_metadata(meta);
    for r in rows {
        t.push(vec![
            r.index.into(),
            r.value.into(),
            r.std_error.into(),
            cfg.method.as_str().into(),
            cfg.horizon().into(),
            gate.into(),
            cfg.seed.into(),
        ])?;
    }
    Ok(t)
}

/// Values a random subset of `n_value_points` rows. The remaining rows are
/// the background; the baseline also holds out `n_test` rows for scoring.
pub fn run_value(cfg: &ExperimentConfig, data: &Dataset) -> Result<Table> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let root = RandomStream::new(cfg.seed, 0);
        let split = value_split(cfg, data, &root)?;
        let model = prepare(cfg, data, &split, &root)?;
        let rows = value_points(cfg, data, &split, &model, &root.substream(VALUE_STREAM))?;
        let mut meta = metadata(cfg, "value", Some(data))?;
        if let (Some(h), Value::Object(map)) = (model.bandwidth(), &mut meta) {
            map.insert("selected_bandwidth".into(), h.into());
        }
        values_table(cfg, &rows, cfg.gate(data.dim()), meta)
    })
}

pub fn run_bounds(cfg: &ExperimentConfig, data: &Dataset) -> Result<Table> {
    let cfg = ExperimentConfig {
        method: Method::Bounds,
        ..cfg.clone()
    };
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let root = RandomStream::new(cfg.seed, 0);
        let split = value_split(&cfg, data, &root)?;
        let model = prepare(&cfg, data, &split, &root)?;
        let rows = bound_points(&cfg, data, &split, &model)?;
        let mut t = Table::new(&BOUND_COLUMNS).with_metadata(metadata(&cfg, "bounds", Some(data))?);
        let gate = cfg.gate(data.dim());
        for r in rows {
            t.push(vec![
                r.index.into(),
                r.lower.into(),
                r.upper.into(),
                r.skipped_terms.into(),
                cfg.horizon().into(),
                gate.into(),
                cfg.seed.into(),
            ])?;
        }
        Ok(t)
    })
}

/// Runs the point-addition experiment. When `values_out` is given, the
/// values of repetition 0 are written there in the values schema.
pub fn run_point_addition_table(
    cfg: &ExperimentConfig,
    data: &Dataset,
    values_out: Option<&Path>,
) -> Result<Table> {
    cfg.validate()?;
    if cfg.n_value_points > data.len() {
        return Err(config_err("n_value_points exceeds the dataset size"));
    }
    with_threads(cfg.threads, || {
        let root = RandomStream::new(cfg.seed, 0);
        let result = run_point_addition(cfg, data, &root)?;
        if let Some(path) = values_out {
            let rep = run_repetition(cfg, data, &root.substream(0))?;
            let meta = metadata(cfg, "point-addition", Some(data))?;
            let t = values_table(cfg, &rep.values, cfg.gate(data.dim()), meta)?.meta("repetition", 0);
            write_results(&t, Some(path), cfg.format)?;
        }
        let mut t = Table::new(&CURVE_COLUMNS)
            .with_metadata(metadata(cfg, "point-addition", Some(data))?)
            .meta("failed_repetitions", result.failed_repetitions);
        for curve in &result.curves {
            for k in 0..curve.means.len() {
                t.push(vec![
                    curve.ordering.as_str().into(),
                    k.into(),
                    curve.means[k].into(),
                    curve.std_errors[k].into(),
                    curve.counts[k].into(),
                ])?;
            }
        }
        Ok(t)
    })
}

pub fn run_time_bench_table(cells: &[TimingCell], tasks: &[Task], settings: &TimingSettings) -> Result<Table> {
    let rows = run_time_bench(cells, tasks, settings)?;
    let mut t = Table::new(&TIMING_COLUMNS)
        .meta("command", "time-bench")
        .meta("repetitions", settings.repetitions)
        .meta("baseline_draws", settings.baseline_draws)
        .meta("baseline_points", settings.baseline_points)
        .meta("n_test", settings.n_test)
        .meta("threads", settings.threads)
        .meta("seed", settings.seed);
    for r in rows {
        let task = match r.task {
            Task::Regression => "regression",
            Task::Classification => "classification",
            Task::Density => "density",
        };
        t.push(vec![
            task.into(),
            r.m.into(),
            r.p.into(),
            r.fast_seconds.into(),
            r.baseline_seconds.into(),
            r.speedup.into(),
        ])?;
    }
    Ok(t)
}

pub fn run_synergy_table(grid: &[f64], m: usize, c_den: f64, draws: usize, seed: u64) -> Result<Table> {
    let scan = synergy_scan(grid, m, c_den, draws, &RandomStream::new(seed, 0))?;
    let mut t = Table::new(&SYNERGY_COLUMNS)
        .meta("command", "synergy-scan")
        .meta("m", m)
        .meta("c_den", c_den)
        .meta("draws", draws)
        .meta("seed", seed);
    for r in scan.records {
        t.push(vec![
            r.h.into(),
            r.threshold.unwrap_or(f64::NAN).into(),
            r.probability.into(),
        ])?;
    }
    Ok(t)
}

/// Orders the rows of a values table the way the largest-first or
/// lowest-first curve consumes them.
pub fn ranking_from_values(indices: &[usize], values: &[f64], ordering: Ordering) -> Vec<usize> {
    let rows: Vec<ValueRow> = indices
        .iter()
        .zip(values)
        .map(|(&index, &value)| ValueRow {
            index,
            value,
            std_error: 0.0,
        })
        .collect();
    crate::point_addition::rank(&rows, ordering, &mut RandomStream::new(0, 0))
}
