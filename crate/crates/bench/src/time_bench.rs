//! Wall-clock comparison of the fast estimators against the Monte-Carlo
//! baseline.
//!
//! Each cell draws a synthetic dataset of `m` rows in `p` dimensions plus a
//! held-out set. The fast method values all `m` rows using those rows as the
//! background; the baseline values the first `baseline_points` rows with a
//! fixed number of draws. Both are reported per valued point. Bandwidth
//! selection runs before the clock starts, since both methods share it.

use std::str::FromStr;
use std::time::Instant;

use dshap_core::RandomStream;

use crate::config::{ExperimentConfig, Method, Task};
use crate::datasets::{generate, SyntheticKind};
use crate::error::{config_err, BenchError, Result};
use crate::valuation::{prepare, value_points, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimingCell {
    pub m: usize,
    pub p: usize,
}

impl FromStr for TimingCell {
    type Err = BenchError;

    /// Parses `MxP`, for example `200x10`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || config_err(format!("timing cell {s:?} is not of the form MxP"));
        let (m, p) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let m: usize = m.trim().parse().map_err(|_| bad())?;
        let p: usize = p.trim().parse().map_err(|_| bad())?;
        if m == 0 || p == 0 {
            return Err(bad());
        }
        Ok(Self { m, p })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingSettings {
    pub repetitions: usize,
    pub baseline_draws: usize,
    pub baseline_points: usize,
    pub n_test: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self {
            repetitions: 5,
            baseline_draws: 500,
            baseline_points: 2,
            n_test: 1000,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub task: Task,
    pub m: usize,
    pub p: usize,
    /// Mean seconds per valued point.
    pub fast_seconds: f64,
    pub baseline_seconds: f64,
    pub speedup: f64,
}

fn kind_for(task: Task) -> SyntheticKind {
    match task {
        Task::Regression => SyntheticKind::GaussianR,
        Task::Classification => SyntheticKind::ShiftedC,
        Task::Density => SyntheticKind::Normal,
    }
}

fn time_cell(task: Task, cell: TimingCell, s: &TimingSettings, rng: &RandomStream) -> Result<(f64, f64)> {
    let TimingCell { m, p } = cell;
    let data = generate(kind_for(task), m + s.n_test, p, &mut rng.substream(0))?;
    let mut cfg = ExperimentConfig {
        task,
        n_value_points: m,
        m: Some(m),
        baseline_draws: s.baseline_draws,
        ..ExperimentConfig::default()
    };
    let full = Split {
        value: (0..m).collect(),
        test: (m..m + s.n_test).collect(),
        background: (0..m).collect(),
    };
    if task == Task::Density {
        cfg.bandwidth = prepare(&cfg, &data, &full, rng)?.bandwidth();
    }

    cfg.method = Method::Fast;
    let start = Instant::now();
    let model = prepare(&cfg, &data, &full, rng)?;
    value_points(&cfg, &data, &full, &model, &rng.substream(1))?;
    let fast = start.elapsed().as_secs_f64() / m as f64;

    cfg.method = Method::Baseline;
    let few = Split {
        value: (0..s.baseline_points.min(m)).collect(),
        ..full.clone()
    };
    let start = Instant::now();
    let model = prepare(&cfg, &data, &few, rng)?;
    value_points(&cfg, &data, &few, &model, &rng.substream(2))?;
    let baseline = start.elapsed().as_secs_f64() / few.value.len() as f64;
    Ok((fast, baseline))
}

/// Times every task on every cell, averaging over repetitions. The timed
/// work runs in a pool of `settings.threads` threads.
pub fn run_time_bench(cells: &[TimingCell], tasks: &[Task], settings: &TimingSettings) -> Result<Vec<TimingRow>> {
    if cells.is_empty() || tasks.is_empty() {
        return Err(config_err("timing grid and task list must be nonempty"));
    }
    if settings.repetitions == 0 || settings.baseline_points == 0 || settings.baseline_draws == 0 {
        return Err(config_err("repetitions, baseline points and draws must be at least 1"));
    }
    if settings.threads == 0 || settings.n_test == 0 {
        return Err(config_err("threads and n_test must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads)
        .build()
        .map_err(|e| config_err(e.to_string()))?;
    let root = RandomStream::new(settings.seed, 0);
    let mut rows = Vec::new();
    for (ci, &cell) in cells.iter().enumerate() {
        for (ti, &task) in tasks.iter().enumerate() {
            let mut fast = 0.0;
            let mut baseline = 0.0;
            for r in 0..settings.repetitions {
                let stream = root.substream(((ci * tasks.len() + ti) * settings.repetitions + r) as u64);
                let (f, b) = pool.install(|| time_cell(task, cell, settings, &stream))?;
                fast += f;
                baseline += b;
            }
            let reps = settings.repetitions as f64;
            rows.push(TimingRow {
                task,
                m: cell.m,
                p: cell.p,
                fast_seconds: fast / reps,
                baseline_seconds: baseline / reps,
                speedup: baseline / fast,
            });
        }
    }
    Ok(rows)
}
