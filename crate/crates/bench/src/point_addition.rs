//! Point-addition experiment: add the valued points in value order and
//! track held-out utility after each addition.

use dshap_core::baseline::{AccuracyUtility, DensityUtility, RegressionUtility, RiskMode, Utility};
use dshap_core::{RandomStream, RunningStats};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::datasets::Dataset;
use crate::error::{BenchError, Result};
use crate::valuation::{prepare, split_rows, value_points, Model, Split, ValueRow};

const SPLIT_STREAM: u64 = 1 << 50;
const VALUE_STREAM: u64 = (1 << 50) + 1;
const RANDOM_ORDER_STREAM: u64 = (1 << 50) + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ordering {
    Largest,
    Lowest,
    Random,
}

impl Ordering {
    pub const ALL: [Ordering; 3] = [Ordering::Largest, Ordering::Lowest, Ordering::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Ordering::Largest => "largest",
            Ordering::Lowest => "lowest",
            Ordering::Random => "random",
        }
    }
}

/// Dataset row indices of the valued points in the given order. Ties keep
/// value-set order; `rng` is used only for the random ordering.
pub fn rank(values: &[ValueRow], ordering: Ordering, rng: &mut RandomStream) -> Vec<usize> {
    let mut rows: Vec<&ValueRow> = values.iter().collect();
    match ordering {
        Ordering::Largest => rows.sort_by(|a, b| b.value.total_cmp(&a.value)),
        Ordering::Lowest => rows.sort_by(|a, b| a.value.total_cmp(&b.value)),
        Ordering::Random => rng.shuffle(&mut rows),
    }
    rows.into_iter().map(|r| r.index).collect()
}

/// Held-out utility of a model trained on a growing prefix.
pub enum Scorer {
    Regression(RegressionUtility),
    Classification(AccuracyUtility),
    Density(DensityUtility),
}

impl Scorer {
    /// Regression scores `2σ̂² − MSE` gated at `p + 1`; classification scores
    /// the accuracy of a ridge-penalised logistic fit; density scores the
    /// negative ISE without the `∫p²` constant.
    pub fn new(cfg: &ExperimentConfig, data: &Dataset, split: &Split, model: &Model) -> Result<Self> {
        Ok(match model {
            Model::Regression(env) => Scorer::Regression(RegressionUtility::new(
                RiskMode::Heldout {
                    x: data.design(&split.test),
                    y: data.response(&split.test)?,
                },
                2.0 * env.sigma2,
                data.dim() + 1,
                0.0,
            )?),
            Model::Classification(_) => Scorer::Classification(AccuracyUtility::new(
                data.design(&split.test),
                data.response(&split.test)?.iter().copied().collect(),
                1,
            )?
            .with_penalty(cfg.logistic_penalty)?),
            Model::Density(kernel) => Scorer::Density(DensityUtility::new(
                kernel.clone(),
                0.0,
                data.points(&split.test),
                None,
            )?),
        })
    }

    /// Utility after each of `0..=order.len()` additions; failed fits are NaN.
    pub fn curve(&self, data: &Dataset, order: &[usize]) -> Result<Vec<f64>> {
        fn run<U: Utility>(u: &U, items: &[U::Item]) -> Vec<f64> {
            let refs: Vec<&U::Item> = items.iter().collect();
            (0..=refs.len())
                .map(|k| u.evaluate(&refs[..k]).unwrap_or(f64::NAN))
                .collect()
        }
        Ok(match self {
            Scorer::Regression(u) => run(u, &data.samples(order)?),
            Scorer::Classification(u) => run(u, &data.samples(order)?),
            Scorer::Density(u) => run(u, &data.points(order)),
        })
    }
}

/// One repetition: its split, the values, and one curve per ordering in
/// [`Ordering::ALL`] order.
#[derive(Clone, Debug)]
pub struct RepetitionOutcome {
    pub split: Split,
    pub values: Vec<ValueRow>,
    pub orders: Vec<Vec<usize>>,
    pub curves: Vec<Vec<f64>>,
}

pub fn run_repetition(cfg: &ExperimentConfig, data: &Dataset, rng: &RandomStream) -> Result<RepetitionOutcome> {
    let split = split_rows(
        data.len(),
        cfg.n_value_points,
        cfg.n_test,
        cfg.background_cap(),
        &mut rng.substream(SPLIT_STREAM),
    )?;
    if split.test.is_empty() {
        return Err(BenchError::Config("point addition needs a nonempty test set".into()));
    }
    let model = prepare(cfg, data, &split, rng)?;
    let values = value_points(cfg, data, &split, &model, &rng.substream(VALUE_STREAM))?;
    let scorer = Scorer::new(cfg, data, &split, &model)?;
    let mut shuffle = rng.substream(RANDOM_ORDER_STREAM);
    let orders: Vec<Vec<usize>> = Ordering::ALL
        .iter()
        .map(|&o| rank(&values, o, &mut shuffle))
        .collect();
    let curves = orders
        .iter()
        .map(|o| scorer.curve(data, o))
        .collect::<Result<Vec<_>>>()?;
    Ok(RepetitionOutcome {
        split,
        values,
        orders,
        curves,
    })
}

/// Mean held-out utility per step over the repetitions that produced a value.
#[derive(Clone, Debug, PartialEq)]
pub struct PointAdditionCurve {
    pub ordering: Ordering,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Repetitions contributing to each step.
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointAdditionResult {
    pub curves: Vec<PointAdditionCurve>,
    pub repetitions: usize,
    /// Repetitions lost to numerical failures during fitting or valuation.
    pub failed_repetitions: usize,
}

/// Runs `cfg.repetitions` independent repetitions, repetition `r` on
/// sub-stream `r`, in parallel. Numerical failures drop the repetition;
/// configuration errors abort.
pub fn run_point_addition(cfg: &ExperimentConfig, data: &Dataset, rng: &RandomStream) -> Result<PointAdditionResult> {
    cfg.validate()?;
    let outcomes: Vec<Result<RepetitionOutcome>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(cfg, data, &rng.substream(r as u64)))
        .collect();
    let mut kept = Vec::new();
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(o) => kept.push(o),
            Err(BenchError::Core(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    let steps = cfg.n_value_points + 1;
    let curves = Ordering::ALL
        .iter()
        .enumerate()
        .map(|(slot, &ordering)| {
            let mut means = Vec::with_capacity(steps);
            let mut std_errors = Vec::with_capacity(steps);
            let mut counts = Vec::with_capacity(steps);
            for k in 0..steps {
                let mut stats = RunningStats::new();
                for o in &kept {
                    let v = o.curves[slot][k];
                    if v.is_finite() {
                        stats.push(v);
                    }
                }
                let n = stats.count() as usize;
                means.push(if n == 0 { f64::NAN } else { stats.mean() });
                std_errors.push(if n < 2 { f64::NAN } else { stats.std_error() });
                counts.push(n);
            }
            PointAdditionCurve {
                ordering,
                means,
                std_errors,
                counts,
            }
        })
        .collect();
    Ok(PointAdditionResult {
        curves,
        repetitions: cfg.repetitions,
        failed_repetitions: failed,
    })
}
