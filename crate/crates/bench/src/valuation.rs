//! Per-point valuation of a dataset split.

use dshap_core::baseline::{
    dshapley_mc_baseline, AccuracyUtility, BaselineControls, DensityUtility, RegressionUtility,
    RiskMode, Sample,
};
use dshap_core::classification::{
    dshapley_binary_bounds, fit_binary_background, transform_query, BinaryBackground, IRLS_MAX_ITER,
    IRLS_TOL,
};
use dshap_core::density::{dshapley_density, select_bandwidth, DensityValueRequest, KernelSpec};
use dshap_core::regression::{
    dshapley_regression_bounds, dshapley_regression_exact, fit_background_matrix, BoundsEstimate,
    PointQuery, RegressionEnvironment,
};
use dshap_core::{RandomStream, ValueEstimate};
use rayon::prelude::*;

use crate::config::{BoundSide, ExperimentConfig, Method, Task};
use crate::datasets::Dataset;
use crate::error::{config_err, Result};

/// Sub-stream reserved for bandwidth selection; point streams use their
/// position in the value set.
pub const BANDWIDTH_STREAM: u64 = 1 << 48;

/// Row indices of the value set, held-out test set and background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub value: Vec<usize>,
    pub test: Vec<usize>,
    pub background: Vec<usize>,
}

/// Shuffles the rows and cuts them into value, test and background sets.
/// The background is every remaining row, truncated to `cap` when given.
pub fn split_rows(
    n: usize,
    n_value: usize,
    n_test: usize,
    cap: Option<usize>,
    rng: &mut RandomStream,
) -> Result<Split> {
    if n_value + n_test >= n {
        return Err(config_err(format!(
            "{n} rows cannot hold {n_value} value points, {n_test} test points and a background"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut background = order[n_value + n_test..].to_vec();
    if let Some(c) = cap {
        background.truncate(c.max(1));
    }
    Ok(Split {
        value: order[..n_value].to_vec(),
        test: order[n_value..n_value + n_test].to_vec(),
        background,
    })
}

/// Background fit shared by every point of a split.
#[derive(Clone, Debug)]
pub enum Model {
    Regression(RegressionEnvironment),
    Classification(BinaryBackground),
    Density(KernelSpec),
}

impl Model {
    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            Model::Density(k) => Some(k.bandwidth),
            _ => None,
        }
    }
}

/// Fits the background model for the configured task.
pub fn prepare(cfg: &ExperimentConfig, data: &Dataset, split: &Split, rng: &RandomStream) -> Result<Model> {
    let p = data.dim();
    let m = cfg.horizon();
    let q = cfg.gate(p);
    Ok(match cfg.task {
        Task::Regression => {
            let x = data.design(&split.background);
            let y = data.response(&split.background)?;
            Model::Regression(fit_background_matrix(&x, &y, cfg.ridge, m, q, cfg.gamma)?)
        }
        Task::Classification => {
            let x = data.design(&split.background);
            let y: Vec<f64> = data.response(&split.background)?.iter().copied().collect();
            Model::Classification(fit_binary_background(&x, &y, IRLS_TOL, IRLS_MAX_ITER)?)
        }
        Task::Density => {
            let h = match cfg.bandwidth {
                Some(h) => h,
                None => select_bandwidth(
                    &data.points(&split.background),
                    cfg.kernel.into(),
                    &cfg.bandwidth_grid,
                    cfg.folds,
                    &mut rng.substream(BANDWIDTH_STREAM),
                )?,
            };
            Model::Density(KernelSpec::new(cfg.kernel.into(), h, p)?)
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueRow {
    pub index: usize,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
    pub skipped_terms: usize,
}

fn row(index: usize, est: ValueEstimate) -> ValueRow {
    ValueRow {
        index,
        value: est.value,
        std_error: est.std_error,
    }
}

fn bounds_for(cfg: &ExperimentConfig, data: &Dataset, model: &Model, i: usize) -> Result<BoundsEstimate> {
    let params = cfg.bound_params();
    match model {
        Model::Regression(env) => {
            let q = PointQuery::new(data.features[i].clone(), data.labels()?[i], env)?;
            Ok(dshapley_regression_bounds(&q, env, &params)?)
        }
        Model::Classification(bg) => {
            let q = transform_query(
                &data.features[i],
                data.labels()?[i],
                &bg.state,
                &bg.sigma_tilde_inv,
                cfg.clamp_weights,
            )?;
            Ok(dshapley_binary_bounds(&q, cfg.horizon(), cfg.gate(data.dim()), &params)?)
        }
        Model::Density(_) => Err(config_err("bounds exist only for regression and classification")),
    }
}

/// Lower and upper bounds for every point of the value set.
pub fn bound_points(cfg: &ExperimentConfig, data: &Dataset, split: &Split, model: &Model) -> Result<Vec<BoundRow>> {
    split
        .value
        .par_iter()
        .map(|&i| {
            let b = bounds_for(cfg, data, model, i)?;
            Ok(BoundRow {
                index: i,
                lower: b.lower,
                upper: b.upper,
                skipped_terms: b.skipped_terms,
            })
        })
        .collect()
}

fn fast_value(
    cfg: &ExperimentConfig,
    data: &Dataset,
    model: &Model,
    background: &[Vec<f64>],
    i: usize,
    mut stream: RandomStream,
) -> Result<ValueRow> {
    match model {
        Model::Regression(env) => {
            let q = PointQuery::new(data.features[i].clone(), data.labels()?[i], env)?;
            Ok(row(i, dshapley_regression_exact(&q, env, &cfg.mc_controls(), &mut stream)?))
        }
        // The classification fast path is the lower bound.
        Model::Classification(_) => {
            let b = bounds_for(cfg, data, model, i)?;
            Ok(ValueRow {
                index: i,
                value: b.lower,
                std_error: 0.0,
            })
        }
        Model::Density(kernel) => {
            let req = DensityValueRequest::new(vec![data.features[i].clone()], cfg.horizon())
                .with_budget(cfg.mc_budget);
            Ok(row(i, dshapley_density(&req, background, kernel, &mut stream)?))
        }
    }
}

/// Values every point of the value set with the configured method. Point
/// `k` of the value set draws from sub-stream `k`.
pub fn value_points(
    cfg: &ExperimentConfig,
    data: &Dataset,
    split: &Split,
    model: &Model,
    rng: &RandomStream,
) -> Result<Vec<ValueRow>> {
    match cfg.method {
        Method::Fast => {
            let background = match model {
                Model::Density(_) => data.points(&split.background),
                _ => Vec::new(),
            };
            split
                .value
                .par_iter()
                .enumerate()
                .map(|(k, &i)| fast_value(cfg, data, model, &background, i, rng.substream(k as u64)))
                .collect()
        }
        Method::Bounds => Ok(bound_points(cfg, data, split, model)?
            .into_iter()
            .map(|b| ValueRow {
                index: b.index,
                value: match cfg.bound_side {
                    BoundSide::Lower => b.lower,
                    BoundSide::Upper => b.upper,
                },
                std_error: 0.0,
            })
            .collect()),
        Method::Baseline => baseline_values(cfg, data, split, model, rng),
    }
}

/// The model-refitting Monte-Carlo reference, scored on the test set and
/// sampling coalitions from the background with replacement.
pub fn baseline_values(
    cfg: &ExperimentConfig,
    data: &Dataset,
    split: &Split,
    model: &Model,
    rng: &RandomStream,
) -> Result<Vec<ValueRow>> {
    if split.test.is_empty() {
        return Err(config_err("the baseline needs a nonempty test set"));
    }
    let controls = BaselineControls::new(cfg.horizon(), cfg.baseline_draws);
    let bg = &split.background;
    match model {
        Model::Regression(env) => {
            let utility = RegressionUtility::new(
                RiskMode::Heldout {
                    x: data.design(&split.test),
                    y: data.response(&split.test)?,
                },
                2.0 * env.sigma2,
                cfg.gate(data.dim()),
                cfg.gamma,
            )?;
            let pool = data.samples(bg)?;
            let sampler = |r: &mut RandomStream| pool[r.index(pool.len())].clone();
            value_each(split, rng, |i, stream| {
                Ok(dshapley_mc_baseline(&data.sample(i)?, &sampler, &utility, &controls, stream)?)
            })
        }
        Model::Classification(_) => {
            let utility = AccuracyUtility::new(
                data.design(&split.test),
                data.response(&split.test)?.iter().copied().collect(),
                cfg.gate(data.dim()),
            )?;
            let pool: Vec<Sample> = data.samples(bg)?;
            let sampler = |r: &mut RandomStream| pool[r.index(pool.len())].clone();
            value_each(split, rng, |i, stream| {
                Ok(dshapley_mc_baseline(&data.sample(i)?, &sampler, &utility, &controls, stream)?)
            })
        }
        Model::Density(kernel) => {
            let utility = DensityUtility::new(kernel.clone(), cfg.c_den, data.points(&split.test), None)?;
            let pool = data.points(bg);
            let sampler = |r: &mut RandomStream| pool[r.index(pool.len())].clone();
            value_each(split, rng, |i, stream| {
                Ok(dshapley_mc_baseline(&data.features[i], &sampler, &utility, &controls, stream)?)
            })
        }
    }
}

fn value_each(
    split: &Split,
    rng: &RandomStream,
    f: impl Fn(usize, &RandomStream) -> Result<ValueEstimate>,
) -> Result<Vec<ValueRow>> {
    split
        .value
        .iter()
        .enumerate()
        .map(|(k, &i)| Ok(row(i, f(i, &rng.substream(k as u64))?)))
        .collect()
}
