//! Experiment configuration: an optional TOML file, overridden by flags.

use std::path::Path;

use dshap_core::density::{default_bandwidth_grid, KernelFamily};
use dshap_core::regression::{BoundParams, MCControls};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
    Density,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fast,
    Baseline,
    Bounds,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fast => "fast",
            Method::Baseline => "baseline",
            Method::Bounds => "bounds",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
    Uniform,
}

impl From<Kernel> for KernelFamily {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Gaussian => KernelFamily::Gaussian,
            Kernel::Uniform => KernelFamily::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Fully resolved experiment settings. Thresholds at or below zero disable
/// the corresponding early stop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    pub seed: u64,
    pub n_value_points: usize,
    pub n_test: usize,
    /// Cap on the background sample; density defaults to 2000.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_background: Option<usize>,
    /// Valuation horizon; defaults to `n_value_points`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Gate; defaults to `p + 3` for regression and classification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    pub gamma: f64,
    pub ridge: f64,
    pub max_inner: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub bound_side: BoundSide,
    pub bound_c: f64,
    pub bound_c_small: f64,
    pub bound_rho: f64,
    pub clamp_weights: bool,
    /// Ridge penalty of the logistic fits scored in point addition.
    pub logistic_penalty: f64,
    pub baseline_draws: usize,
    pub kernel: Kernel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub bandwidth_grid: Vec<f64>,
    pub folds: usize,
    pub mc_budget: usize,
    pub c_den: f64,
    pub repetitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Output destination; not echoed, so output bytes do not depend on it.
    #[serde(skip_serializing)]
    pub output: Option<std::path::PathBuf>,
    pub format: Format,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mc = MCControls::default();
        let bounds = BoundParams::default();
        Self {
            task: Task::Regression,
            method: Method::Fast,
            seed: 0,
            n_value_points: 200,
            n_test: 1000,
            n_background: None,
            m: None,
            q: None,
            gamma: 0.0,
            ridge: 0.0,
            max_inner: mc.max_inner,
            rho1: mc.rho1.unwrap_or(0.0),
            rho2: mc.rho2.unwrap_or(0.0),
            bound_side: BoundSide::Lower,
            bound_c: bounds.c_big,
            bound_c_small: bounds.c_small,
            bound_rho: bounds.rho.unwrap_or(0.0),
            clamp_weights: false,
            logistic_penalty: 1.0,
            baseline_draws: 1000,
            kernel: Kernel::Gaussian,
            bandwidth: None,
            bandwidth_grid: default_bandwidth_grid(),
            folds: 5,
            mc_budget: 2000,
            c_den: 0.0,
            repetitions: 50,
            threads: None,
            output: None,
            format: Format::Csv,
        }
    }
}

fn positive(x: f64) -> Option<f64> {
    (x > 0.0).then_some(x)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string().replace('\n', " ")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::Bounds && self.task == Task::Density {
            return Err(config_err("bounds exist only for regression and classification"));
        }
        if self.n_value_points == 0 {
            return Err(config_err("n_value_points must be at least 1"));
        }
        if self.method == Method::Baseline && self.baseline_draws == 0 {
            return Err(config_err("baseline_draws must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(config_err("repetitions must be at least 1"));
        }
        if !(self.logistic_penalty >= 0.0) || !self.logistic_penalty.is_finite() {
            return Err(config_err("logistic_penalty must be finite and nonnegative"));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads must be at least 1"));
        }
        if self.m == Some(0) {
            return Err(config_err("horizon m must be at least 1"));
        }
        self.mc_controls().validate()?;
        self.bound_params().validate()?;
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.m.unwrap_or(self.n_value_points)
    }

    pub fn gate(&self, p: usize) -> usize {
        match self.task {
            Task::Density => self.q.unwrap_or(1),
            _ => self.q.unwrap_or(p + 3),
        }
    }

    pub fn background_cap(&self) -> Option<usize> {
        match self.task {
            Task::Density => Some(self.n_background.unwrap_or(2000)),
            _ => self.n_background,
        }
    }

    pub fn mc_controls(&self) -> MCControls {
        MCControls {
            max_inner: self.max_inner,
            rho1: positive(self.rho1),
            rho2: positive(self.rho2),
        }
    }

    pub fn bound_params(&self) -> BoundParams {
        BoundParams {
            c_big: self.bound_c,
            c_small: self.bound_c_small,
            rho: positive(self.bound_rho),
        }
    }

    /// The configuration as `key = value` lines.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| BenchError::Serialize(e.to_string()))
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        serde_json::to_value(self).map_err(|e| BenchError::Serialize(e.to_string()))
    }
}
