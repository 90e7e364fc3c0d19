//! Synthetic generators and CSV ingestion.
//!
//! A [`Dataset`] holds feature rows and an optional target column. Synthetic
//! generators also record the coefficients they used, so analytic utilities
//! can be built against the truth.

use std::path::Path;
use std::str::FromStr;

use dshap_core::baseline::Sample;
use dshap_core::numerics::inv_logit;
use dshap_core::RandomStream;
use nalgebra::{DMatrix, DVector};

use crate::error::{config_err, BenchError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub target_name: Option<String>,
    /// Generating coefficients, when known.
    pub truth: Option<Vec<f64>>,
}

impl Dataset {
    fn new(features: Vec<Vec<f64>>, target: Option<Vec<f64>>, truth: Option<Vec<f64>>) -> Self {
        let dim = features.first().map_or(0, Vec::len);
        Self {
            feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
            target_name: target.as_ref().map(|_| "y".to_string()),
            features,
            target,
            truth,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Target column, or a configuration error for feature-only data.
    pub fn labels(&self) -> Result<&[f64]> {
        self.target
            .as_deref()
            .ok_or_else(|| config_err("task needs a target column but the dataset has none"))
    }

    pub fn sample(&self, i: usize) -> Result<Sample> {
        Ok(Sample::new(self.features[i].clone(), self.labels()?[i]))
    }

    pub fn samples(&self, rows: &[usize]) -> Result<Vec<Sample>> {
        rows.iter().map(|&i| self.sample(i)).collect()
    }

    pub fn design(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.dim(), |r, c| self.features[rows[r]][c])
    }

    pub fn response(&self, rows: &[usize]) -> Result<DVector<f64>> {
        let y = self.labels()?;
        Ok(DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i])))
    }

    pub fn points(&self, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter().map(|&i| self.features[i].clone()).collect()
    }
}

/// Named synthetic distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Linear model with random coefficients and unit noise.
    GaussianR,
    /// Logistic model on three standard normal inputs.
    GaussianC,
    /// Balanced labels with a class-shifted first input.
    ShiftedC,
    /// Uniform on the unit cube, no target.
    Uniform,
    /// Standard normal, no target.
    Normal,
}

impl FromStr for SyntheticKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        <Self as clap::ValueEnum>::from_str(s, true).map_err(|_| config_err(format!("unknown dataset kind {s:?}")))
    }
}

/// Draws a dataset of `m` rows; `p` is ignored by the fixed-dimension kinds.
pub fn generate(kind: SyntheticKind, m: usize, p: usize, rng: &mut RandomStream) -> Result<Dataset> {
    if m == 0 || p == 0 {
        return Err(config_err("generators need at least one row and one column"));
    }
    Ok(match kind {
        SyntheticKind::GaussianR => gen_gaussian_r(m, p, rng),
        SyntheticKind::GaussianC => gen_gaussian_c(m, rng),
        SyntheticKind::ShiftedC => gen_shifted_c(m, p, rng),
        SyntheticKind::Uniform => Dataset::new(
            (0..m).map(|_| (0..p).map(|_| rng.uniform()).collect()).collect(),
            None,
            None,
        ),
        SyntheticKind::Normal => Dataset::new(
            (0..m).map(|_| (0..p).map(|_| rng.standard_normal()).collect()).collect(),
            None,
            None,
        ),
    })
}

/// `β ~ N(0, I)` once, then `x ~ N(0, I)` and `y = xᵀβ + ε` with unit noise.
pub fn gen_gaussian_r(m: usize, p: usize, rng: &mut RandomStream) -> Dataset {
    let beta: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
    let mut features = Vec::with_capacity(m);
    let mut target = Vec::with_capacity(m);
    for _ in 0..m {
        let x: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let y = x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.standard_normal();
        features.push(x);
        target.push(y);
    }
    Dataset::new(features, Some(target), Some(beta))
}

/// `x ~ N(0, I₃)` and `y ~ Bernoulli(inv_logit(2·x₁))`.
pub fn gen_gaussian_c(m: usize, rng: &mut RandomStream) -> Dataset {
    let beta = vec![2.0, 0.0, 0.0];
    let mut features = Vec::with_capacity(m);
    let mut target = Vec::with_capacity(m);
    for _ in 0..m {
        let x: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
        let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let y = if rng.uniform() < inv_logit(eta) { 1.0 } else { 0.0 };
        features.push(x);
        target.push(y);
    }
    Dataset::new(features, Some(target), Some(beta))
}

/// `y ~ Bernoulli(1/2)` and `x ~ N((2y, 0, …, 0), I_p)`.
pub fn gen_shifted_c(m: usize, p: usize, rng: &mut RandomStream) -> Dataset {
    let mut features = Vec::with_capacity(m);
    let mut target = Vec::with_capacity(m);
    for _ in 0..m {
        let y = if rng.uniform() < 0.5 { 1.0 } else { 0.0 };
        let mut x: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        x[0] += 2.0 * y;
        features.push(x);
        target.push(y);
    }
    Dataset::new(features, Some(target), None)
}

/// Which column of a CSV holds the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetColumn {
    None,
    Last,
    Name(String),
    Index(usize),
}

/// Reads a numeric CSV. Rows and columns in errors are 1-based and count
/// data rows only. Lines starting with `#` are skipped.
pub fn load_csv(path: &Path, target: &TargetColumn, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(std::fs::File::open(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?);
    let header: Option<Vec<String>> = if has_header {
        let h = reader.headers().map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let row = r + 1;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(BenchError::Ragged {
                row,
                expected,
                got: record.len(),
            });
        }
        let mut values = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let col = c + 1;
            let v: f64 = field.parse().map_err(|_| BenchError::Parse {
                row,
                col,
                text: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(BenchError::NonFinite { row, col, value: v });
            }
            values.push(v);
        }
        rows.push(values);
    }
    let width = width.unwrap_or(0);
    let names: Vec<String> =
        header.unwrap_or_else(|| (0..width).map(|i| format!("c{i}")).collect());
    let target_col = match target {
        TargetColumn::None => None,
        TargetColumn::Last => Some(
            width
                .checked_sub(1)
                .ok_or_else(|| config_err("empty file has no target column"))?,
        ),
        TargetColumn::Index(i) => {
            if *i >= width {
                return Err(config_err(format!(
                    "target column index {i} out of range for {width} columns"
                )));
            }
            Some(*i)
        }
        TargetColumn::Name(name) => Some(
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| config_err(format!("target column {name:?} not found")))?,
        ),
    };
    if target_col.is_some() && width < 2 {
        return Err(config_err("need at least one feature column besides the target"));
    }
    let keep: Vec<usize> = (0..width).filter(|&c| Some(c) != target_col).collect();
    let features = rows
        .iter()
        .map(|row| keep.iter().map(|&c| row[c]).collect())
        .collect();
    let target_values = target_col.map(|t| rows.iter().map(|row| row[t]).collect());
    Ok(Dataset {
        features,
        target: target_values,
        feature_names: keep.iter().map(|&c| names[c].clone()).collect(),
        target_name: target_col.map(|t| names[t].clone()),
        truth: None,
    })
}

/// Writes a dataset with a header row, features first and the target last.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        let mut header = dataset.feature_names.clone();
        if let Some(t) = &dataset.target_name {
            header.push(t.clone());
        }
        let csv_err = |source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        };
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in dataset.features.iter().enumerate() {
            let mut fields: Vec<String> = row.iter().map(f64::to_string).collect();
            if let Some(t) = &dataset.target {
                fields.push(t[i].to_string());
            }
            w.write_record(&fields).map_err(csv_err)?;
        }
        w.flush().map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, out).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}
