//! Ground truth: exact data Shapley by subset enumeration, the Monte-Carlo
//! DShapley baseline that trains a model per draw, and the utilities both use.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::classification::{irls_fit_penalized, IRLSState};
use crate::density::KernelSpec;
use crate::error::{invalid, Error, Result};
use crate::estimate::{RunningStats, ValueEstimate};
use crate::numerics::linalg::{cholesky, cholesky_solve};
use crate::numerics::{RandomStream, SpdMatrix};

/// Hard cap on players for exact enumeration.
pub const MAX_EXACT_PLAYERS: usize = 20;

/// A set function on coalitions of items. `U(∅) = 0` by convention and
/// coalitions smaller than [`Utility::gate`] are worth zero.
pub trait Utility: Sync {
    type Item: Sync;

    fn gate(&self) -> usize;

    /// Utility of a coalition at or above the gate.
    fn evaluate_ungated(&self, subset: &[&Self::Item]) -> Result<f64>;

    fn evaluate(&self, subset: &[&Self::Item]) -> Result<f64> {
        if subset.is_empty() || subset.len() < self.gate() {
            Ok(0.0)
        } else {
            self.evaluate_ungated(subset)
        }
    }
}

/// Utility given by a table over bitmasks of `n` players labelled `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedUtility {
    n: usize,
    values: Vec<f64>,
}

impl TabulatedUtility {
    /// `values[mask]` is the utility of the coalition with bits `mask`;
    /// `values[0]` must be zero.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > MAX_EXACT_PLAYERS {
            return Err(Error::TooManyPlayers {
                n,
                max: MAX_EXACT_PLAYERS,
            });
        }
        if values.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(invalid("the empty coalition must have utility 0"));
        }
        Ok(Self { n, values })
    }

    pub fn players(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    pub fn value_of_mask(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    /// Pointwise sum of two tables over the same players.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Self::new(self.n, values)
    }
}

impl Utility for TabulatedUtility {
    type Item = usize;

    fn gate(&self) -> usize {
        0
    }

    fn evaluate_ungated(&self, subset: &[&usize]) -> Result<f64> {
        let mut mask = 0usize;
        for &&i in subset {
            if i >= self.n {
                return Err(invalid(format!("player {i} outside table of {}", self.n)));
            }
            mask |= 1 << i;
        }
        Ok(self.values[mask])
    }
}

/// A labelled example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// How the regression utility scores a fitted model.
#[derive(Clone, Debug)]
pub enum RiskMode {
    /// `C_lin − σ² − (β̂ − β)ᵀ Σ (β̂ − β)` with known truth.
    Analytic {
        beta: Vec<f64>,
        sigma: SpdMatrix,
        sigma2: f64,
    },
    /// `C_lin − mean squared error` on a held-out set.
    Heldout { x: DMatrix<f64>, y: DVector<f64> },
}

/// Gated negative risk of the (ridge) least-squares fit.
#[derive(Clone, Debug)]
pub struct RegressionUtility {
    pub mode: RiskMode,
    pub c_lin: f64,
    pub q: usize,
    pub gamma: f64,
}

impl RegressionUtility {
    pub fn new(mode: RiskMode, c_lin: f64, q: usize, gamma: f64) -> Result<Self> {
        if q == 0 {
            return Err(invalid("gate must be at least 1"));
        }
        if !(gamma >= 0.0) {
            return Err(invalid("gamma must be nonnegative"));
        }
        let p = match &mode {
            RiskMode::Analytic { beta, sigma, .. } => {
                if sigma.dim() != beta.len() {
                    return Err(Error::DimensionMismatch {
                        expected: beta.len(),
                        got: sigma.dim(),
                    });
                }
                beta.len()
            }
            RiskMode::Heldout { x, y } => {
                if x.nrows() == 0 {
                    return Err(invalid("held-out set must be nonempty"));
                }
                if x.nrows() != y.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.nrows(),
                        got: y.len(),
                    });
                }
                x.ncols()
            }
        };
        if gamma == 0.0 && q <= p {
            return Err(invalid(format!(
                "gate q = {q} must exceed p = {p} without a ridge penalty"
            )));
        }
        Ok(Self {
            mode,
            c_lin,
            q,
            gamma,
        })
    }

    fn dim(&self) -> usize {
        match &self.mode {
            RiskMode::Analytic { beta, .. } => beta.len(),
            RiskMode::Heldout { x, .. } => x.ncols(),
        }
    }

    /// Ridge fit on a coalition.
    pub fn fit(&self, subset: &[&Sample]) -> Result<DVector<f64>> {
        let p = self.dim();
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        for s in subset {
            if s.x.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: s.x.len(),
                });
            }
            for r in 0..p {
                b[r] += s.x[r] * s.y;
                for c in 0..=r {
                    a[(r, c)] += s.x[r] * s.x[c];
                }
            }
        }
        for r in 0..p {
            a[(r, r)] += self.gamma;
            for c in 0..r {
                a[(c, r)] = a[(r, c)];
            }
        }
        let l = cholesky(&a).map_err(|e| Error::UtilityEvaluation {
            subset_size: subset.len(),
            reason: e.to_string(),
        })?;
        Ok(cholesky_solve(&l, &b))
    }

    pub fn score(&self, beta_hat: &DVector<f64>) -> f64 {
        match &self.mode {
            RiskMode::Analytic {
                beta,
                sigma,
                sigma2,
            } => {
                let diff: Vec<f64> = beta_hat.iter().zip(beta).map(|(a, b)| a - b).collect();
                let excess = sigma.quad_form(&diff).unwrap_or(f64::NAN);
                self.c_lin - sigma2 - excess
            }
            RiskMode::Heldout { x, y } => {
                let resid = y - x * beta_hat;
                self.c_lin - resid.norm_squared() / y.len() as f64
            }
        }
    }
}

impl Utility for RegressionUtility {
    type Item = Sample;

    fn gate(&self) -> usize {
        self.q
    }

    fn evaluate_ungated(&self, subset: &[&Sample]) -> Result<f64> {
        let beta = self.fit(subset)?;
        Ok(self.score(&beta))
    }
}

/// Held-out 0/1 accuracy of the IRLS fit on a coalition.
///
/// Coalitions holding a single class predict that class. Fits that stop
/// without converging (separable coalitions) are scored with the last
/// iterate; a singular first step is an evaluation failure.
#[derive(Clone, Debug)]
pub struct AccuracyUtility {
    pub x_test: DMatrix<f64>,
    pub y_test: Vec<f64>,
    pub q: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge penalty of the logistic fit; zero gives the MLE.
    pub penalty: f64,
}

impl AccuracyUtility {
    pub fn new(x_test: DMatrix<f64>, y_test: Vec<f64>, q: usize) -> Result<Self> {
        if x_test.nrows() == 0 || x_test.nrows() != y_test.len() {
            return Err(invalid("held-out set must be nonempty and labelled"));
        }
        Ok(Self {
            x_test,
            y_test,
            q: q.max(1),
            tol: crate::classification::IRLS_TOL,
            max_iter: crate::classification::IRLS_MAX_ITER,
            penalty: 0.0,
        })
    }

    pub fn with_penalty(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid("penalty must be finite and nonnegative"));
        }
        self.penalty = lambda;
        Ok(self)
    }

    pub fn accuracy_of(&self, state: &IRLSState) -> f64 {
        let hits = (0..self.x_test.nrows())
            .filter(|&r| {
                let eta: f64 = (0..self.x_test.ncols())
                    .map(|c| self.x_test[(r, c)] * state.beta[c])
                    .sum();
                let pred = if eta > 0.0 { 1.0 } else { 0.0 };
                pred == self.y_test[r]
            })
            .count();
        hits as f64 / self.y_test.len() as f64
    }

    fn constant_accuracy(&self, label: f64) -> f64 {
        self.y_test.iter().filter(|&&y| y == label).count() as f64 / self.y_test.len() as f64
    }
}

impl Utility for AccuracyUtility {
    type Item = Sample;

    fn gate(&self) -> usize {
        self.q
    }

    fn evaluate_ungated(&self, subset: &[&Sample]) -> Result<f64> {
        let first = subset[0].y;
        if subset.iter().all(|s| s.y == first) {
            return Ok(self.constant_accuracy(first));
        }
        let p = self.x_test.ncols();
        let x = DMatrix::from_fn(subset.len(), p, |r, c| subset[r].x[c]);
        let y: Vec<f64> = subset.iter().map(|s| s.y).collect();
        let state =
            irls_fit_penalized(&x, &y, self.penalty, self.tol, self.max_iter).map_err(|e| Error::UtilityEvaluation {
                subset_size: subset.len(),
                reason: e.to_string(),
            })?;
        Ok(self.accuracy_of(&state))
    }
}

/// `C_den − ISE` of the KDE on a coalition, with the ISE estimated as
/// `∫p̂² − 2·mean_test p̂ + ∫p²`. `∫p²` is added when known.
#[derive(Clone, Debug)]
pub struct DensityUtility {
    pub kernel: KernelSpec,
    pub c_den: f64,
    pub eval_points: Vec<Vec<f64>>,
    pub int_p2: Option<f64>,
}

impl DensityUtility {
    pub fn new(
        kernel: KernelSpec,
        c_den: f64,
        eval_points: Vec<Vec<f64>>,
        int_p2: Option<f64>,
    ) -> Result<Self> {
        if eval_points.is_empty() {
            return Err(invalid("evaluation sample must be nonempty"));
        }
        Ok(Self {
            kernel,
            c_den,
            eval_points,
            int_p2,
        })
    }

    /// ISE estimate up to the optional `∫p²`.
    pub fn ise(&self, subset: &[&Vec<f64>]) -> f64 {
        let n = subset.len() as f64;
        let dim = self.kernel.dim;
        let mut buf = vec![0.0; dim];
        let mut sq = 0.0;
        for a in subset {
            for b in subset {
                for (d, (x, y)) in buf.iter_mut().zip(a.iter().zip(b.iter())) {
                    *d = x - y;
                }
                sq += self.kernel.self_convolution(&buf);
            }
        }
        let mut held = 0.0;
        for z in &self.eval_points {
            let mut acc = 0.0;
            for s in subset {
                for (d, (x, y)) in buf.iter_mut().zip(z.iter().zip(s.iter())) {
                    *d = x - y;
                }
                acc += self.kernel.eval(&buf);
            }
            held += acc / n;
        }
        sq / (n * n) - 2.0 * held / self.eval_points.len() as f64 + self.int_p2.unwrap_or(0.0)
    }
}

impl Utility for DensityUtility {
    type Item = Vec<f64>;

    fn gate(&self) -> usize {
        1
    }

    fn evaluate_ungated(&self, subset: &[&Vec<f64>]) -> Result<f64> {
        Ok(self.c_den - self.ise(subset))
    }
}

/// Exact data Shapley values of a finite dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactShapleyResult {
    pub values: Vec<f64>,
    pub total: f64,
    pub subset_evaluations: usize,
}

/// Data Shapley by full subset enumeration with binomial weights.
pub fn exact_data_shapley<U: Utility>(items: &[U::Item], utility: &U) -> Result<ExactShapleyResult> {
    let n = items.len();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyPlayers {
            n,
            max: MAX_EXACT_PLAYERS,
        });
    }
    if n == 0 {
        return Ok(ExactShapleyResult {
            values: Vec::new(),
            total: 0.0,
            subset_evaluations: 1,
        });
    }
    let table: Vec<f64> = (0..1usize << n)
        .into_par_iter()
        .map(|mask| {
            let subset: Vec<&U::Item> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| &items[i])
                .collect();
            utility.evaluate(&subset)
        })
        .collect::<Result<_>>()?;
    // weight[k] = 1 / (n · C(n−1, k)) for coalitions of size k.
    let mut weight = vec![0.0; n];
    let mut binom = 1.0f64;
    for (k, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
    }
    let values = (0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << n)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (table[m | bit] - table[m]))
                .sum()
        })
        .collect();
    Ok(ExactShapleyResult {
        values,
        total: table[(1 << n) - 1],
        subset_evaluations: 1 << n,
    })
}

/// Settings for [`dshapley_mc_baseline`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineControls {
    pub m: usize,
    pub max_draws: usize,
    /// Skip sampling and evaluation for draws the gate forces to zero.
    pub truncate_gated: bool,
    /// Draws per parallel chunk; fixes the reduction order.
    pub chunk: usize,
}

impl BaselineControls {
    pub fn new(m: usize, max_draws: usize) -> Self {
        Self {
            m,
            max_draws,
            truncate_gated: true,
            chunk: 1024,
        }
    }
}

/// Monte-Carlo DShapley that trains the model on every sampled coalition:
/// draw `j` uniform on `1..=m`, a coalition of `j − 1` items from `sampler`,
/// and average `U(S ∪ {z*}) − U(S)`.
///
/// Draws are split into fixed chunks, each on its own sub-stream, and merged
/// in chunk order, so the result does not depend on the thread count. Failed
/// evaluations are dropped and counted; more than half failing is an error.
pub fn dshapley_mc_baseline<U, F>(
    z_star: &U::Item,
    sampler: &F,
    utility: &U,
    controls: &BaselineControls,
    rng: &RandomStream,
) -> Result<ValueEstimate>
where
    U: Utility,
    F: Fn(&mut RandomStream) -> U::Item + Sync,
{
    if controls.m == 0 || controls.max_draws == 0 || controls.chunk == 0 {
        return Err(invalid("m, max_draws and chunk must be at least 1"));
    }
    let gate = utility.gate();
    let n_chunks = controls.max_draws.div_ceil(controls.chunk);
    let partial: Vec<(RunningStats, usize, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng.substream(c as u64);
            let start = c * controls.chunk;
            let end = (start + controls.chunk).min(controls.max_draws);
            let mut stats = RunningStats::new();
            let mut failures = 0usize;
            let mut skipped = 0usize;
            for _ in start..end {
                let j = 1 + stream.index(controls.m);
                if controls.truncate_gated && j < gate {
                    stats.push(0.0);
                    skipped += 1;
                    continue;
                }
                let coalition: Vec<U::Item> = (0..j - 1).map(|_| sampler(&mut stream)).collect();
                let mut refs: Vec<&U::Item> = coalition.iter().collect();
                let without = utility.evaluate(&refs);
                refs.push(z_star);
                let with = utility.evaluate(&refs);
                match (with, without) {
                    (Ok(a), Ok(b)) => stats.push(a - b),
                    _ => failures += 1,
                }
            }
            (stats, failures, skipped)
        })
        .collect();
    let mut stats = RunningStats::new();
    let mut failures = 0;
    let mut skipped = 0;
    for (s, f, k) in &partial {
        stats.merge(s);
        failures += f;
        skipped += k;
    }
    if 2 * failures > controls.max_draws {
        return Err(Error::BaselineFailure {
            failures,
            draws: controls.max_draws,
        });
    }
    Ok(ValueEstimate {
        value: stats.mean(),
        std_error: stats.std_error(),
        inner_iters_used: vec![stats.count() as usize],
        truncated_at_j: None,
        empty_sum: false,
        skipped_terms: failures + skipped,
    })
}
