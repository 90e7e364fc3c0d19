//! DShapley for least-squares and ridge regression.
//!
//! Three estimators share one [`RegressionEnvironment`]:
//!
//! * [`dshapley_regression_exact`] samples the chi-squared representation that
//!   holds for Gaussian inputs and plain least squares, with two-level early
//!   stopping.
//! * [`dshapley_regression_bounds`] evaluates deterministic lower and upper
//!   bounds for sub-Gaussian inputs and any ridge penalty.
//! * [`dshapley_regression_general_mc`] samples design matrices from a caller
//!   supplied input distribution and averages the ridge leverage expression.
//!
//! Each estimator reports values under its own normalisation of the utility
//! constant. Values from different estimators differ by a known constant per
//! `(m, q, p, σ²)`; see [`gaussian_normalization_offset`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::estimate::{relative_change_within, RunningStats, ValueEstimate};
use crate::numerics::linalg::{cholesky, cholesky_solve, spd_inverse_with, InverseOptions};
use crate::numerics::{chi_squared, mahalanobis_sq, RandomStream, SpdMatrix};
use rand_distr::Distribution;

/// How the chi-squared representation indexes coalition sizes.
///
/// `Position` evaluates the sum with the coalition of size `j` in summand
/// `j`; `Coalition` uses size `j − 1`, which is the size the coalition actually
/// has when `j` is the position of the valued point. The two differ by one
/// step of the horizon. Direct Monte-Carlo over coalitions agrees with
/// `Coalition`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SubsetSizeConvention {
    #[default]
    Position,
    Coalition,
}

impl SubsetSizeConvention {
    /// Size of the coalition that precedes the valued point at position `j`.
    pub fn subset_size(self, j: usize) -> usize {
        match self {
            Self::Position => j,
            Self::Coalition => j - 1,
        }
    }
}

/// Fitted background quantities plus the valuation horizon.
#[derive(Clone, Debug)]
pub struct RegressionEnvironment {
    pub p: usize,
    pub m: usize,
    pub q: usize,
    pub gamma: f64,
    pub sigma2: f64,
    pub beta_hat: Vec<f64>,
    /// Uncentered second moment of the inputs.
    pub sigma: SpdMatrix,
    pub sigma_inv: SpdMatrix,
    pub convention: SubsetSizeConvention,
    /// Set when the background residuals vanished to rounding.
    pub noiseless: bool,
}

impl RegressionEnvironment {
    /// Environment from known truth (synthetic mode).
    pub fn from_truth(
        beta: Vec<f64>,
        sigma: SpdMatrix,
        sigma2: f64,
        m: usize,
        q: usize,
        gamma: f64,
    ) -> Result<Self> {
        let sigma_inv = sigma.inverse()?;
        let env = Self {
            p: beta.len(),
            m,
            q,
            gamma,
            sigma2,
            beta_hat: beta,
            sigma,
            sigma_inv,
            convention: SubsetSizeConvention::default(),
            noiseless: sigma2 == 0.0,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn with_convention(mut self, convention: SubsetSizeConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_horizon(mut self, m: usize, q: usize) -> Result<Self> {
        self.m = m;
        self.q = q;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(invalid("input dimension must be positive"));
        }
        if self.sigma.dim() != self.p || self.sigma_inv.dim() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: self.sigma.dim(),
            });
        }
        if self.m == 0 {
            return Err(invalid("horizon m must be at least 1"));
        }
        if self.q < 2 {
            return Err(invalid("gate q must be at least 2"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma must be finite and nonnegative"));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(invalid("noise variance must be finite and nonnegative"));
        }
        if self.sigma2 == 0.0 && !self.noiseless {
            return Err(invalid("noise variance must be positive"));
        }
        if self.gamma == 0.0 && self.q <= self.p {
            return Err(invalid(format!(
                "gate q = {} must exceed p = {} without a ridge penalty",
                self.q, self.p
            )));
        }
        Ok(())
    }
}

/// Fits β̂, σ̂² and the inverse second moment on a background sample.
///
/// `ridge` is added to the diagonal of the averaged normal equations, so it
/// regularises both β̂ and the second moment.
pub fn fit_background(
    samples: &[(Vec<f64>, f64)],
    ridge: f64,
    m: usize,
    q: usize,
    gamma: f64,
) -> Result<RegressionEnvironment> {
    let n = samples.len();
    let p = samples.first().map(|s| s.0.len()).unwrap_or(0);
    if p == 0 {
        return Err(invalid("background must contain at least one input column"));
    }
    if n <= p {
        return Err(Error::InsufficientData { n, p });
    }
    if let Some((x, _)) = samples.iter().find(|(x, _)| x.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: x.len(),
        });
    }
    let x = DMatrix::from_fn(n, p, |r, c| samples[r].0[c]);
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    fit_background_matrix(&x, &y, ridge, m, q, gamma)
}

/// [`fit_background`] on a design matrix and response vector.
pub fn fit_background_matrix(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
    m: usize,
    q: usize,
    gamma: f64,
) -> Result<RegressionEnvironment> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::InsufficientData { n, p });
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(invalid("ridge must be finite and nonnegative"));
    }
    let nf = n as f64;
    let mut moment = x.tr_mul(x) / nf;
    for i in 0..p {
        moment[(i, i)] += ridge;
    }
    let l = cholesky(&moment)?;
    let rhs = x.tr_mul(y) / nf;
    let beta = cholesky_solve(&l, &rhs);
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let scale = y.norm_squared() / nf;
    let mut sigma2 = rss / (n - p) as f64;
    let noiseless = sigma2 <= 1e-24 * scale.max(f64::MIN_POSITIVE);
    if noiseless {
        sigma2 = 0.0;
    }
    let sigma_inv = spd_inverse_with(&moment, InverseOptions::strict())?;
    let sigma = SpdMatrix::new(moment)?;
    let env = RegressionEnvironment {
        p,
        m,
        q,
        gamma,
        sigma2,
        beta_hat: beta.iter().copied().collect(),
        sigma,
        sigma_inv,
        convention: SubsetSizeConvention::default(),
        noiseless,
    };
    env.validate()?;
    Ok(env)
}

/// A datum to be valued with its derived statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct PointQuery {
    pub x_star: Vec<f64>,
    pub y_star: f64,
    /// Squared error against the environment's coefficients.
    pub e2: f64,
    /// Mahalanobis distance `x*ᵀ Σ⁻¹ x*`.
    pub d: f64,
}

impl PointQuery {
    pub fn new(x_star: Vec<f64>, y_star: f64, env: &RegressionEnvironment) -> Result<Self> {
        Self::with_coefficients(x_star, y_star, &env.beta_hat, &env.sigma_inv)
    }

    /// Query scored against supplied coefficients (ground truth in synthetic runs).
    pub fn with_coefficients(
        x_star: Vec<f64>,
        y_star: f64,
        beta: &[f64],
        sigma_inv: &SpdMatrix,
    ) -> Result<Self> {
        if x_star.len() != beta.len() {
            return Err(Error::DimensionMismatch {
                expected: beta.len(),
                got: x_star.len(),
            });
        }
        if !y_star.is_finite() || x_star.iter().any(|v| !v.is_finite()) {
            return Err(invalid("query must be finite"));
        }
        let fit: f64 = x_star.iter().zip(beta).map(|(a, b)| a * b).sum();
        let e2 = (y_star - fit).powi(2);
        let d = mahalanobis_sq(&x_star, sigma_inv)?;
        Ok(Self {
            x_star,
            y_star,
            e2,
            d,
        })
    }

    /// Query known only through its statistics. Usable with the exact and
    /// bound estimators, not with the general Monte-Carlo path.
    pub fn from_statistics(d: f64, e2: f64) -> Result<Self> {
        if !(d >= 0.0) || !(e2 >= 0.0) || !d.is_finite() || !e2.is_finite() {
            return Err(invalid("d and e2 must be finite and nonnegative"));
        }
        Ok(Self {
            x_star: Vec::new(),
            y_star: f64::NAN,
            e2,
            d,
        })
    }
}

/// Budget and early-stopping thresholds for the chi-squared estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MCControls {
    pub max_inner: usize,
    /// Inner stop: relative change of the running mean. `None` disables.
    pub rho1: Option<f64>,
    /// Outer stop: relative change of the cumulative value. `None` disables.
    pub rho2: Option<f64>,
}

impl Default for MCControls {
    fn default() -> Self {
        Self {
            max_inner: 10_000,
            rho1: Some(0.01),
            rho2: Some(0.005),
        }
    }
}

impl MCControls {
    /// Fixed budget with early stopping off.
    pub fn fixed(max_inner: usize) -> Self {
        Self {
            max_inner,
            rho1: None,
            rho2: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_inner == 0 {
            return Err(invalid("max_inner must be at least 1"));
        }
        for rho in [self.rho1, self.rho2].into_iter().flatten() {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(invalid("early-stopping thresholds must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// One summand of the chi-squared representation for a draw `t`. The value
/// subtracts it, so the `e2` coefficient of the value is `−factor·d/(d+t)²`
/// and the value is non-increasing in `e2`.
pub fn exact_summand(d: f64, e2: f64, t: f64, sigma2: f64, factor: f64) -> f64 {
    let denom = d + t;
    factor * (d * e2 + t * sigma2) / (denom * denom)
}

fn exact_index_parameters(env: &RegressionEnvironment, j: usize) -> (u32, f64) {
    let n = env.convention.subset_size(j);
    let dof = (n + 1 - env.p) as u32;
    let factor = (n - 1) as f64 / (n - env.p) as f64;
    (dof, factor)
}

/// Chi-squared DShapley estimator for Gaussian inputs and least squares.
pub fn dshapley_regression_exact(
    query: &PointQuery,
    env: &RegressionEnvironment,
    mc: &MCControls,
    rng: &mut RandomStream,
) -> Result<ValueEstimate> {
    env.validate()?;
    mc.validate()?;
    if env.gamma != 0.0 {
        return Err(invalid("the chi-squared estimator requires gamma = 0"));
    }
    if env.q < env.p + 3 {
        return Err(invalid(format!(
            "the chi-squared estimator requires q >= p + 3 (q = {}, p = {})",
            env.q, env.p
        )));
    }
    if env.m < env.q {
        return Ok(ValueEstimate::zero_empty());
    }
    let mf = env.m as f64;
    let mut nu_old = 0.0;
    let mut nu_new = 0.0;
    let mut var_sum = 0.0;
    let mut inner_iters = Vec::with_capacity(env.m - env.q + 1);
    let mut truncated = None;
    for j in env.q..=env.m {
        let (dof, factor) = exact_index_parameters(env, j);
        let chi = chi_squared(dof)?;
        let mut stats = RunningStats::new();
        let mut a_old = 0.0;
        let mut a_new = 0.0;
        for i in 1..=mc.max_inner {
            let t = chi.sample(rng);
            let f = exact_summand(query.d, query.e2, t, env.sigma2, factor);
            stats.push(f);
            a_new = ((i - 1) as f64 * a_old + f) / i as f64;
            if let Some(rho1) = mc.rho1 {
                if relative_change_within(a_new, a_old, rho1) {
                    break;
                }
            }
            a_old = a_new;
        }
        inner_iters.push(stats.count() as usize);
        var_sum += stats.std_error().powi(2);
        nu_new = nu_old - a_new / mf;
        if let Some(rho2) = mc.rho2 {
            if relative_change_within(nu_old, nu_new, rho2) {
                truncated = Some(j);
                break;
            }
        }
        nu_old = nu_new;
    }
    Ok(ValueEstimate {
        value: nu_new,
        std_error: var_sum.sqrt() / mf,
        inner_iters_used: inner_iters,
        truncated_at_j: truncated,
        empty_sum: false,
        skipped_terms: 0,
    })
}

/// `Σ_{j=q}^{m} (n−1)/((n−p)(n−p−1))` with `n` the convention's subset size.
fn offset_sum(p: usize, m: usize, q: usize, convention: SubsetSizeConvention) -> f64 {
    (q..=m)
        .map(|j| {
            let n = convention.subset_size(j) as f64;
            let p = p as f64;
            (n - 1.0) / ((n - p) * (n - p - 1.0))
        })
        .sum()
}

/// Constant separating the chi-squared normalisation from the ridge-leverage
/// normalisation at `γ = 0`: general-form value = exact value + offset.
pub fn gaussian_normalization_offset(env: &RegressionEnvironment) -> f64 {
    if env.m < env.q {
        return 0.0;
    }
    env.sigma2 / env.m as f64 * offset_sum(env.p, env.m, env.q, env.convention)
}

/// Utility constant `C_lin` under which direct Monte-Carlo over coalitions
/// with the analytic risk utility reproduces the coalition-indexed
/// chi-squared value.
pub fn analytic_utility_constant(p: usize, m: usize, q: usize, sigma2: f64) -> Result<f64> {
    if q < p + 3 {
        return Err(invalid("analytic utility constant requires q >= p + 3"));
    }
    let k = if m >= q {
        offset_sum(p, m, q, SubsetSizeConvention::Coalition)
    } else {
        0.0
    };
    let pf = p as f64;
    Ok(sigma2 * (1.0 + pf / (q as f64 - pf - 2.0) - k))
}

/// Sub-Gaussian concentration constants and the bound-loop stopping rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub c_big: f64,
    pub c_small: f64,
    /// Stop once the running lower bound changes by at most this fraction.
    pub rho: Option<f64>,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            c_big: 1.0,
            c_small: 1.0,
            rho: Some(0.005),
        }
    }
}

impl BoundParams {
    /// Full sums, no early stop.
    pub fn full(c_big: f64, c_small: f64) -> Self {
        Self {
            c_big,
            c_small,
            rho: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_big > 0.0 && self.c_big.is_finite())
            || !(self.c_small > 0.0 && self.c_small.is_finite())
        {
            return Err(invalid("bound constants must be positive"));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(invalid("rho must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Lower and upper DShapley bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Terms dropped because the deviation `δ_j` reached 1.
    pub skipped_terms: usize,
    pub terms_used: usize,
    pub truncated_at_j: Option<usize>,
}

/// Inputs shared by the regression and binary bound sums.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundInputs {
    pub d: f64,
    pub e2: f64,
    pub sigma2: f64,
    pub p: usize,
    pub m: usize,
    pub q: usize,
    /// `γ·λ_min(Σ⁻¹)`, added to the upper eigenvalue scale.
    pub ridge_min: f64,
    /// `γ·λ_max(Σ⁻¹)`.
    pub ridge_max: f64,
}

/// Per-term contribution, `None` when `δ_j ≥ 1`.
pub(crate) fn bound_term(inp: &BoundInputs, params: &BoundParams, j: usize) -> Option<(f64, f64)> {
    let jf = j as f64;
    let mf = inp.m as f64;
    let log_term = (jf * mf).ln().max(0.0);
    let delta = (params.c_big * (inp.p as f64).sqrt() + (log_term / (2.0 * params.c_small)).sqrt())
        / jf.sqrt();
    if !(delta < 1.0) {
        return None;
    }
    let lam_u = 1.0 / (jf * (1.0 - delta).powi(2) + inp.ridge_min);
    let lam_l = 1.0 / (jf * (1.0 + delta).powi(2) + inp.ridge_max);
    let d = inp.d;
    let ratio = ((1.0 + d * lam_l) / (1.0 + d * lam_u)).powi(2);
    let lower = d * lam_l * lam_l / (1.0 + d * lam_u).powi(2)
        * ((2.0 + d * lam_l) * inp.sigma2 - inp.e2 / ratio);
    let upper = d * lam_u * lam_u / (1.0 + d * lam_l).powi(2) * (2.0 + d * lam_u) * inp.sigma2
        - d * lam_l * lam_l / (1.0 + d * lam_u).powi(2) * inp.e2;
    Some((lower, upper))
}

pub(crate) fn bound_sums(inp: &BoundInputs, params: &BoundParams) -> BoundsEstimate {
    let mut out = BoundsEstimate {
        lower: 0.0,
        upper: 0.0,
        skipped_terms: 0,
        terms_used: 0,
        truncated_at_j: None,
    };
    if inp.m < inp.q || inp.q < 2 {
        return out;
    }
    let mf = inp.m as f64;
    for j in (inp.q - 1)..inp.m {
        match bound_term(inp, params, j) {
            None => out.skipped_terms += 1,
            Some((lo, up)) => {
                let old = out.lower;
                out.lower += lo / mf;
                out.upper += up / mf;
                out.terms_used += 1;
                if let Some(rho) = params.rho {
                    if relative_change_within(old, out.lower, rho) {
                        out.truncated_at_j = Some(j);
                        break;
                    }
                }
            }
        }
    }
    out
}

/// Deterministic lower and upper bounds for sub-Gaussian inputs.
///
/// The error term of the upper bound uses the smallest admissible coefficient
/// `d·Λ_lower²/(1 + d·Λ_upper)²`, which keeps `lower ≤ upper` termwise.
pub fn dshapley_regression_bounds(
    query: &PointQuery,
    env: &RegressionEnvironment,
    params: &BoundParams,
) -> Result<BoundsEstimate> {
    env.validate()?;
    params.validate()?;
    let (lam_min, lam_max) = if env.gamma > 0.0 {
        env.sigma_inv.eigen_range()
    } else {
        (0.0, 0.0)
    };
    let inp = BoundInputs {
        d: query.d,
        e2: query.e2,
        sigma2: env.sigma2,
        p: env.p,
        m: env.m,
        q: env.q,
        ridge_min: env.gamma * lam_min,
        ridge_max: env.gamma * lam_max,
    };
    Ok(bound_sums(&inp, params))
}

/// Per-index bound terms `(j, lower, upper)`, with `None` for skipped indices.
pub fn regression_bound_terms(
    query: &PointQuery,
    env: &RegressionEnvironment,
    params: &BoundParams,
) -> Result<Vec<(usize, Option<(f64, f64)>)>> {
    env.validate()?;
    params.validate()?;
    let (lam_min, lam_max) = if env.gamma > 0.0 {
        env.sigma_inv.eigen_range()
    } else {
        (0.0, 0.0)
    };
    let inp = BoundInputs {
        d: query.d,
        e2: query.e2,
        sigma2: env.sigma2,
        p: env.p,
        m: env.m,
        q: env.q,
        ridge_min: env.gamma * lam_min,
        ridge_max: env.gamma * lam_max,
    };
    if env.m < env.q {
        return Ok(Vec::new());
    }
    Ok(((env.q - 1)..env.m)
        .map(|j| (j, bound_term(&inp, params, j)))
        .collect())
}

/// Ridge-leverage term for one sampled design of `rows` inputs. `None` when
/// the Gram matrix is singular.
fn leverage_term(
    query: &PointQuery,
    env: &RegressionEnvironment,
    design: &DMatrix<f64>,
) -> Option<f64> {
    let p = env.p;
    let mut a = design.tr_mul(design);
    for i in 0..p {
        a[(i, i)] += env.gamma;
    }
    let l = cholesky(&a).ok()?;
    let x = DVector::from_column_slice(&query.x_star);
    let u = cholesky_solve(&l, &x);
    let lev = x.dot(&u);
    let quad = (env.sigma.as_matrix() * &u).dot(&u);
    Some(quad * ((2.0 + lev) * env.sigma2 - query.e2) / (1.0 + lev).powi(2))
}

/// Monte-Carlo evaluation of the general ridge form with designs drawn from
/// `input_sampler`. `n_outer` designs are drawn for every coalition size.
///
/// Index `j` draws coalitions of size `j − 1`. Singular designs (possible when
/// `γ = 0` and `j − 1 < p`) are skipped and counted.
pub fn dshapley_regression_general_mc<F>(
    query: &PointQuery,
    env: &RegressionEnvironment,
    input_sampler: &F,
    n_outer: usize,
    rng: &RandomStream,
) -> Result<ValueEstimate>
where
    F: Fn(&mut RandomStream) -> Vec<f64> + Sync,
{
    env.validate()?;
    if n_outer == 0 {
        return Err(invalid("n_outer must be at least 1"));
    }
    if query.x_star.len() != env.p {
        return Err(Error::DimensionMismatch {
            expected: env.p,
            got: query.x_star.len(),
        });
    }
    if env.m < env.q {
        return Ok(ValueEstimate::zero_empty());
    }
    let p = env.p;
    let per_j: Vec<Result<(RunningStats, usize)>> = (env.q..=env.m)
        .into_par_iter()
        .map(|j| {
            let mut stream = rng.substream(j as u64);
            let rows = j - 1;
            let mut stats = RunningStats::new();
            let mut skipped = 0usize;
            let mut design = DMatrix::<f64>::zeros(rows, p);
            for _ in 0..n_outer {
                for r in 0..rows {
                    let x = input_sampler(&mut stream);
                    if x.len() != p {
                        return Err(Error::DimensionMismatch {
                            expected: p,
                            got: x.len(),
                        });
                    }
                    for c in 0..p {
                        design[(r, c)] = x[c];
                    }
                }
                match leverage_term(query, env, &design) {
                    Some(v) => stats.push(v),
                    None => skipped += 1,
                }
            }
            Ok((stats, skipped))
        })
        .collect();
    let mf = env.m as f64;
    let mut value = 0.0;
    let mut var = 0.0;
    let mut skipped_terms = 0;
    let mut inner = Vec::with_capacity(per_j.len());
    for item in per_j {
        let (stats, skipped) = item?;
        value += stats.mean() / mf;
        var += stats.std_error().powi(2);
        skipped_terms += skipped;
        inner.push(stats.count() as usize);
    }
    Ok(ValueEstimate {
        value,
        std_error: var.sqrt() / mf,
        inner_iters_used: inner,
        truncated_at_j: None,
        empty_sum: false,
        skipped_terms,
    })
}
