//! DShapley bounds for logistic regression through the IRLS working-response
//! transformation.
//!
//! A labelled point `(x*, y*)` is mapped to the weighted regression point
//! `(√w*·x*, √w*·z*)` whose working response has unit conditional variance.
//! The regression bound machinery is then applied with `σ² = 1` and no ridge
//! term.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::numerics::linalg::{cholesky, cholesky_solve};
use crate::numerics::{inv_logit, mahalanobis_sq, SpdMatrix};
use crate::regression::{bound_sums, BoundInputs, BoundParams, BoundsEstimate};

/// Default relative step tolerance.
pub const IRLS_TOL: f64 = 1e-8;
/// Default iteration cap.
pub const IRLS_MAX_ITER: usize = 100;
/// Weight floor applied when the caller opts into clamping.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Outcome of an IRLS fit.
#[derive(Clone, Debug, PartialEq)]
pub struct IRLSState {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_step_norm: f64,
    /// Set when the fit stopped without converging while ‖β‖ kept growing.
    pub diverging: bool,
    /// ‖β‖ after each iteration.
    pub norm_trace: Vec<f64>,
}

impl IRLSState {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    /// Class prediction with threshold 1/2 on the fitted probability.
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.linear_predictor(x) > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

fn check_labels(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(invalid(format!("labels must be 0 or 1, found {bad}")));
    }
    if !y.contains(&0.0) || !y.contains(&1.0) {
        return Err(invalid("both classes must be present"));
    }
    Ok(())
}

/// Logistic-regression MLE by iteratively reweighted least squares.
///
/// Each step solves `(XᵀWX) Δ = Xᵀ(y − π)`, which is the weighted
/// least-squares update on the working response written without dividing by
/// the weights. Iteration stops when `‖Δ‖/(1 + ‖β‖) ≤ tol`. A singular
/// weighted Gram matrix on the first step is an error; later it ends the fit
/// as non-converged and diverging, which is how separable data terminates.
pub fn irls_fit(x: &DMatrix<f64>, y: &[f64], tol: f64, max_iter: usize) -> Result<IRLSState> {
    irls_fit_penalized(x, y, 0.0, tol, max_iter)
}

/// [`irls_fit`] for the objective `log-likelihood − (λ/2)‖β‖²`. A positive
/// `lambda` keeps the fit finite on separable data.
pub fn irls_fit_penalized(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<IRLSState> {
    let (n, p) = x.shape();
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("penalty must be finite and nonnegative"));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n <= p && lambda == 0.0 {
        return Err(Error::InsufficientData { n, p });
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(invalid("tol must be positive and max_iter at least 1"));
    }
    check_labels(y)?;
    let mut beta = DVector::<f64>::zeros(p);
    let mut trace = Vec::new();
    let mut step_norm = f64::INFINITY;
    let mut converged = false;
    let mut singular_stop = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        let eta = x * &beta;
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut score = DVector::<f64>::zeros(p);
        for r in 0..n {
            let pi = inv_logit(eta[r]);
            let w = pi * (1.0 - pi);
            let row = x.row(r);
            for a in 0..p {
                score[a] += row[a] * (y[r] - pi);
                let wa = w * row[a];
                for b in 0..=a {
                    gram[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            gram[(a, a)] += lambda;
            score[a] -= lambda * beta[a];
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
        }
        let l = match cholesky(&gram) {
            Ok(l) => l,
            Err(err) if it == 0 => return Err(err),
            Err(_) => {
                singular_stop = true;
                break;
            }
        };
        let step = cholesky_solve(&l, &score);
        beta += &step;
        iterations = it + 1;
        step_norm = step.norm();
        trace.push(beta.norm());
        if !beta.iter().all(|v| v.is_finite()) {
            singular_stop = true;
            break;
        }
        if step_norm / (1.0 + beta.norm()) <= tol {
            converged = true;
            break;
        }
    }
    let growing = trace.len() >= 2 && trace[trace.len() - 1] > trace[trace.len() - 2];
    Ok(IRLSState {
        beta: beta.iter().copied().collect(),
        iterations,
        converged,
        final_step_norm: step_norm,
        diverging: !converged && (singular_stop || growing),
        norm_trace: trace,
    })
}

/// Gradient of the logistic log-likelihood at `beta`.
pub fn log_likelihood_gradient(x: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let (n, p) = x.shape();
    let b = DVector::from_column_slice(beta);
    let eta = x * b;
    let mut g = vec![0.0; p];
    for r in 0..n {
        let resid = y[r] - inv_logit(eta[r]);
        for (c, gc) in g.iter_mut().enumerate() {
            *gc += x[(r, c)] * resid;
        }
    }
    g
}

/// Plug-in `Σ̃ = (1/N) Σ wᵢ xᵢxᵢᵀ` with weights from the fitted model.
pub fn weighted_second_moment(x: &DMatrix<f64>, state: &IRLSState) -> Result<SpdMatrix> {
    let (n, p) = x.shape();
    if state.beta.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: state.beta.len(),
        });
    }
    if n < p {
        return Err(Error::RankDeficient { samples: n, dim: p });
    }
    let b = DVector::from_column_slice(&state.beta);
    let eta = x * b;
    let mut m = DMatrix::<f64>::zeros(p, p);
    for r in 0..n {
        let pi = inv_logit(eta[r]);
        let w = pi * (1.0 - pi);
        for a in 0..p {
            for c in 0..p {
                m[(a, c)] += w * x[(r, a)] * x[(r, c)];
            }
        }
    }
    SpdMatrix::new(m / n as f64)
}

/// Fitted IRLS model plus the inverse weighted second moment.
#[derive(Clone, Debug)]
pub struct BinaryBackground {
    pub state: IRLSState,
    pub sigma_tilde_inv: SpdMatrix,
}

impl BinaryBackground {
    pub fn p(&self) -> usize {
        self.state.beta.len()
    }
}

/// Fits IRLS on the background and estimates `Σ̃⁻¹`. Refuses non-converged
/// fits.
pub fn fit_binary_background(
    x: &DMatrix<f64>,
    y: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<BinaryBackground> {
    let state = irls_fit(x, y, tol, max_iter)?;
    if !state.converged {
        return Err(Error::NotConverged {
            iterations: state.iterations,
        });
    }
    let sigma_tilde_inv = weighted_second_moment(x, &state)?.inverse()?;
    Ok(BinaryBackground {
        state,
        sigma_tilde_inv,
    })
}

/// A labelled point with its IRLS-transformed statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryPointQuery {
    pub x_star: Vec<f64>,
    pub y_star: f64,
    pub pi_star: f64,
    pub w_star: f64,
    /// Working response `x*ᵀβ̂ + (y* − π*)/w*`.
    pub z_star: f64,
    /// `(y* − π*)²/w*`.
    pub e2_b: f64,
    /// `w*·x*ᵀ Σ̃⁻¹ x*`.
    pub d_tilde: f64,
}

/// Maps a labelled point through the fitted model.
pub fn transform_query(
    x_star: &[f64],
    y_star: f64,
    state: &IRLSState,
    sigma_tilde_inv: &SpdMatrix,
    clamp_weight: bool,
) -> Result<BinaryPointQuery> {
    if !state.converged {
        return Err(Error::NotConverged {
            iterations: state.iterations,
        });
    }
    if x_star.len() != state.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: state.beta.len(),
            got: x_star.len(),
        });
    }
    if y_star != 0.0 && y_star != 1.0 {
        return Err(invalid("label must be 0 or 1"));
    }
    let eta = state.linear_predictor(x_star);
    let pi = inv_logit(eta);
    let mut w = pi * (1.0 - pi);
    if !(w >= WEIGHT_FLOOR) {
        if clamp_weight {
            w = WEIGHT_FLOOR;
        } else {
            return Err(Error::Saturation { pi });
        }
    }
    let resid = y_star - pi;
    let z_star = eta + resid / w;
    let e2_b = resid * resid / w;
    let d_tilde = w * mahalanobis_sq(x_star, sigma_tilde_inv)?;
    Ok(BinaryPointQuery {
        x_star: x_star.to_vec(),
        y_star,
        pi_star: pi,
        w_star: w,
        z_star,
        e2_b,
        d_tilde,
    })
}

/// Lower and upper DShapley bounds for a transformed point.
pub fn dshapley_binary_bounds(
    query: &BinaryPointQuery,
    m: usize,
    q: usize,
    params: &BoundParams,
) -> Result<BoundsEstimate> {
    params.validate()?;
    let p = query.x_star.len();
    if q < p + 3 {
        return Err(invalid(format!(
            "binary bounds require q >= p + 3 (q = {q}, p = {p})"
        )));
    }
    if m == 0 {
        return Err(invalid("horizon m must be at least 1"));
    }
    let inp = BoundInputs {
        d: query.d_tilde,
        e2: query.e2_b,
        sigma2: 1.0,
        p,
        m,
        q,
        ridge_min: 0.0,
        ridge_max: 0.0,
    };
    Ok(bound_sums(&inp, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn symmetric_data_gives_zero_coefficient() {
        let x = col(&[1.0, 1.0, -1.0, -1.0]);
        let s = irls_fit(&x, &[1.0, 0.0, 0.0, 1.0], IRLS_TOL, IRLS_MAX_ITER).unwrap();
        assert!(s.converged);
        assert!(s.beta[0].abs() < 1e-12);
    }

    #[test]
    fn separable_data_diverges() {
        let x = col(&[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let s = irls_fit(&x, &y, IRLS_TOL, IRLS_MAX_ITER).unwrap();
        assert!(!s.converged);
        assert!(s.diverging);
        assert!(s.norm_trace.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn penalty_keeps_separable_fit_finite() {
        let x = col(&[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let s = irls_fit_penalized(&x, &y, 1.0, IRLS_TOL, IRLS_MAX_ITER).unwrap();
        assert!(s.converged && s.beta[0] > 0.0);
        // Stationarity of the penalised objective.
        let g = log_likelihood_gradient(&x, &y, &s.beta)[0] - s.beta[0];
        assert!(g.abs() < 1e-8, "{g}");
    }

    #[test]
    fn zero_penalty_is_the_mle() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.3, 1.0, -1.2, 1.0, 0.8, 1.0, 2.0, 1.0, -0.4, 1.0, 0.1]);
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let a = irls_fit(&x, &y, IRLS_TOL, IRLS_MAX_ITER).unwrap();
        let b = irls_fit_penalized(&x, &y, 0.0, IRLS_TOL, IRLS_MAX_ITER).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = col(&[1.0, 2.0, 3.0]);
        assert!(irls_fit(&x, &[1.0, 1.0, 1.0], IRLS_TOL, IRLS_MAX_ITER).is_err());
    }

    #[test]
    fn degenerate_design_is_singular() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0, 3.0, 6.0]);
        assert!(matches!(
            irls_fit(&x, &[1.0, 0.0, 1.0, 0.0], IRLS_TOL, IRLS_MAX_ITER),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn midpoint_query_transforms_exactly() {
        let state = IRLSState {
            beta: vec![1.0, -1.0],
            iterations: 3,
            converged: true,
            final_step_norm: 0.0,
            diverging: false,
            norm_trace: vec![],
        };
        let inv = SpdMatrix::identity(2);
        let q1 = transform_query(&[2.0, 2.0], 1.0, &state, &inv, false).unwrap();
        assert_eq!(q1.pi_star, 0.5);
        assert_eq!(q1.w_star, 0.25);
        assert_eq!(q1.z_star, 2.0);
        assert_eq!(q1.e2_b, 1.0);
        assert_eq!(q1.d_tilde, 0.25 * 8.0);
        let q0 = transform_query(&[2.0, 2.0], 0.0, &state, &inv, false).unwrap();
        assert_eq!(q0.z_star, -2.0);
        assert_eq!(q0.e2_b, 1.0);
    }

    #[test]
    fn saturation_requires_opt_in() {
        let state = IRLSState {
            beta: vec![100.0],
            iterations: 1,
            converged: true,
            final_step_norm: 0.0,
            diverging: false,
            norm_trace: vec![],
        };
        let inv = SpdMatrix::identity(1);
        assert!(matches!(
            transform_query(&[1.0], 1.0, &state, &inv, false),
            Err(Error::Saturation { .. })
        ));
        let q = transform_query(&[1.0], 1.0, &state, &inv, true).unwrap();
        assert_eq!(q.w_star, WEIGHT_FLOOR);
    }

    #[test]
    fn unconverged_state_is_refused() {
        let state = IRLSState {
            beta: vec![1.0],
            iterations: 100,
            converged: false,
            final_step_norm: 1.0,
            diverging: true,
            norm_trace: vec![],
        };
        assert!(matches!(
            transform_query(&[1.0], 1.0, &state, &SpdMatrix::identity(1), false),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn gate_precondition() {
        let q = BinaryPointQuery {
            x_star: vec![1.0, 0.0, 0.0],
            y_star: 1.0,
            pi_star: 0.5,
            w_star: 0.25,
            z_star: 2.0,
            e2_b: 1.0,
            d_tilde: 0.25,
        };
        assert!(dshapley_binary_bounds(&q, 100, 5, &BoundParams::default()).is_err());
        assert!(dshapley_binary_bounds(&q, 100, 6, &BoundParams::default()).is_ok());
    }

    #[test]
    fn gaussian_c_fit_recovers_coefficients() {
        let mut rng = RandomStream::new(17, 0);
        let n = 10_000;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.standard_normal());
        let y: Vec<f64> = (0..n)
            .map(|r| {
                let pi = inv_logit(2.0 * x[(r, 0)]);
                if rng.uniform() < pi {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let s = irls_fit(&x, &y, IRLS_TOL, IRLS_MAX_ITER).unwrap();
        assert!(s.converged);
        for (b, t) in s.beta.iter().zip([2.0, 0.0, 0.0]) {
            assert!((b - t).abs() < 0.15, "{:?}", s.beta);
        }
        let g = log_likelihood_gradient(&x, &y, &s.beta);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gn <= 10.0 * IRLS_TOL, "gradient norm {gn}");
    }
}
