//! The small dense linear-algebra kernel shared by the estimators: Cholesky
//! based SPD inversion, second-moment estimation and quadratic forms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::numerics::rng::RandomStream;

/// Relative pivot floor below which a Cholesky factorisation is declared singular.
const PIVOT_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Validates symmetry (relative 1e-12) and a successful Cholesky factorisation.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        let m = symmetrize(m);
        cholesky(&m)?;
        Ok(Self(m))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        spd_inverse(&self.0)
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let p = self.dim();
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x.len(),
            });
        }
        let mut acc = 0.0;
        for i in 0..p {
            let mut row = 0.0;
            for j in 0..p {
                row += self.0[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        Ok(acc)
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.0.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Lower Cholesky factor.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        cholesky(&self.0).expect("validated at construction")
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(invalid(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Lower-triangular `L` with `L Lᵀ = m`; reports the first failing pivot.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    let scale = (0..p).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max);
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > PIVOT_FLOOR * scale) || !diag.is_finite() {
            return Err(Error::SingularMatrix { pivot: j });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..p {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the lower factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = l.nrows();
    let mut y = b.clone();
    for i in 0..p {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

fn inverse_from_factor(l: &DMatrix<f64>) -> DMatrix<f64> {
    let p = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(p, p);
    let mut e = DVector::<f64>::zeros(p);
    for c in 0..p {
        e.fill(0.0);
        e[c] = 1.0;
        let col = cholesky_solve(l, &e);
        inv.set_column(c, &col);
    }
    symmetrize(inv)
}

/// Options for [`spd_inverse_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseOptions {
    /// Added to the diagonal before factorising.
    pub jitter: f64,
    /// Retry once with an extra `1e-10 · trace / p` on the diagonal.
    pub retry: bool,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            jitter: 0.0,
            retry: true,
        }
    }
}

impl InverseOptions {
    pub fn strict() -> Self {
        Self {
            jitter: 0.0,
            retry: false,
        }
    }
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<SpdMatrix> {
    spd_inverse_with(m, InverseOptions::default())
}

pub fn spd_inverse_with(m: &DMatrix<f64>, opts: InverseOptions) -> Result<SpdMatrix> {
    check_symmetric(m)?;
    let p = m.nrows();
    let base = symmetrize(m.clone());
    let attempt = |extra: f64| {
        let mut a = base.clone();
        for i in 0..p {
            a[(i, i)] += extra;
        }
        cholesky(&a)
    };
    let factor = match attempt(opts.jitter) {
        Ok(l) => l,
        Err(err) if opts.retry && p > 0 => {
            let trace: f64 = (0..p).map(|i| base[(i, i)]).sum();
            let bump = 1e-10 * trace / p as f64;
            if bump > 0.0 {
                attempt(opts.jitter + bump)?
            } else {
                return Err(err);
            }
        }
        Err(err) => return Err(err),
    };
    Ok(SpdMatrix(inverse_from_factor(&factor)))
}

/// Uncentered second moment `(1/N) Σ xᵢxᵢᵀ + ridge·I` of the rows of `samples`.
pub fn estimate_second_moment(samples: &DMatrix<f64>, ridge: f64) -> Result<SpdMatrix> {
    let (n, p) = samples.shape();
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(invalid("ridge must be a finite nonnegative number"));
    }
    if ridge == 0.0 && n < p {
        return Err(Error::RankDeficient {
            samples: n,
            dim: p,
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData { n, p });
    }
    let mut m = samples.tr_mul(samples) / n as f64;
    for i in 0..p {
        m[(i, i)] += ridge;
    }
    SpdMatrix::new(m)
}

/// `xᵀ Σ⁻¹ x` given the inverse.
pub fn mahalanobis_sq(x: &[f64], sigma_inv: &SpdMatrix) -> Result<f64> {
    Ok(sigma_inv.quad_form(x)?.max(0.0))
}

/// Sampler for `N(0, Σ)`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(sigma: &SpdMatrix) -> Self {
        Self {
            factor: sigma.cholesky_factor(),
        }
    }

    pub fn standard(p: usize) -> Self {
        Self {
            factor: DMatrix::identity(p, p),
        }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample(&self, rng: &mut RandomStream) -> Vec<f64> {
        let p = self.dim();
        let z: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        (0..p)
            .map(|i| (0..=i).map(|k| self.factor[(i, k)] * z[k]).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RandomStream::new(seed, 0);
        let a = DMatrix::from_fn(p, p, |_, _| rng.standard_normal());
        &a * a.transpose() + DMatrix::identity(p, p) * 0.5
    }

    #[test]
    fn identity_inverts_to_identity() {
        let inv = spd_inverse(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(inv.as_matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_inverse() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let inv = spd_inverse(&m).unwrap();
        assert!((inv.as_matrix()[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((inv.as_matrix()[(1, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(inv.as_matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn random_spd_multiplies_back_to_identity() {
        for seed in 0..20 {
            let a = random_spd(6, seed);
            let inv = spd_inverse(&a).unwrap();
            let prod = &a * inv.as_matrix();
            let err = frob(&(prod - DMatrix::identity(6, 6))) / 6f64.sqrt();
            assert!(err < 1e-8, "seed {seed}: {err}");
        }
    }

    #[test]
    fn indefinite_matrix_names_failing_pivot() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            spd_inverse(&m).unwrap_err(),
            Error::SingularMatrix { pivot: 1 }
        );
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(
            spd_inverse(&z).unwrap_err(),
            Error::SingularMatrix { pivot: 0 }
        );
    }

    #[test]
    fn rank_one_matrix_is_rescued_only_with_retry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            spd_inverse_with(&m, InverseOptions::strict()),
            Err(Error::SingularMatrix { pivot: 1 })
        ));
        assert!(spd_inverse(&m).is_ok());
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(spd_inverse(&m), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn second_moment_of_symmetric_cross() {
        let s = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let m = estimate_second_moment(&s, 0.0).unwrap();
        assert_eq!(m.as_matrix(), &DMatrix::from_diagonal_element(2, 2, 0.5));
    }

    #[test]
    fn huge_ridge_dominates() {
        let s = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -3.0, 0.5, 0.2, 0.1]);
        let m = estimate_second_moment(&s, 1e6).unwrap();
        let target = DMatrix::from_diagonal_element(2, 2, 1e6);
        assert!(frob(&(m.as_matrix() - &target)) / frob(&target) < 1e-5);
    }

    #[test]
    fn too_few_samples_without_ridge() {
        let s = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_eq!(
            estimate_second_moment(&s, 0.0).unwrap_err(),
            Error::RankDeficient { samples: 1, dim: 2 }
        );
        assert!(estimate_second_moment(&s, 0.1).is_ok());
    }

    #[test]
    fn second_moment_of_standard_normal_draws() {
        let mut rng = RandomStream::new(11, 0);
        let n = 100_000;
        let s = DMatrix::from_fn(n, 3, |_, _| rng.standard_normal());
        let m = estimate_second_moment(&s, 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((m.as_matrix()[(i, j)] - target).abs() < 0.05);
            }
        }
    }

    #[test]
    fn mahalanobis_examples() {
        let id = SpdMatrix::identity(2);
        assert_eq!(mahalanobis_sq(&[3.0, 4.0], &id).unwrap(), 25.0);
        assert_eq!(mahalanobis_sq(&[0.0, 0.0], &id).unwrap(), 0.0);
        let inv = SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap().inverse().unwrap();
        assert!((mahalanobis_sq(&[2.0, 0.0], &inv).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            mahalanobis_sq(&[1.0], &id),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn gaussian_sampler_reproduces_covariance() {
        let sigma = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0])).unwrap();
        let sampler = GaussianSampler::new(&sigma);
        let mut rng = RandomStream::new(3, 0);
        let n = 100_000;
        let draws = DMatrix::from_fn(n, 2, |_, _| 0.0);
        let mut draws = draws;
        for r in 0..n {
            let x = sampler.sample(&mut rng);
            draws[(r, 0)] = x[0];
            draws[(r, 1)] = x[1];
        }
        let m = estimate_second_moment(&draws, 0.0).unwrap();
        assert!((m.as_matrix()[(0, 0)] - 2.0).abs() < 0.05);
        assert!((m.as_matrix()[(0, 1)] - 0.6).abs() < 0.05);
        assert!((m.as_matrix()[(1, 1)] - 1.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn inverse_is_an_involution(seed in 0u64..10_000, p in 1usize..7) {
            let a = random_spd(p, seed);
            let back = spd_inverse(&a).unwrap().inverse().unwrap();
            let rel = frob(&(back.as_matrix() - &a)) / frob(&a);
            prop_assert!(rel < 1e-6);
        }

        #[test]
        fn mahalanobis_scales_quadratically(
            seed in 0u64..10_000,
            c in -20.0f64..20.0,
            x in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let inv = spd_inverse(&random_spd(3, seed)).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            let lhs = mahalanobis_sq(&scaled, &inv).unwrap();
            let rhs = c * c * mahalanobis_sq(&x, &inv).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }
}
