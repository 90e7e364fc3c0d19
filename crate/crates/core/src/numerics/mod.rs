//! Shared numerical kernel: random streams, SPD linear algebra and the
//! logistic link.

pub mod linalg;
pub mod rng;

pub use linalg::{
    cholesky, cholesky_solve, estimate_second_moment, mahalanobis_sq, spd_inverse,
    spd_inverse_with, GaussianSampler, InverseOptions, SpdMatrix,
};
pub use rng::{chi_squared, sample_chi_squared, RandomStream};

/// Standard sigmoid, evaluated without overflow for any finite `t`.
pub fn inv_logit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Log-odds, the inverse of [`inv_logit`].
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
