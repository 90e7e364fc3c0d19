//! Distributional Shapley values for regression, binary classification and
//! kernel density estimation, with an enumeration oracle and a Monte-Carlo
//! baseline.
//!
//! The distributional Shapley value of a point `z*` is the expected marginal
//! contribution `U(S ∪ {z*}) − U(S)` over a coalition `S` of `j − 1` i.i.d.
//! draws from the data distribution, with `j` uniform on `1..=m`. The fast
//! estimators in [`regression`], [`classification`] and [`density`] replace
//! the model fit inside that expectation with closed-form expressions;
//! [`baseline`] keeps the fit and serves as the reference.

pub mod baseline;
pub mod classification;
pub mod density;
pub mod error;
pub mod estimate;
pub mod numerics;
pub mod regression;

pub use error::{Error, Result};
pub use estimate::{RunningStats, ValueEstimate};
pub use numerics::{RandomStream, SpdMatrix};
