//! Estimate containers returned by every valuation routine.

/// Welford accumulator for a running mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise merge; order of merges fixes the rounding.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        self.mean += delta * other.n as f64 / nf;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A DShapley estimate with its Monte-Carlo error and convergence metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueEstimate {
    pub value: f64,
    /// Monte-Carlo standard error; zero for deterministic paths.
    pub std_error: f64,
    /// Inner draws consumed for each outer index that was visited.
    pub inner_iters_used: Vec<usize>,
    /// Outer index at which early stopping fired, if it did.
    pub truncated_at_j: Option<usize>,
    /// Set when the outer sum was empty (horizon below the gate).
    pub empty_sum: bool,
    /// Draws or terms dropped as degenerate.
    pub skipped_terms: usize,
}

impl ValueEstimate {
    pub fn zero_empty() -> Self {
        Self {
            value: 0.0,
            std_error: 0.0,
            inner_iters_used: Vec::new(),
            truncated_at_j: None,
            empty_sum: true,
            skipped_terms: 0,
        }
    }

    pub fn from_stats(stats: &RunningStats) -> Self {
        Self {
            value: stats.mean(),
            std_error: stats.std_error(),
            inner_iters_used: vec![stats.count() as usize],
            truncated_at_j: None,
            empty_sum: false,
            skipped_terms: 0,
        }
    }
}

/// Relative-change test used by the early-stopping loops. A zero reference
/// counts as not converged.
pub(crate) fn relative_change_within(new: f64, old: f64, tol: f64) -> bool {
    if old == 0.0 || !old.is_finite() || !new.is_finite() {
        return false;
    }
    (new / old - 1.0).abs() <= tol
}
