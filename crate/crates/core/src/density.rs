//! DShapley of point sets for kernel density estimation.
//!
//! The value of a set `S*` of size `n` splits into a term proportional to the
//! integrated squared error of the KDE built on `S*` and a bias term that is
//! `O(h²)` for smooth densities. [`dshapley_density`] estimates both by
//! Monte-Carlo; values are defined up to an additive constant that depends
//! only on `(n, m)`, so compare sets of equal size.
//!
//! For the uniform kernel on the unit interval with a uniform density, sets of
//! one or two points have closed forms ([`uniform_closed_form`]), which also
//! drive the synergy scan.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::estimate::{RunningStats, ValueEstimate};
use crate::numerics::RandomStream;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Uniform,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            other => Err(invalid(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Product kernel with one scalar bandwidth shared by all coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64, dim: usize) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid("bandwidth must be positive and finite"));
        }
        if dim == 0 {
            return Err(invalid("kernel dimension must be positive"));
        }
        Ok(Self {
            family,
            bandwidth,
            dim,
        })
    }

    pub fn with_bandwidth(&self, h: f64) -> Result<Self> {
        Self::new(self.family, h, self.dim)
    }

    /// `k_h(u)`.
    pub fn eval(&self, u: &[f64]) -> f64 {
        let h = self.bandwidth;
        match self.family {
            KernelFamily::Uniform => {
                if u.iter().all(|v| (v / h).abs() <= 0.5) {
                    h.powi(-(self.dim as i32))
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => {
                let sq: f64 = u.iter().map(|v| (v / h) * (v / h)).sum();
                (INV_SQRT_2PI / h).powi(self.dim as i32) * (-0.5 * sq).exp()
            }
        }
    }

    /// `(k_h ∗ k_h)(u)`, used for the exact `∫p̂²` in cross-validation.
    pub fn self_convolution(&self, u: &[f64]) -> f64 {
        let h = self.bandwidth;
        match self.family {
            KernelFamily::Uniform => u
                .iter()
                .map(|v| ((1.0 - v.abs() / h).max(0.0)) / h)
                .product(),
            KernelFamily::Gaussian => {
                let s = h * std::f64::consts::SQRT_2;
                let sq: f64 = u.iter().map(|v| (v / s) * (v / s)).sum();
                (INV_SQRT_2PI / s).powi(self.dim as i32) * (-0.5 * sq).exp()
            }
        }
    }

    /// A draw from `k_h`.
    pub fn sample_noise(&self, rng: &mut RandomStream) -> Vec<f64> {
        let h = self.bandwidth;
        (0..self.dim)
            .map(|_| match self.family {
                KernelFamily::Uniform => h * (rng.uniform() - 0.5),
                KernelFamily::Gaussian => h * rng.standard_normal(),
            })
            .collect()
    }
}

fn check_points(points: &[Vec<f64>], dim: usize) -> Result<()> {
    if points.is_empty() {
        return Err(invalid("point set must be nonempty"));
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    Ok(())
}

fn kde_unchecked(points: &[Vec<f64>], kernel: &KernelSpec, z: &[f64], buf: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for s in points {
        for (b, (zi, si)) in buf.iter_mut().zip(z.iter().zip(s)) {
            *b = zi - si;
        }
        acc += kernel.eval(buf);
    }
    acc / points.len() as f64
}

/// `p̂_S(z) = |S|⁻¹ Σ k_h(z − zᵢ)`.
pub fn kde_evaluate(points: &[Vec<f64>], kernel: &KernelSpec, z: &[f64]) -> Result<f64> {
    check_points(points, kernel.dim)?;
    if z.len() != kernel.dim {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim,
            got: z.len(),
        });
    }
    let mut buf = vec![0.0; kernel.dim];
    Ok(kde_unchecked(points, kernel, z, &mut buf))
}

/// Draw from `p̂_S`: uniform component pick plus kernel noise.
pub fn sample_kde(points: &[Vec<f64>], kernel: &KernelSpec, rng: &mut RandomStream) -> Vec<f64> {
    let c = &points[rng.index(points.len())];
    let noise = kernel.sample_noise(rng);
    c.iter().zip(noise).map(|(a, b)| a + b).collect()
}

/// Least-squares cross-validation score `∫p̂² − 2·mean_test p̂` for one split.
fn lscv_split(train: &[&Vec<f64>], test: &[&Vec<f64>], kernel: &KernelSpec) -> f64 {
    let n = train.len() as f64;
    let mut buf = vec![0.0; kernel.dim];
    let mut sq = 0.0;
    for a in train {
        for b in train {
            for (d, (x, y)) in buf.iter_mut().zip(a.iter().zip(b.iter())) {
                *d = x - y;
            }
            sq += kernel.self_convolution(&buf);
        }
    }
    let int_sq = sq / (n * n);
    let mut held = 0.0;
    for z in test {
        let mut acc = 0.0;
        for s in train {
            for (d, (x, y)) in buf.iter_mut().zip(z.iter().zip(s.iter())) {
                *d = x - y;
            }
            acc += kernel.eval(&buf);
        }
        held += acc / n;
    }
    int_sq - 2.0 * held / test.len() as f64
}

/// Cross-validated LSCV score per grid entry, in grid order.
pub fn lscv_scores(
    samples: &[Vec<f64>],
    family: KernelFamily,
    grid: &[f64],
    folds: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let dim = samples.first().map(|s| s.len()).unwrap_or(0);
    check_points(samples, dim.max(1))?;
    if grid.is_empty() {
        return Err(invalid("bandwidth grid must be nonempty"));
    }
    if folds < 2 || samples.len() < folds {
        return Err(invalid(format!(
            "need at least {folds} samples and 2 folds for cross-validation"
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);
    let fold_of = |pos: usize| pos * folds / samples.len();
    let splits: Vec<(Vec<&Vec<f64>>, Vec<&Vec<f64>>)> = (0..folds)
        .map(|f| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (pos, &idx) in order.iter().enumerate() {
                if fold_of(pos) == f {
                    test.push(&samples[idx]);
                } else {
                    train.push(&samples[idx]);
                }
            }
            (train, test)
        })
        .collect();
    grid.par_iter()
        .map(|&h| {
            let kernel = KernelSpec::new(family, h, dim)?;
            let total: f64 = splits
                .iter()
                .map(|(train, test)| lscv_split(train, test, &kernel))
                .sum();
            Ok(total / folds as f64)
        })
        .collect()
}

/// Grid bandwidth minimising the `folds`-fold LSCV criterion. Ties go to the
/// larger bandwidth; non-finite scores are ignored.
pub fn select_bandwidth(
    samples: &[Vec<f64>],
    family: KernelFamily,
    grid: &[f64],
    folds: usize,
    rng: &mut RandomStream,
) -> Result<f64> {
    if let Some(&h) = grid.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
        return Err(invalid(format!("grid bandwidth {h} is not positive")));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let scores = lscv_scores(samples, family, grid, folds, rng)?;
    let mut best: Option<(f64, f64)> = None;
    for (&h, &s) in grid.iter().zip(&scores) {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some((h, s)),
            Some((bh, bs)) if s < bs || (s == bs && h > bh) => Some((h, s)),
            keep => keep,
        };
    }
    best.map(|(h, _)| h).ok_or_else(|| {
        Error::BandwidthSelection("every cross-validation score is non-finite".into())
    })
}

/// The half-decade grid `10^-2, 10^-1.5, …, 10^1`.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (0..7).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect()
}

/// `A(n, m) = (1/m) Σ_{j=1}^{m} n²/(j+n−1)²`.
pub fn coeff_a(n: usize, m: usize) -> f64 {
    let nf = n as f64;
    (1..=m)
        .map(|j| nf * nf / ((j + n - 1) as f64).powi(2))
        .sum::<f64>()
        / m as f64
}

/// `B(n, m) = (1/m) Σ_{j=2}^{m} 2n(j−1)/(j+n−1)²`.
pub fn coeff_b(n: usize, m: usize) -> f64 {
    let nf = n as f64;
    (2..=m)
        .map(|j| 2.0 * nf * (j - 1) as f64 / ((j + n - 1) as f64).powi(2))
        .sum::<f64>()
        / m as f64
}

/// A set to be valued with its horizon and Monte-Carlo budget.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityValueRequest {
    pub s_star: Vec<Vec<f64>>,
    pub m: usize,
    pub mc_budget: usize,
}

impl DensityValueRequest {
    pub fn new(s_star: Vec<Vec<f64>>, m: usize) -> Self {
        Self {
            s_star,
            m,
            mc_budget: 2000,
        }
    }

    pub fn with_budget(mut self, b: usize) -> Self {
        self.mc_budget = b;
        self
    }
}

/// Means of the two estimator components, already scaled by `A` and `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityTerms {
    pub ise_term: RunningStats,
    pub bias_term: RunningStats,
    pub total: RunningStats,
}

/// Draws the estimator components. Background indices and set samples use
/// two forked streams, so two requests under the same seed see the same
/// background draws.
pub fn density_terms(
    request: &DensityValueRequest,
    background: &[Vec<f64>],
    kernel: &KernelSpec,
    rng: &mut RandomStream,
) -> Result<DensityTerms> {
    check_points(&request.s_star, kernel.dim)?;
    check_points(background, kernel.dim)?;
    if request.m == 0 || request.mc_budget == 0 {
        return Err(invalid("m and the Monte-Carlo budget must be at least 1"));
    }
    let n = request.s_star.len();
    let a = coeff_a(n, request.m);
    let b = coeff_b(n, request.m);
    let mut bg_stream = rng.fork();
    let mut star_stream = rng.fork();
    let mut buf = vec![0.0; kernel.dim];
    let mut ise = RunningStats::new();
    let mut bias = RunningStats::new();
    let mut total = RunningStats::new();
    for _ in 0..request.mc_budget {
        let z = &background[bg_stream.index(background.len())];
        let z_star = sample_kde(&request.s_star, kernel, &mut star_stream);
        let p_star = kde_unchecked(&request.s_star, kernel, &z_star, &mut buf);
        let p_bg = kde_unchecked(&request.s_star, kernel, z, &mut buf);
        for (d, (x, y)) in buf.iter_mut().zip(z_star.iter().zip(z)) {
            *d = x - y;
        }
        let cross = kernel.eval(&buf);
        let first = -a * (p_star - 2.0 * p_bg);
        let second = b * (p_bg - cross);
        ise.push(first);
        bias.push(second);
        total.push(first + second);
    }
    Ok(DensityTerms {
        ise_term: ise,
        bias_term: bias,
        total,
    })
}

/// Monte-Carlo DShapley of the set in `request`, up to an additive constant
/// depending on `(|S*|, m)`.
pub fn dshapley_density(
    request: &DensityValueRequest,
    background: &[Vec<f64>],
    kernel: &KernelSpec,
    rng: &mut RandomStream,
) -> Result<ValueEstimate> {
    let terms = density_terms(request, background, kernel, rng)?;
    Ok(ValueEstimate::from_stats(&terms.total))
}

/// `h₂(n, s)` for the uniform kernel and uniform density on `[0, 1]`.
pub fn uniform_h2(n: usize, s: usize, h: f64) -> f64 {
    let nf = n as f64;
    let sf = s as f64;
    let denom = (sf + nf).powi(2);
    (nf * nf + 2.0 * nf * sf) / denom * (12.0 - 15.0 * h + (5.0 + sf) * h * h) / (12.0 * sf * h)
        - 2.0 * nf * sf / denom * h / 4.0
}

/// `C₀(n, m) = C_den/m + (1/m) Σ_{j=2}^{m} h₂(n, j−1)`.
pub fn uniform_c0(n: usize, m: usize, h: f64, c_den: f64) -> f64 {
    let tail: f64 = (2..=m).map(|j| uniform_h2(n, j - 1, h)).sum();
    (c_den + tail) / m as f64
}

/// Closed-form DShapley of one or two points in `[0, 1]` under the uniform
/// kernel and uniform density. Requires `h ≤ 2·min(z, 1 − z)` for every
/// point.
pub fn uniform_closed_form(points: &[f64], h: f64, m: usize, c_den: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid("bandwidth must be positive"));
    }
    if m == 0 {
        return Err(invalid("horizon m must be at least 1"));
    }
    for &z in points {
        if !(0.0..=1.0).contains(&z) || h > 2.0 * z.min(1.0 - z) * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "point {z} is too close to the boundary for bandwidth {h}"
            )));
        }
    }
    match points {
        [_] => Ok(coeff_a(1, m) * (1.0 - 1.0 / h) + uniform_c0(1, m, h, c_den)),
        [a, b] => {
            let delta = (a - b).abs();
            let shape = if delta >= h {
                1.0 - 1.0 / (2.0 * h)
            } else {
                1.0 - 1.0 / h + delta / (2.0 * h * h)
            };
            Ok(coeff_a(2, m) * shape + uniform_c0(2, m, h, c_den))
        }
        _ => Err(invalid("closed form covers sets of one or two points")),
    }
}

/// Synergy statistics for one bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynergyRecord {
    pub h: f64,
    /// Smallest gap among synergistic pairs; `None` when no pair had synergy.
    pub threshold: Option<f64>,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynergyScanResult {
    pub records: Vec<SynergyRecord>,
}

fn draw_admissible(h: f64, rng: &mut RandomStream) -> f64 {
    loop {
        let z = rng.uniform();
        if h <= 2.0 * z.min(1.0 - z) {
            return z;
        }
    }
}

/// For each bandwidth, draws random pairs in `[0, 1]` and records how often
/// the pair is worth at least the sum of its points.
pub fn synergy_scan(
    h_grid: &[f64],
    m: usize,
    c_den: f64,
    n_draws: usize,
    rng: &RandomStream,
) -> Result<SynergyScanResult> {
    if h_grid.is_empty() {
        return Err(invalid("bandwidth grid must be nonempty"));
    }
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    if let Some(&h) = h_grid.iter().find(|&&h| !(h > 0.0 && h < 1.0)) {
        return Err(invalid(format!("bandwidth {h} outside (0, 1)")));
    }
    let records: Vec<Result<SynergyRecord>> = h_grid
        .par_iter()
        .enumerate()
        .map(|(i, &h)| {
            let mut stream = rng.substream(i as u64);
            let mut hits = 0usize;
            let mut threshold: Option<f64> = None;
            for _ in 0..n_draws {
                let z1 = draw_admissible(h, &mut stream);
                let z2 = draw_admissible(h, &mut stream);
                let pair = uniform_closed_form(&[z1, z2], h, m, c_den)?;
                let single = uniform_closed_form(&[z1], h, m, c_den)?
                    + uniform_closed_form(&[z2], h, m, c_den)?;
                if pair >= single {
                    hits += 1;
                    let delta = (z1 - z2).abs();
                    threshold = Some(threshold.map_or(delta, |t: f64| t.min(delta)));
                }
            }
            Ok(SynergyRecord {
                h,
                threshold,
                probability: hits as f64 / n_draws as f64,
            })
        })
        .collect();
    Ok(SynergyScanResult {
        records: records.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uni(h: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Uniform, h, 1).unwrap()
    }

    fn gau(h: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Gaussian, h, 1).unwrap()
    }

    #[test]
    fn kernel_peaks() {
        assert_eq!(kde_evaluate(&[vec![0.0]], &uni(1.0), &[0.0]).unwrap(), 1.0);
        let g = kde_evaluate(&[vec![0.0]], &gau(1.0), &[0.0]).unwrap();
        assert!((g - 0.398_94).abs() < 1e-5);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(kde_evaluate(&[], &uni(1.0), &[0.0]).is_err());
    }

    #[test]
    fn kde_integrates_to_one_in_one_dimension() {
        let pts = vec![vec![-0.3], vec![0.1], vec![0.8]];
        for k in [uni(0.2), gau(0.2), uni(1.3), gau(0.7)] {
            let (lo, hi, steps) = (-8.0, 9.0, 200_000);
            let dx = (hi - lo) / steps as f64;
            let total: f64 = (0..steps)
                .map(|i| kde_evaluate(&pts, &k, &[lo + (i as f64 + 0.5) * dx]).unwrap() * dx)
                .sum();
            assert!((total - 1.0).abs() < 0.01, "{k:?}: {total}");
        }
    }

    #[test]
    fn kde_integrates_to_one_in_two_dimensions() {
        let pts = vec![vec![0.2, 0.3], vec![0.6, 0.5]];
        let mut rng = RandomStream::new(12, 0);
        for family in [KernelFamily::Uniform, KernelFamily::Gaussian] {
            let k = KernelSpec::new(family, 0.25, 2).unwrap();
            let n = 200_000;
            let (lo, width) = (-1.5, 4.0);
            let mean: f64 = (0..n)
                .map(|_| {
                    let z = [lo + width * rng.uniform(), lo + width * rng.uniform()];
                    kde_evaluate(&pts, &k, &z).unwrap()
                })
                .sum::<f64>()
                / n as f64;
            let total = mean * width * width;
            assert!((total - 1.0).abs() < 0.03, "{family:?}: {total}");
        }
    }

    #[test]
    fn coefficient_spot_values() {
        assert_eq!(coeff_a(1, 1), 1.0);
        for n in 1..5 {
            assert_eq!(coeff_b(n, 1), 0.0);
        }
        assert!((coeff_a(2, 3) - 0.564_815).abs() < 1e-6);
        assert!((coeff_b(2, 3) - 0.314_815).abs() < 1e-6);
    }

    #[test]
    fn coefficient_ranges() {
        for n in 1..=200 {
            let mut prev = f64::INFINITY;
            for m in 1..=200 {
                let a = coeff_a(n, m);
                assert!(a > 0.0 && a <= 1.0);
                assert!(a <= prev);
                prev = a;
                assert!(coeff_b(n, m) >= 0.0);
            }
        }
    }

    #[test]
    fn single_grid_entry_is_returned() {
        let mut rng = RandomStream::new(0, 0);
        let s = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            select_bandwidth(&s, KernelFamily::Gaussian, &[0.7], 5, &mut rng).unwrap(),
            0.7
        );
    }

    #[test]
    fn standard_normal_bandwidth() {
        let mut rng = RandomStream::new(31, 0);
        let s: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.standard_normal()]).collect();
        let h = select_bandwidth(&s, KernelFamily::Gaussian, &default_bandwidth_grid(), 5, &mut rng)
            .unwrap();
        assert!(
            (h - 10f64.powf(-0.5)).abs() < 1e-12 || (h - 1.0).abs() < 1e-12,
            "selected {h}"
        );
    }

    #[test]
    fn duplicated_samples_pick_the_smallest_bandwidth() {
        let mut rng = RandomStream::new(2, 0);
        let s = vec![vec![0.5]; 50];
        let grid = [1e-4, 0.1, 1.0];
        let scores = lscv_scores(&s, KernelFamily::Gaussian, &grid, 5, &mut rng).unwrap();
        assert!(scores.iter().all(|v| v.is_finite()));
        let h = select_bandwidth(&s, KernelFamily::Gaussian, &grid, 5, &mut rng).unwrap();
        assert_eq!(h, 1e-4);
    }

    #[test]
    fn closed_form_branches() {
        let c0 = uniform_c0(2, 100, 0.5, 0.2);
        let v = uniform_closed_form(&[0.25, 0.75], 0.5, 100, 0.2).unwrap();
        assert!((v - c0).abs() < 1e-15);
        let h = 0.2;
        let at = uniform_closed_form(&[0.4, 0.6], h, 100, 0.2).unwrap();
        let left = coeff_a(2, 100) * (1.0 - 1.0 / h + h / (2.0 * h * h)) + uniform_c0(2, 100, h, 0.2);
        assert!((at - left).abs() < 1e-12);
    }

    #[test]
    fn closed_form_difference() {
        let h = 0.2;
        let far = uniform_closed_form(&[0.3, 0.6], h, 100, 0.2).unwrap();
        let near = uniform_closed_form(&[0.49, 0.51], h, 100, 0.2).unwrap();
        let expected = coeff_a(2, 100) * (1.0 / (2.0 * h) - 0.02 / (2.0 * h * h));
        assert!((far - near - expected).abs() < 1e-12);
    }

    #[test]
    fn boundary_condition_is_enforced() {
        assert!(uniform_closed_form(&[0.05], 0.2, 100, 0.2).is_err());
        assert!(uniform_closed_form(&[0.5, 0.95], 0.2, 100, 0.2).is_err());
        assert!(uniform_closed_form(&[0.1, 0.5], 0.2, 100, 0.2).is_ok());
        assert!(uniform_closed_form(&[0.2, 0.4, 0.6], 0.2, 100, 0.2).is_err());
    }

    #[test]
    fn estimator_is_deterministic() {
        let bg: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 100.0]).collect();
        let req = DensityValueRequest::new(vec![vec![0.3], vec![0.7]], 100).with_budget(500);
        let a = dshapley_density(&req, &bg, &uni(0.2), &mut RandomStream::new(5, 0)).unwrap();
        let b = dshapley_density(&req, &bg, &uni(0.2), &mut RandomStream::new(5, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scan_rejects_empty_grid() {
        assert!(synergy_scan(&[], 100, 0.2, 10, &RandomStream::new(0, 0)).is_err());
    }

    #[test]
    fn scan_without_synergy_reports_none() {
        // With a large C_den the constant term dominates and nothing has synergy.
        let r = synergy_scan(&[0.1], 100, 1e6, 200, &RandomStream::new(1, 0)).unwrap();
        assert_eq!(r.records[0].probability, 0.0);
        assert_eq!(r.records[0].threshold, None);
    }

    proptest! {
        #[test]
        fn kde_is_symmetric(a in 0.01f64..3.0, z in -5.0f64..5.0, h in 0.05f64..2.0) {
            let pts = vec![vec![-a], vec![a]];
            for k in [uni(h), gau(h)] {
                let l = kde_evaluate(&pts, &k, &[z]).unwrap();
                let r = kde_evaluate(&pts, &k, &[-z]).unwrap();
                prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0));
            }
        }

        #[test]
        fn closed_form_is_continuous_at_branch(h in 0.01f64..0.35, m in 1usize..300) {
            let lo = 0.5 - h / 2.0;
            let v = uniform_closed_form(&[lo, lo + h], h, m, 0.2).unwrap();
            let shape = 1.0 - 1.0 / h + h / (2.0 * h * h);
            let expected = coeff_a(2, m) * shape + uniform_c0(2, m, h, 0.2);
            prop_assert!((v - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }
}
