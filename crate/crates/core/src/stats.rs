//! Statistical machinery shared by the experiment harness and the
//! acceptance suite: streaming moments, quantiles, Mann-Kendall trend
//! checks with bootstrap calibration, a permutation test for serial
//! independence, and total variation distances between empirical
//! histograms with Poisson-bootstrap standard errors.
//!
//! Everything is seeded explicitly and deterministic.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seeding;

/// Two-sided 95% normal quantile, used for the 2 SE / 3 SE bands.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Streaming mean and variance accumulator; merging two accumulators is
/// exact, which is what makes report pooling equivalent to one larger run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Welford) -> Welford {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Welford {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let mut w = Welford::default();
    for &x in xs {
        w.push(x);
    }
    (w.mean, w.se())
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    }
}

/// Standard normal via Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Poisson sample (Knuth for small means, normal approximation for large).
pub fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 30.0 {
        let x = mean + mean.sqrt() * normal(rng);
        return x.round().max(0.0) as u64;
    }
    let l = (-mean).exp();
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.random::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

/// Mann-Kendall S statistic: the number of increasing pairs minus the
/// number of decreasing pairs.
pub fn mann_kendall_s(values: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            s += match values[j].partial_cmp(&values[i]).unwrap() {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    s
}

/// One grid cell summarized for a trend check: an estimate and its standard
/// error.
#[derive(Debug, Clone, Copy)]
pub struct CellEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl CellEstimate {
    pub fn from_fraction(successes: u64, n: u64) -> CellEstimate {
        let p = if n == 0 { 0.0 } else { successes as f64 / n as f64 };
        let se = if n == 0 {
            0.0
        } else {
            (p * (1.0 - p) / n as f64).sqrt()
        };
        CellEstimate {
            estimate: p,
            stderr: se,
        }
    }
}

/// Verdict of a Mann-Kendall trend check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendCheck {
    pub s_observed: i64,
    /// Exact permutation p-value of the one-sided test for an increasing
    /// trend: the fraction of cell orderings with S at least as large.
    pub p_permutation: f64,
    /// Bootstrap probability that S <= 0 under the estimated cell sampling
    /// noise (diagnostic; reported, not gated on).
    pub p_nonpositive: f64,
    /// Increasing trend declared at the 5% level of the distribution-free
    /// permutation test.
    pub increasing_detected: bool,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..n {
            let mut q: Vec<usize> = p.iter().map(|&v| if v >= slot { v + 1 } else { v }).collect();
            q.push(slot);
            out.push(q);
        }
    }
    out
}

/// Mann-Kendall test for an increasing trend across ordered cells at the
/// 5% level.
///
/// The gate is the exact permutation test (distribution-free, the right
/// null on grids of a handful of cells); the Gaussian-jitter bootstrap over
/// the cell standard errors is computed alongside for the report.
pub fn mk_increasing_check(cells: &[CellEstimate], seed: u64) -> TrendCheck {
    assert!(cells.len() >= 2 && cells.len() <= 8);
    let values: Vec<f64> = cells.iter().map(|c| c.estimate).collect();
    let s_observed = mann_kendall_s(&values);
    let perms = permutations(values.len());
    let at_least = perms
        .iter()
        .filter(|p| {
            let permuted: Vec<f64> = p.iter().map(|&i| values[i]).collect();
            mann_kendall_s(&permuted) >= s_observed
        })
        .count();
    let p_permutation = at_least as f64 / perms.len() as f64;

    let b = 4000;
    let mut rng = seeding::rng(seed, &[0x7e5d]);
    let mut nonpos = 0usize;
    let mut draw = vec![0.0f64; cells.len()];
    for _ in 0..b {
        for (i, c) in cells.iter().enumerate() {
            draw[i] = c.estimate + c.stderr * normal(&mut rng);
        }
        if mann_kendall_s(&draw) <= 0 {
            nonpos += 1;
        }
    }
    let p_nonpositive = nonpos as f64 / b as f64;
    TrendCheck {
        s_observed,
        p_permutation,
        p_nonpositive,
        increasing_detected: p_permutation < 0.05,
    }
}

/// Are consecutive cells nondecreasing within `band` standard errors of
/// each difference?
pub fn nondecreasing_within(cells: &[CellEstimate], band: f64) -> bool {
    cells.windows(2).all(|w| {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].estimate - w[0].estimate >= -band * se
    })
}

/// Are consecutive cells nonincreasing within `band` standard errors?
pub fn nonincreasing_within(cells: &[CellEstimate], band: f64) -> bool {
    cells.windows(2).all(|w| {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[0].estimate - w[1].estimate >= -band * se
    })
}

/// Are consecutive cells strictly decreasing by more than `band` standard
/// errors of each difference?
pub fn strictly_decreasing_beyond(cells: &[CellEstimate], band: f64) -> bool {
    cells.windows(2).all(|w| {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[0].estimate - w[1].estimate > band * se
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Serial-dependence statistic for a sequence of pairs: the largest
/// absolute lag-1 correlation among the four coordinate combinations.
pub fn lag1_statistic(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 3 {
        return 0.0;
    }
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let n = pairs.len() - 1;
    let mut worst = 0.0f64;
    for (xs, ys) in [
        (&a[..n], &a[1..]),
        (&b[..n], &b[1..]),
        (&a[..n], &b[1..]),
        (&b[..n], &a[1..]),
    ] {
        worst = worst.max(pearson(xs, ys).abs());
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuffleTest {
    pub statistic: f64,
    pub p_value: f64,
    /// Independence is retained when the observed statistic is not extreme
    /// among the shuffles at the 5% level.
    pub independent: bool,
}

/// Permutation test for serial independence of a pair sequence: the pair
/// order is shuffled (keeping each pair intact), which preserves the
/// marginal law while destroying any serial structure.
pub fn shuffle_independence_test(pairs: &[(f64, f64)], seed: u64) -> ShuffleTest {
    let b = 500;
    let statistic = lag1_statistic(pairs);
    let mut rng = seeding::rng(seed, &[0x51u64]);
    let mut shuffled = pairs.to_vec();
    let mut at_least = 0usize;
    for _ in 0..b {
        // Fisher-Yates.
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        if lag1_statistic(&shuffled) >= statistic {
            at_least += 1;
        }
    }
    let p_value = (at_least as f64 + 1.0) / (b as f64 + 1.0);
    ShuffleTest {
        statistic,
        p_value,
        independent: p_value >= 0.05,
    }
}

/// Empirical histogram over integers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram {
    pub counts: BTreeMap<i64, u64>,
    pub total: u64,
}

impl Histogram {
    pub fn push(&mut self, x: i64) {
        *self.counts.entry(x).or_default() += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&k, &v) in &other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.total += other.total;
    }

    pub fn probability(&self, x: i64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.get(&x).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// Total variation distance between two empirical histograms.
    pub fn tv_distance(&self, other: &Histogram) -> f64 {
        let keys: std::collections::BTreeSet<i64> = self
            .counts
            .keys()
            .chain(other.counts.keys())
            .copied()
            .collect();
        keys.iter()
            .map(|&k| (self.probability(k) - other.probability(k)).abs())
            .sum::<f64>()
            / 2.0
    }

    /// Poisson-bootstrap resample: each count is replaced by a Poisson draw
    /// with its own mean, a standard device for histogram uncertainty.
    pub fn poisson_resample(&self, rng: &mut ChaCha8Rng) -> Histogram {
        let mut out = Histogram::default();
        for (&k, &v) in &self.counts {
            let c = poisson(rng, v as f64);
            if c > 0 {
                out.counts.insert(k, c);
                out.total += c;
            }
        }
        out
    }
}

/// Bootstrap standard errors for a vector of TV distances to a common
/// reference histogram, resampling both sides.
pub fn tv_with_bootstrap_se(
    cells: &[Histogram],
    reference: &Histogram,
    seed: u64,
) -> Vec<CellEstimate> {
    let b = 400;
    let observed: Vec<f64> = cells.iter().map(|h| h.tv_distance(reference)).collect();
    let mut draws: Vec<Welford> = vec![Welford::default(); cells.len()];
    for rep in 0..b {
        let mut rng = seeding::rng(seed, &[0x72u64, rep]);
        let ref_star = reference.poisson_resample(&mut rng);
        for (i, h) in cells.iter().enumerate() {
            let h_star = h.poisson_resample(&mut rng);
            draws[i].push(h_star.tv_distance(&ref_star));
        }
    }
    observed
        .into_iter()
        .zip(draws)
        .map(|(estimate, w)| CellEstimate {
            estimate,
            stderr: w.variance().sqrt(),
        })
        .collect()
}

/// Bootstrap standard error of a sample quantile (resampling with
/// replacement, seeded).
pub fn quantile_with_bootstrap_se(values: &[f64], q: f64, seed: u64) -> CellEstimate {
    let estimate = quantile(values, q);
    let b = 400;
    let mut rng = seeding::rng(seed, &[0x91u64]);
    let mut w = Welford::default();
    let mut resample = vec![0.0f64; values.len()];
    for _ in 0..b {
        for slot in resample.iter_mut() {
            *slot = values[rng.random_range(0..values.len())];
        }
        w.push(quantile(&resample, q));
    }
    CellEstimate {
        estimate,
        stderr: w.variance().sqrt(),
    }
}

/// Least-squares slope with a Gaussian-jitter bootstrap standard error,
/// for cell means with known standard errors.
pub fn slope_with_se(xs: &[f64], cells: &[CellEstimate], seed: u64) -> CellEstimate {
    assert_eq!(xs.len(), cells.len());
    let ys: Vec<f64> = cells.iter().map(|c| c.estimate).collect();
    let estimate = ols_slope(xs, &ys);
    let b = 1000;
    let mut rng = seeding::rng(seed, &[0x93u64]);
    let mut w = Welford::default();
    let mut jittered = vec![0.0f64; cells.len()];
    for _ in 0..b {
        for (i, c) in cells.iter().enumerate() {
            jittered[i] = c.estimate + c.stderr * normal(&mut rng);
        }
        w.push(ols_slope(xs, &jittered));
    }
    CellEstimate {
        estimate,
        stderr: w.variance().sqrt(),
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Percentile bootstrap confidence interval for a log-log decay exponent
/// `gamma` (the negated slope of log density on log t), jittering each
/// density by its standard error.
pub fn decay_exponent_ci(
    ts: &[f64],
    cells: &[CellEstimate],
    seed: u64,
) -> (f64, (f64, f64)) {
    assert_eq!(ts.len(), cells.len());
    let log_t: Vec<f64> = ts.iter().map(|&t| t.ln()).collect();
    let log_d: Vec<f64> = cells.iter().map(|c| c.estimate.max(1e-12).ln()).collect();
    let gamma = -ols_slope(&log_t, &log_d);
    let b = 2000;
    let mut rng = seeding::rng(seed, &[0x9a_u64]);
    let mut draws = Vec::with_capacity(b);
    let mut jittered = vec![0.0f64; cells.len()];
    for _ in 0..b {
        for (i, c) in cells.iter().enumerate() {
            let d = (c.estimate + c.stderr * normal(&mut rng)).max(1e-12);
            jittered[i] = d.ln();
        }
        draws.push(-ols_slope(&log_t, &jittered));
    }
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = draws[(0.025 * (b as f64 - 1.0)).round() as usize];
    let hi = draws[(0.975 * (b as f64 - 1.0)).round() as usize];
    (gamma, (lo, hi))
}
