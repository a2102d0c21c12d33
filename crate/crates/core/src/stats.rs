//! Sample statistics used by the experiment harness.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::special::{norm_cdf, norm_quantile, norm_sf};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// sup |F_N - Phi|.
pub fn ks_normal(xs: &[f64]) -> f64 {
    let v = sorted_copy(xs);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let p = norm_cdf(x);
        d.max((i as f64 + 1.0) / n - p).max(p - i as f64 / n)
    })
}

/// Two-sample KS statistic on pre-sorted inputs.
fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    ks_sorted(&sorted_copy(a), &sorted_copy(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleKs {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Two-sample KS with a permutation p-value (1 + #{D* >= D}) / (1 + P).
pub fn ks_permutation_test(a: &[f64], b: &[f64], permutations: usize, rng: &mut Rng) -> TwoSampleKs {
    let d = ks_two_sample(a, b);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut hits = 0usize;
    for _ in 0..permutations {
        pooled.shuffle(rng);
        let (x, y) = pooled.split_at(a.len());
        if ks_two_sample(x, y) >= d - 1e-15 {
            hits += 1;
        }
    }
    TwoSampleKs { statistic: d, p_value: (1 + hits) as f64 / (1 + permutations) as f64, permutations }
}

/// Percentile bootstrap interval for `stat` at the given coverage.
pub fn bootstrap_ci(xs: &[f64], stat: impl Fn(&[f64]) -> f64, resamples: usize, coverage: f64, rng: &mut Rng) -> (f64, f64) {
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let mut reps: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let q = |p: f64| reps[((p * resamples as f64).floor() as usize).min(resamples - 1)];
    let tail = 0.5 * (1.0 - coverage);
    (q(tail), q(1.0 - tail))
}

/// Bootstrap standard error of `stat`.
pub fn bootstrap_se(xs: &[f64], stat: impl Fn(&[f64]) -> f64, resamples: usize, rng: &mut Rng) -> f64 {
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let reps: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    variance(&reps).sqrt()
}

/// Unbiased k-statistic of order 2, 3 or 4.
pub fn k_statistic(xs: &[f64], r: usize) -> Result<f64> {
    let n = xs.len() as f64;
    if xs.len() < 4 {
        return Err(Error::InvalidConfig("k-statistics need at least 4 values".into()));
    }
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    match r {
        2 => Ok(n * m2 / (n - 1.0)),
        3 => Ok(n * n * m3 / ((n - 1.0) * (n - 2.0))),
        4 => Ok(n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0))),
        _ => Err(Error::InvalidConfig(format!("k-statistic order {r} not supported"))),
    }
}

/// cov(a, b) and its standard error from the centred products.
pub fn covariance_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (ma, mb) = (mean(a), mean(b));
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let n = prods.len() as f64;
    let c = prods.iter().sum::<f64>() / (n - 1.0);
    (c, (variance(&prods) / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRatio {
    pub x: f64,
    pub upper_hits: usize,
    pub upper_ratio: f64,
    pub upper_ci: (f64, f64),
    pub lower_hits: usize,
    pub lower_ratio: f64,
    pub lower_ci: (f64, f64),
    /// Fewer than `min_hits` exceedances on either side.
    pub flagged: bool,
}

impl TailRatio {
    pub fn contains_one(&self) -> bool {
        self.upper_ci.0 <= 1.0 && 1.0 <= self.upper_ci.1 && self.lower_ci.0 <= 1.0 && 1.0 <= self.lower_ci.1
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(hits: usize, n: usize, z: f64) -> (f64, f64) {
    let (k, n) = (hits as f64, n as f64);
    let p = k / n;
    let den = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// (1 - F(x)) / (1 - Phi(x)) and F(-x) / Phi(-x) with Wilson bands at the
/// given two-sided coverage.
pub fn tail_ratio(zs: &[f64], x: f64, min_hits: usize, coverage: f64) -> TailRatio {
    let n = zs.len();
    let up = zs.iter().filter(|&&z| z > x).count();
    let lo = zs.iter().filter(|&&z| z < -x).count();
    let phi = norm_sf(x);
    let zc = norm_quantile(0.5 + 0.5 * coverage);
    let scale = |(a, b): (f64, f64)| (a / phi, b / phi);
    TailRatio {
        x,
        upper_hits: up,
        upper_ratio: up as f64 / n as f64 / phi,
        upper_ci: scale(wilson(up, n, zc)),
        lower_hits: lo,
        lower_ratio: lo as f64 / n as f64 / phi,
        lower_ci: scale(wilson(lo, n, zc)),
        flagged: up < min_hits || lo < min_hits,
    }
}

/// Number of epsilon values scanned by `prokhorov_upper`.
pub const PROKHOROV_GRID: usize = 10_000;

/// Upper bound on the Prokhorov distance between the empirical law of `zs`
/// and N(0, 1): the Ky Fan distance of the quantile coupling, minimised over
/// an epsilon grid on (0, 1].
pub fn prokhorov_upper(zs: &[f64]) -> f64 {
    let v = sorted_copy(zs);
    let n = v.len() as f64;
    // P(|X - Y| > eps) with X = F_N^{-1}(U), Y = Phi^{-1}(U)
    let miss = |eps: f64| -> f64 {
        let mut inside = 0.0;
        for (j, &x) in v.iter().enumerate() {
            let (a, b) = (j as f64 / n, (j as f64 + 1.0) / n);
            let (lo, hi) = (norm_cdf(x - eps), norm_cdf(x + eps));
            inside += (hi.min(b) - lo.max(a)).max(0.0);
        }
        (1.0 - inside).max(0.0)
    };
    // miss is non-increasing in eps, so bisect over grid indices
    let grid = |i: usize| (i + 1) as f64 / PROKHOROV_GRID as f64;
    let (mut lo, mut hi) = (0usize, PROKHOROV_GRID - 1);
    if miss(grid(lo)) <= grid(lo) {
        return grid(lo);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if miss(grid(mid)) <= grid(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    grid(hi)
}

/// Least-squares slope of ln|v| against ln x.
pub fn log_log_slope(xs: &[f64], vs: &[f64]) -> Result<f64> {
    let abs: Vec<f64> = vs.iter().map(|v| v.abs()).collect();
    crate::rates::rate_slope(xs, &abs)
}
