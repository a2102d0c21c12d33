//! Monte Carlo experiments on the L1 deviation and the block statistics.

use serde::{Deserialize, Serialize};

use crate::blocks::BlockSampler;
use crate::density::Density;
use crate::error::{Error, Result};
use crate::kde::{l1_deviation, natural_window, L1Integrator};
use crate::kernel::Kernel;
use crate::parallel::{par_map, try_par_map};
use crate::rng::{replicate_rng, replicate_seed, rng_from_seed};
use crate::sets::IntervalSet;
use crate::stats::{bootstrap_ci, ks_normal, ks_permutation_test, mean, prokhorov_upper, tail_ratio, variance, TailRatio, TwoSampleKs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    L1Centered,
    SN,
    XiN,
    ConditionalSN,
}

impl StatisticKind {
    fn stream(self, n: usize) -> u64 {
        let tag: u64 = match self {
            StatisticKind::L1Centered => 1,
            StatisticKind::SN => 2,
            StatisticKind::XiN => 3,
            StatisticKind::ConditionalSN => 4,
        };
        tag << 40 | n as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate_id: usize,
    pub seed: u64,
    pub n: usize,
    pub h: f64,
    pub actual_count: usize,
    pub l1_deviation: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    pub grid_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatePool {
    pub kind: StatisticKind,
    pub n: usize,
    pub h: f64,
    pub master_seed: u64,
    pub replicate_count: usize,
    pub stats: Vec<f64>,
    pub rows: Vec<ReplicateRow>,
}

/// Replicates of ∫_B |f_n - E f_n| (B = whole line when `set` is None).
/// Replicate i draws from `replicate_rng(seed, stream, i)`.
#[allow(clippy::too_many_arguments)]
fn deviation_pool(
    f: &Density,
    k: &Kernel,
    n: usize,
    h: f64,
    set: Option<&IntervalSet>,
    replicates: usize,
    seed: u64,
    threads: usize,
    kind: StatisticKind,
) -> Result<ReplicatePool> {
    let (lo, hi) = natural_window(f, h);
    let bins = match set {
        Some(s) => s.clip(lo, hi).intervals().to_vec(),
        None => vec![(lo, hi)],
    };
    if bins.is_empty() {
        return Err(Error::EmptySet);
    }
    let integ = L1Integrator::auto(f, k, h, bins)?;
    let stream = kind.stream(n);
    let rows = try_par_map(threads, replicates, |i| {
        let rseed = replicate_seed(seed, stream, i as u64);
        let mut rng = rng_from_seed(rseed);
        let xs = f.sample_sorted(n, &mut rng);
        let inside = xs.first().is_none_or(|&a| a - 0.5 * h >= lo) && xs.last().is_none_or(|&b| b + 0.5 * h <= hi);
        let (value, wlo, whi, step) = if inside || set.is_some() {
            let v: f64 = integ.integrate(&xs, n).iter().sum();
            (v, lo, hi, integ.grid_step())
        } else {
            let d = l1_deviation(&xs, n, f, k, h, None, None)?;
            (d.value, d.window_lo, d.window_hi, d.grid_step)
        };
        Ok(ReplicateRow { replicate_id: i, seed: rseed, n, h, actual_count: n, l1_deviation: value, window_lo: wlo, window_hi: whi, grid_step: step })
    })?;
    Ok(ReplicatePool {
        kind,
        n,
        h,
        master_seed: seed,
        replicate_count: replicates,
        stats: rows.iter().map(|r| r.l1_deviation).collect(),
        rows,
    })
}

/// Replicates of ||f_n - E f_n||_1 from fixed-size samples.
pub fn l1_pool(f: &Density, k: &Kernel, n: usize, h: f64, replicates: usize, seed: u64, threads: usize) -> Result<ReplicatePool> {
    deviation_pool(f, k, n, h, None, replicates, seed, threads, StatisticKind::L1Centered)
}

/// sqrt(n) (L - mean(L)) / sigma.
pub fn normalize(pool: &ReplicatePool, sigma: f64) -> Vec<f64> {
    let m = mean(&pool.stats);
    let rn = (pool.n as f64).sqrt();
    pool.stats.iter().map(|v| rn * (v - m) / sigma).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBands {
    pub mean_se: f64,
    pub variance_se: f64,
    /// 95% Kolmogorov null quantile 1.358 / sqrt(N).
    pub ks_null95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub ks: f64,
    pub levy_prokhorov_upper: f64,
    pub mean: f64,
    pub variance: f64,
    pub mc_bands: McBands,
}

pub fn distance_report(zs: &[f64]) -> DistanceReport {
    let n = zs.len() as f64;
    let (m, v) = (mean(zs), variance(zs));
    let m4 = zs.iter().map(|z| (z - m).powi(4)).sum::<f64>() / n;
    DistanceReport {
        ks: ks_normal(zs),
        levy_prokhorov_upper: prokhorov_upper(zs),
        mean: m,
        variance: v,
        mc_bands: McBands { mean_se: (v / n).sqrt(), variance_se: ((m4 - v * v) / n).max(0.0).sqrt(), ks_null95: 1.358 / n.sqrt() },
    }
}

/// Pool of L1 deviations and the distance of its normalised law to N(0, 1).
pub fn run_clt_experiment(f: &Density, k: &Kernel, h: f64, n: usize, replicates: usize, seed: u64, threads: usize) -> Result<(ReplicatePool, DistanceReport)> {
    if replicates < 500 {
        return Err(Error::InvalidConfig(format!("{replicates} replicates, need at least 500")));
    }
    let sigma = k.asymptotic_variance()?.sqrt();
    let pool = l1_pool(f, k, n, h, replicates, seed, threads)?;
    let report = distance_report(&normalize(&pool, sigma));
    Ok((pool, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: usize,
    pub h: f64,
    pub n_var: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// n Var / sigma^2.
    pub ratio: f64,
    pub ks: f64,
    pub levy_prokhorov_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub sigma2: f64,
    pub rows: Vec<VarianceRow>,
    pub pools: Vec<ReplicatePool>,
}

impl VarianceTable {
    /// |ratio - 1| strictly decreasing along the schedule.
    pub fn ratio_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| (w[1].ratio - 1.0).abs() < (w[0].ratio - 1.0).abs())
    }

    pub fn ks_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ks < w[0].ks)
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// n Var ||f_n - E f_n||_1 with percentile-bootstrap 95% intervals along a
/// schedule of (n, h) pairs with n h^2 increasing.
pub fn variance_convergence(f: &Density, k: &Kernel, schedule: &[(usize, f64)], replicates: usize, seed: u64, threads: usize) -> Result<VarianceTable> {
    for w in schedule.windows(2) {
        let a = w[0].0 as f64 * w[0].1 * w[0].1;
        let b = w[1].0 as f64 * w[1].1 * w[1].1;
        if b <= a {
            return Err(Error::ScheduleViolation(format!("n h^2 falls from {a} to {b}")));
        }
    }
    let sigma2 = k.asymptotic_variance()?;
    let mut rows = Vec::new();
    let mut pools = Vec::new();
    for (j, &(n, h)) in schedule.iter().enumerate() {
        let pool = l1_pool(f, k, n, h, replicates, seed, threads)?;
        let nf = n as f64;
        let n_var = nf * variance(&pool.stats);
        let mut rng = replicate_rng(seed, 0xB007, j as u64);
        let (lo, hi) = bootstrap_ci(&pool.stats, |s| nf * variance(s), BOOTSTRAP_RESAMPLES, 0.95, &mut rng);
        let d = distance_report(&normalize(&pool, sigma2.sqrt()));
        rows.push(VarianceRow { n, h, n_var, ci_lo: lo, ci_hi: hi, ratio: n_var / sigma2, ks: d.ks, levy_prokhorov_upper: d.levy_prokhorov_upper });
        pools.push(pool);
    }
    Ok(VarianceTable { sigma2, rows, pools })
}

/// Tail ratios of a normalised pool at each x; rows with fewer than
/// `min_hits` exceedances are flagged.
pub fn moderate_deviation_ratio(zs: &[f64], xs: &[f64], coverage: f64, min_hits: usize) -> Vec<TailRatio> {
    xs.iter().map(|&x| tail_ratio(zs, x, min_hits, coverage)).collect()
}

/// Turns flagged rows into the `TooFewTailHits` error.
pub fn require_tail_hits(rows: &[TailRatio]) -> Result<()> {
    match rows.iter().find(|r| r.flagged) {
        Some(r) => Err(Error::TooFewTailHits { x: r.x, hits: r.upper_hits.min(r.lower_hits) }),
        None => Ok(()),
    }
}

/// max(e, ln x).
pub fn log_star(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError { what: "log* argument", value: x });
    }
    Ok(x.ln().max(std::f64::consts::E))
}

pub const SERIES_TERMS: usize = 200;
const SERIES_REL_STOP: f64 = 1e-18;

/// sum_{m >= 2} (720 e lambda kappa / ln m)^m (Omega^{m/2} + n^{1 - m/2} Omega),
/// stopping once a term drops below 1e-18 of the partial sum.
pub fn exp_moment_series(lambda: f64, kappa: f64, omega: f64, n: usize) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let c = 720.0 * std::f64::consts::E * lambda * kappa;
    let nf = n as f64;
    let mut sum = 0.0;
    for m in 2..=SERIES_TERMS {
        let mf = m as f64;
        let base = mf * (c / mf.ln()).ln();
        let a = base + 0.5 * mf * omega.ln();
        let b = base + (1.0 - 0.5 * mf) * nf.ln() + omega.ln();
        let term = a.exp() + b.exp();
        if !term.is_finite() {
            return Err(Error::SeriesDiverges { m });
        }
        sum += term;
        if term < SERIES_REL_STOP * sum {
            return Ok(sum);
        }
    }
    Err(Error::SeriesDiverges { m: SERIES_TERMS })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentRow {
    pub lambda: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    /// 4 exp(series); infinite when the series diverges.
    pub bound: f64,
    pub series_diverges: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundRow {
    pub z: f64,
    pub empirical: f64,
    /// exp{-kappa^-1 Omega^{-1/2} z log* log*(z / (kappa Omega^{1/2}))} with A = 1.
    pub bound: f64,
    /// bound / empirical.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub omega: f64,
    pub kappa: f64,
    pub xi_sd: f64,
    pub rows: Vec<ExpMomentRow>,
    pub tail_rows: Vec<TailBoundRow>,
    pub pool: ReplicatePool,
}

/// E exp{lambda |xi_n|} for xi_n = ∫_B (Delta_n - E Delta_n), with E Delta_n
/// replaced by the pool mean, against the series bound.
#[allow(clippy::too_many_arguments)]
pub fn exponential_moment_check(
    f: &Density,
    k: &Kernel,
    h: f64,
    n: usize,
    b: &IntervalSet,
    lambdas: &[f64],
    replicates: usize,
    seed: u64,
    threads: usize,
) -> Result<ExpMomentReport> {
    let mut pool = deviation_pool(f, k, n, h, Some(b), replicates, seed, threads, StatisticKind::XiN)?;
    let rn = (n as f64).sqrt();
    let raw: Vec<f64> = pool.stats.iter().map(|v| rn * v).collect();
    let m = mean(&raw);
    pool.stats = raw.iter().map(|v| v - m).collect();
    let xi = &pool.stats;
    let omega = crate::rates::omega_set(f, h, b)?;
    let kappa = k.norms().kappa;
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let e: Vec<f64> = xi.iter().map(|x| (lambda * x.abs()).exp()).collect();
        let (mc_mean, mc_se) = (mean(&e), (variance(&e) / e.len() as f64).sqrt());
        let (bound, series_diverges) = match exp_moment_series(lambda, kappa, omega, n) {
            Ok(s) => (4.0 * s.exp(), false),
            Err(Error::SeriesDiverges { .. }) => (f64::INFINITY, true),
            Err(e) => return Err(e),
        };
        rows.push(ExpMomentRow { lambda, mc_mean, mc_se, bound, series_diverges, pass: mc_mean <= bound + 3.0 * mc_se });
    }
    let sd = variance(xi).sqrt();
    let scale = kappa * omega.sqrt();
    let mut tail_rows = Vec::new();
    for mult in [1.0, 2.0, 3.0] {
        let z = mult * sd;
        let empirical = xi.iter().filter(|x| x.abs() >= z).count() as f64 / xi.len() as f64;
        let ll = log_star(log_star(z / scale)?)?;
        let bound = (-z / scale * ll).exp();
        tail_rows.push(TailBoundRow { z, empirical, bound, slack: if empirical > 0.0 { bound / empirical } else { f64::INFINITY } });
    }
    Ok(ExpMomentReport { omega, kappa, xi_sd: sd, rows, tail_rows, pool })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepoissonReport {
    pub n: usize,
    pub accepted: usize,
    pub attempts: usize,
    pub acceptance_rate: f64,
    /// 1 / sqrt(2 pi n).
    pub expected_rate: f64,
    pub test: TwoSampleKs,
    pub fixed: Vec<f64>,
    pub conditioned: Vec<f64>,
}

impl DepoissonReport {
    pub fn rate_within(&self, rel: f64) -> bool {
        (self.acceptance_rate / self.expected_rate - 1.0).abs() <= rel
    }
}

/// Fixed-n S_n against Poissonised S_n kept when eta == n.
pub fn depoissonization_check(sampler: &BlockSampler, replicates: usize, permutations: usize, seed: u64, threads: usize) -> Result<DepoissonReport> {
    let n = sampler.n;
    let max_attempts = ((10.0 * (n as f64).sqrt()).ceil() as usize).max(1) * 20;
    let s_fixed = StatisticKind::SN.stream(n);
    let s_cond = StatisticKind::ConditionalSN.stream(n);
    let fixed = par_map(threads, replicates, |i| sampler.draw_fixed(&mut replicate_rng(seed, s_fixed, i as u64)).s)?;
    let cond = try_par_map(threads, replicates, |i| {
        let (d, a) = sampler.draw_conditioned(&mut replicate_rng(seed, s_cond, i as u64), max_attempts)?;
        Ok((d.s, a))
    })?;
    let attempts: usize = cond.iter().map(|c| c.1).sum();
    let acceptance_rate = replicates as f64 / attempts as f64;
    if acceptance_rate < 1.0 / (10.0 * (n as f64).sqrt()) {
        return Err(Error::RejectionTooSlow { rate: acceptance_rate });
    }
    let conditioned: Vec<f64> = cond.into_iter().map(|c| c.0).collect();
    let mut rng = replicate_rng(seed, 0xDE90, n as u64);
    let test = ks_permutation_test(&fixed, &conditioned, permutations, &mut rng);
    Ok(DepoissonReport {
        n,
        accepted: replicates,
        attempts,
        acceptance_rate,
        expected_rate: 1.0 / (2.0 * std::f64::consts::PI * n as f64).sqrt(),
        test,
        fixed,
        conditioned,
    })
}
