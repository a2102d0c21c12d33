//! Pooled checks on Poissonised block draws: variances, 1-dependence,
//! S/U covariance, moment growth and cumulants.

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockDraw, BlockSampler, InvariantReport, Partition};
use crate::density::Density;
use crate::error::{Error, Result};
use crate::kde::L1Method;
use crate::kernel::Kernel;
use crate::rates::{double_integrals, rate_ledger_with, RateConstants, RateLedger};
use crate::sets::IntervalSet;
use crate::parallel::par_map;
use crate::rng::{replicate_rng, Rng};
use crate::stats::{bootstrap_se, covariance_with_se, k_statistic, mean, variance};

const STREAM_BLOCKS: u64 = 0xB10C;

/// Desk-scale choices the asymptotic construction leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    /// Multiplier in psi_n; 256 in the asymptotic statement.
    pub psi_scale: f64,
    /// Tail mass alpha_n outside [-M, M], used in place of the rate formula.
    pub alpha: f64,
}

impl Default for BlockParams {
    fn default() -> Self {
        Self { psi_scale: 0.5, alpha: 0.05 }
    }
}

/// Regular set, rate ledger, partition and its invariant report for one (n, h).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSetup {
    pub n: usize,
    pub h: f64,
    pub params: BlockParams,
    pub set: IntervalSet,
    pub ledger: RateLedger,
    pub partition: Partition,
    pub invariants: InvariantReport,
}

impl BlockSetup {
    pub fn new(f: &Density, k: &Kernel, n: usize, h: f64, params: BlockParams) -> Result<Self> {
        let set = f.example_set(h)?;
        let di = double_integrals(f, k, &set, n, h)?;
        let c = RateConstants { a: 1.0, psi_scale: params.psi_scale };
        let ledger = rate_ledger_with(f, k, n, h, &set, c, &di)?;
        let l2 = k.norms().l2;
        let partition = Partition::build(f, h, &set, ledger.psi_n, params.alpha, &di.r_profile, ledger.sigma2, l2)?;
        let invariants = partition.check_invariants(ledger.p_n, ledger.r_n, ledger.phi_n, ledger.sigma2, l2);
        Ok(Self { n, h, params, set, ledger, partition, invariants })
    }

    pub fn sampler(&self, f: &Density, k: &Kernel, sigma_c: Option<f64>, method: Option<L1Method>) -> Result<BlockSampler> {
        BlockSampler::new(f, k, self.n, self.partition.clone(), sigma_c, method)
    }
}

/// `draws` Poissonised block draws; draw i uses its own derived stream.
pub fn block_pool(sampler: &BlockSampler, draws: usize, seed: u64, threads: usize) -> Result<Vec<BlockDraw>> {
    let stream = STREAM_BLOCKS << 32 | sampler.n as u64;
    par_map(threads, draws, |i| sampler.draw(&mut replicate_rng(seed, stream, i as u64)))
}

fn column(pool: &[BlockDraw], f: impl Fn(&BlockDraw) -> f64) -> Vec<f64> {
    pool.iter().map(f).collect()
}

/// Standard error of the unbiased sample variance, from the fourth moment.
fn variance_se(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVarianceReport {
    pub draws: usize,
    pub var_s: f64,
    pub var_s_se: f64,
    pub var_u: f64,
    pub var_u_se: f64,
    /// 1 - alpha_n, the exact Var(U_n).
    pub var_u_expected: f64,
    pub sum_var_delta: f64,
    pub sum_var_delta_se: f64,
    /// Per regular block: (i, p_i, sigma_n^2(I_i) estimate, its s.e.).
    pub block_variances: Vec<(usize, f64, f64, f64)>,
    /// Every sigma_n^2(I_i) inside [p sigma^2 / 4 - 5 se, 2 p sigma^2 + 5 se].
    pub sandwich_ok: bool,
}

pub fn block_variance_check(sampler: &BlockSampler, pool: &[BlockDraw], sigma2: f64) -> BlockVarianceReport {
    let s = column(pool, |d| d.s);
    let u = column(pool, |d| d.u_total);
    let idx = sampler.regular_indices();
    let sc2 = sampler.sigma_c * sampler.sigma_c;
    let mut sum_var = 0.0;
    let mut sum_var_se2 = 0.0;
    let mut block_variances = Vec::with_capacity(idx.len());
    let mut sandwich_ok = true;
    for (j, &i) in idx.iter().enumerate() {
        let d = column(pool, |b| b.delta[j]);
        let (v, se) = (variance(&d), variance_se(&d));
        sum_var += v;
        sum_var_se2 += se * se;
        let p = sampler.partition.blocks[i - 1].p;
        let (sv, sse) = (v * sc2, se * sc2);
        sandwich_ok &= sv >= p * sigma2 / 4.0 - 5.0 * sse && sv <= 2.0 * p * sigma2 + 5.0 * sse;
        block_variances.push((i, p, sv, sse));
    }
    BlockVarianceReport {
        draws: pool.len(),
        var_s: variance(&s),
        var_s_se: variance_se(&s),
        var_u: variance(&u),
        var_u_se: variance_se(&u),
        var_u_expected: sampler.partition.core_mass,
        sum_var_delta: sum_var,
        // blocks are treated as independent for the error bar
        sum_var_delta_se: sum_var_se2.sqrt(),
        block_variances,
        sandwich_ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    /// Number of (i, j) pairs with |i - j| >= 2.
    pub pairs: usize,
    /// Largest |cov / se| over those pairs.
    pub max_nonadjacent_z: f64,
    pub worst_pair: Option<(usize, usize)>,
    /// Largest |cov / se| over adjacent pairs, which may be non-zero.
    pub max_adjacent_z: f64,
    pub cov_s_v_z: f64,
    pub cov_u_v_z: f64,
}

impl DependenceReport {
    pub fn passes(&self, z: f64) -> bool {
        self.max_nonadjacent_z <= z && self.cov_s_v_z.abs() <= z && self.cov_u_v_z.abs() <= z
    }
}

pub fn one_dependence_test(sampler: &BlockSampler, pool: &[BlockDraw]) -> DependenceReport {
    let idx = sampler.regular_indices();
    let cols: Vec<Vec<f64>> = (0..idx.len()).map(|j| column(pool, |d| d.delta[j])).collect();
    let (mut pairs, mut worst, mut worst_pair, mut adj) = (0, 0.0f64, None, 0.0f64);
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            let (c, se) = covariance_with_se(&cols[a], &cols[b]);
            let z = if se > 0.0 { (c / se).abs() } else { 0.0 };
            if idx[b] - idx[a] >= 2 {
                pairs += 1;
                if z > worst {
                    worst = z;
                    worst_pair = Some((idx[a], idx[b]));
                }
            } else {
                adj = adj.max(z);
            }
        }
    }
    let s = column(pool, |d| d.s);
    let u = column(pool, |d| d.u_total);
    let v = column(pool, |d| d.v);
    let zscore = |a: &[f64], b: &[f64]| {
        let (c, se) = covariance_with_se(a, b);
        if se > 0.0 {
            c / se
        } else {
            0.0
        }
    };
    DependenceReport {
        pairs,
        max_nonadjacent_z: worst,
        worst_pair,
        max_adjacent_z: adj,
        cov_s_v_z: zscore(&s, &v),
        cov_u_v_z: zscore(&u, &v),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnUnCovariance {
    pub chi_hat: f64,
    pub se: f64,
    /// ||K^3|| lambda(E) / (sigma ||K^2|| sqrt(n h^2)) with A = 1.
    pub bound: f64,
    /// max over regular blocks of |corr(delta_i, u_i)|.
    pub max_block_corr: f64,
}

pub fn covariance_sn_un(sampler: &BlockSampler, pool: &[BlockDraw], l2: f64, l3: f64, sigma: f64, e_measure: f64) -> SnUnCovariance {
    let s = column(pool, |d| d.s);
    let u = column(pool, |d| d.u_total);
    let (chi_hat, se) = covariance_with_se(&s, &u);
    let n = sampler.n as f64;
    let h = sampler.partition.h;
    let bound = l3 * e_measure / (sigma * l2 * (n * h * h).sqrt());
    let idx = sampler.regular_indices();
    let mut max_block_corr = 0.0f64;
    for (j, &i) in idx.iter().enumerate() {
        let d = column(pool, |b| b.delta[j]);
        let ui = column(pool, |b| b.u[i - 1]);
        let (c, _) = covariance_with_se(&d, &ui);
        let den = (variance(&d) * variance(&ui)).sqrt();
        if den > 0.0 {
            max_block_corr = max_block_corr.max((c / den).abs());
        }
    }
    SnUnCovariance { chi_hat, se, bound, max_block_corr }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGrowth {
    pub r: u32,
    /// max_i E|delta_i|^r / (r^r p_i^{r/2-1} Psi^{r/2} Var delta_i).
    pub max_ratio: f64,
    /// Per-block E|delta_i - mean|^r / Var^{r/2}: 1 at r = 2, near 3 at r = 4
    /// for Gaussian-like blocks.
    pub standardized: Vec<f64>,
    /// max_i over t in {(1,0), (0,1)} of E|t.(delta_i, u_i)|^r / (r! Var).
    pub bernstein_ratio: f64,
}

pub fn moment_growth_check(sampler: &BlockSampler, pool: &[BlockDraw], r: u32, big_psi: f64) -> Result<MomentGrowth> {
    if r < 2 {
        return Err(Error::InvalidConfig(format!("moment order {r} below 2")));
    }
    let rf = r as f64;
    let fact: f64 = (2..=r).map(|k| k as f64).product();
    let idx = sampler.regular_indices();
    let mut max_ratio = 0.0f64;
    let mut bern = 0.0f64;
    let mut standardized = Vec::with_capacity(idx.len());
    let abs_moment = |xs: &[f64]| {
        let m = mean(xs);
        xs.iter().map(|x| (x - m).abs().powf(rf)).sum::<f64>() / xs.len() as f64
    };
    for (j, &i) in idx.iter().enumerate() {
        let d = column(pool, |b| b.delta[j]);
        let ui = column(pool, |b| b.u[i - 1]);
        let p = sampler.partition.blocks[i - 1].p;
        let n = d.len() as f64;
        let var_pop = variance(&d) * (n - 1.0) / n;
        let em = abs_moment(&d);
        standardized.push(em / var_pop.powf(rf / 2.0));
        max_ratio = max_ratio.max(em / (rf.powf(rf) * p.powf(rf / 2.0 - 1.0) * big_psi.powf(rf / 2.0) * var_pop));
        for col in [&d, &ui] {
            let v = variance(col) * (n - 1.0) / n;
            if v > 0.0 {
                bern = bern.max(abs_moment(col) / (fact * v));
            }
        }
    }
    Ok(MomentGrowth { r, max_ratio, standardized, bernstein_ratio: bern })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantEstimate {
    pub r: usize,
    pub gamma: f64,
    pub se: f64,
}

/// k-statistic of t1 S_n + t2 U_n with a bootstrap standard error.
pub fn cumulant_estimate(pool: &[BlockDraw], t: (f64, f64), r: usize, resamples: usize, rng: &mut Rng) -> Result<CumulantEstimate> {
    let xs = column(pool, |d| t.0 * d.s + t.1 * d.u_total);
    cumulant_of(&xs, r, resamples, rng)
}

pub fn cumulant_of(xs: &[f64], r: usize, resamples: usize, rng: &mut Rng) -> Result<CumulantEstimate> {
    let gamma = k_statistic(xs, r)?;
    let se = bootstrap_se(xs, |b| k_statistic(b, r).unwrap_or(f64::NAN), resamples, rng);
    Ok(CumulantEstimate { r, gamma, se })
}
