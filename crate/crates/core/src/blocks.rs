//! Partition of [-M, M] into blocks of controlled probability, block
//! classification, and Poissonised block statistics (delta_i, u_i, S, U, V).

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::kde::{L1Integrator, L1Method};
use crate::kernel::{nabeya_cov, Kernel, Shape};
use crate::quadrature::{split_points, GaussLegendre};
use crate::rates::RnProfile;
use crate::rng::Rng;
use crate::sets::IntervalSet;
use crate::special::mean_abs_normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockClass {
    /// First or last block, of width h.
    Edge,
    /// Large local approximation error relative to the block's mass.
    Upsilon1,
    /// Most of the block's mass lies outside the admissible set.
    Upsilon2,
    /// Regular blocks; their union is C_n.
    Upsilon3,
}

impl BlockClass {
    pub fn label(self) -> &'static str {
        match self {
            BlockClass::Edge => "edge",
            BlockClass::Upsilon1 => "Y1",
            BlockClass::Upsilon2 => "Y2",
            BlockClass::Upsilon3 => "Y3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// 1-based block index.
    pub i: usize,
    pub z_lo: f64,
    pub z_hi: f64,
    /// I_i = E ∩ [z_lo, z_hi).
    pub set: IntervalSet,
    /// P(I_i).
    pub p: f64,
    /// P[z_lo, z_hi).
    pub q: f64,
    pub class: BlockClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub h: f64,
    pub psi: f64,
    pub alpha: f64,
    /// Tail cutoff M_n with P(|X| > M_n) = alpha.
    pub m_cut: f64,
    pub m_cells: i64,
    pub h_star: f64,
    pub cuts: Vec<f64>,
    pub blocks: Vec<Block>,
    /// C_n, the union of the regular blocks.
    pub c_set: IntervalSet,
    /// P[-M, M].
    pub core_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// psi <= q_i <= P_n + 2 psi for interior blocks.
    pub interior_mass_ok: bool,
    /// q_1, q_s <= P_n.
    pub edge_mass_ok: bool,
    /// z_i - z_{i-1} >= h.
    pub gap_ok: bool,
    /// sum q_i = P[-M, M].
    pub mass_identity_ok: bool,
    /// sum over Upsilon1 of p_i <= 4 ||K^2|| R_n(E, E) / sigma^2.
    pub upsilon1_ok: bool,
    /// sum over Upsilon2 of p_i <= 1 - P(E).
    pub upsilon2_ok: bool,
}

impl InvariantReport {
    pub fn all(&self) -> bool {
        self.interior_mass_ok && self.edge_mass_ok && self.gap_ok && self.mass_identity_ok && self.upsilon1_ok && self.upsilon2_ok
    }
}

/// Relative slack for floating-point comparisons in the invariant checks.
const SLACK: f64 = 1e-12;

impl Partition {
    /// Builds the cuts, the sets I_i and the block classes.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        f: &Density,
        h: f64,
        e: &IntervalSet,
        psi: f64,
        alpha: f64,
        r_profile: &RnProfile,
        sigma2: f64,
        l2: f64,
    ) -> Result<Self> {
        if !(h > 0.0) || !(psi > 0.0) {
            return Err(Error::PartitionDegenerate(format!("need h > 0 and psi > 0, got h = {h}, psi = {psi}")));
        }
        let m = f.tail_cutoff(alpha)?.m;
        let m_cells = (m / h).floor() as i64 - 1;
        if m_cells < 1 {
            return Err(Error::PartitionDegenerate(format!("M = {m} shorter than 2h = {}", 2.0 * h)));
        }
        let h_star = (m - h) / m_cells as f64;
        let inner = m - h;
        if f.prob(-inner, inner) < psi {
            return Err(Error::PartitionDegenerate(format!("P[-M+h, M-h] below psi = {psi}")));
        }
        let cut = |l: i64| {
            if l == -m_cells {
                -inner
            } else if l == m_cells {
                inner
            } else {
                l as f64 * h_star
            }
        };
        let mut ls = vec![-m_cells];
        loop {
            let prev = *ls.last().unwrap();
            let mut l = prev + 1;
            while l < m_cells && f.prob(cut(prev), cut(l)) < psi {
                l += 1;
            }
            if l < m_cells && f.prob(cut(l), inner) >= psi {
                ls.push(l);
            } else {
                ls.push(m_cells);
                break;
            }
        }
        let mut z = vec![-m];
        z.extend(ls.iter().map(|&l| cut(l)));
        z.push(m);
        let s = z.len() - 1;
        if s < 3 {
            return Err(Error::PartitionDegenerate(format!("only {s} blocks")));
        }
        let mut blocks = Vec::with_capacity(s);
        for i in 1..=s {
            let (lo, hi) = (z[i - 1], z[i]);
            let set = e.clip(lo, hi);
            let p = f.mass(&set);
            let q = f.prob(lo, hi);
            let class = if i == 1 || i == s {
                BlockClass::Edge
            } else if 4.0 * l2 * r_profile.over(&set) >= p * sigma2 {
                BlockClass::Upsilon1
            } else if p <= q - p {
                BlockClass::Upsilon2
            } else {
                BlockClass::Upsilon3
            };
            blocks.push(Block { i, z_lo: lo, z_hi: hi, set, p, q, class });
        }
        let c_set = blocks
            .iter()
            .filter(|b| b.class == BlockClass::Upsilon3)
            .fold(IntervalSet::empty(), |acc, b| acc.union(&b.set));
        Ok(Self { h, psi, alpha, m_cut: m, m_cells, h_star, cuts: z, blocks, c_set, core_mass: f.prob(-m, m) })
    }

    /// 1-based indices of the blocks in `class`.
    pub fn indices(&self, class: BlockClass) -> Vec<usize> {
        self.blocks.iter().filter(|b| b.class == class).map(|b| b.i).collect()
    }

    pub fn regular_blocks(&self) -> Vec<&Block> {
        self.blocks.iter().filter(|b| b.class == BlockClass::Upsilon3).collect()
    }

    pub fn check_invariants(&self, p_n: f64, r_total: f64, phi_n: f64, sigma2: f64, l2: f64) -> InvariantReport {
        let s = self.blocks.len();
        let tol = |x: f64| SLACK * x.abs().max(1e-300) + 1e-15;
        let interior_mass_ok = self.blocks[1..s - 1]
            .iter()
            .all(|b| b.q >= self.psi - tol(self.psi) && b.q <= p_n + 2.0 * self.psi + tol(p_n + 2.0 * self.psi));
        let edge_mass_ok = self.blocks[0].q <= p_n + tol(p_n) && self.blocks[s - 1].q <= p_n + tol(p_n);
        let gap_ok = self.cuts.windows(2).all(|w| w[1] - w[0] >= self.h * (1.0 - SLACK));
        let total: f64 = self.blocks.iter().map(|b| b.q).sum();
        let mass_identity_ok = (total - self.core_mass).abs() <= 1e-12;
        let u1: f64 = self.blocks.iter().filter(|b| b.class == BlockClass::Upsilon1).map(|b| b.p).sum();
        let upsilon1_ok = u1 <= 4.0 * l2 * r_total / sigma2 + 1e-12;
        let u2: f64 = self.blocks.iter().filter(|b| b.class == BlockClass::Upsilon2).map(|b| b.p).sum();
        let upsilon2_ok = u2 <= phi_n + 1e-12;
        InvariantReport { interior_mass_ok, edge_mass_ok, gap_ok, mass_identity_ok, upsilon1_ok, upsilon2_ok }
    }
}

/// sigma_n^2(B) = ∫_B ∫_B 1{|x - y| <= h} C_n(x, y) sqrt(k_n(x) k_n(y)) dy dx,
/// the variance of ∫_B Delta_eta under the Gaussian covariance.
pub fn sigma_n_sq_theory(f: &Density, k: &Kernel, h: f64, b: &IntervalSet) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::EmptySet);
    }
    let rule = GaussLegendre::new(32);
    let k2 = k.shape(Shape::KSquared);
    let mut total = 0.0;
    for &(a, c) in b.intervals() {
        let steps = ((c - a) / (0.2 * h)).ceil().max(1.0) as usize;
        let dx = (c - a) / steps as f64;
        for i in 0..=steps {
            let x = a + dx * i as f64;
            let sx = f.smooth(x, h, k2);
            let mut cuts = vec![0.0];
            for &(p, q) in b.intervals() {
                cuts.push((p - x) / h);
                cuts.push((q - x) / h);
            }
            let mut inner = 0.0;
            for w in split_points(-1.0, 1.0, &cuts).windows(2) {
                let mid = x + 0.5 * (w[0] + w[1]) * h;
                if !b.contains(mid) {
                    continue;
                }
                for (u, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let t = w[0] + 0.5 * (w[1] - w[0]) * (u + 1.0);
                    let y = x + t * h;
                    let sy = f.smooth(y, h, k2);
                    if !(sx > 0.0 && sy > 0.0) {
                        continue;
                    }
                    let num = f.smooth(x, h, &k.lag_product(t));
                    let rho = (num / (sx * sy).sqrt()).clamp(-1.0, 1.0);
                    // C_n sqrt(k_n(x) k_n(y)) with k_n = smooth(K^2) / h
                    inner += 0.5 * (w[1] - w[0]) * wt * nabeya_cov(rho)? * (sx * sy).sqrt() / h;
                }
            }
            let tw = if i == 0 || i == steps { 0.5 * dx } else { dx };
            total += tw * h * inner;
        }
    }
    Ok(total)
}

/// ∫_B E|Z| sqrt(k_n(x)) dx, the normal proxy for ∫_B E Delta_eta.
pub fn centering_proxy(f: &Density, k: &Kernel, h: f64, b: &IntervalSet) -> f64 {
    let k2 = k.shape(Shape::KSquared);
    let g = |x: f64| mean_abs_normal() * (f.smooth(x, h, k2) / h).max(0.0).sqrt();
    let mut s = 0.0;
    for &(a, c) in b.intervals() {
        let steps = ((c - a) / (0.05 * h)).ceil().max(2.0) as usize;
        let (xs, step) = crate::quadrature::uniform_grid(a, c, (c - a) / steps as f64);
        let v: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
        s += crate::quadrature::trapezoid(&v, step);
    }
    s
}

/// One Poissonised (or conditioned) draw of the block statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDraw {
    /// delta_i for the regular blocks, in block order.
    pub delta: Vec<f64>,
    /// u_i for every block.
    pub u: Vec<f64>,
    pub s: f64,
    pub u_total: f64,
    pub v: f64,
    pub eta: usize,
}

/// Everything needed to turn a sample into block statistics.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    pub partition: Partition,
    pub n: usize,
    pub sigma_c: f64,
    density: Density,
    integrator: L1Integrator,
    /// Regular block index owning each integrator bin.
    bin_owner: Vec<usize>,
    centering: Vec<f64>,
}

impl BlockSampler {
    /// `sigma_c` overrides the theoretical sigma_n(C_n) when given.
    pub fn new(f: &Density, k: &Kernel, n: usize, partition: Partition, sigma_c: Option<f64>, method: Option<L1Method>) -> Result<Self> {
        let regular = partition.regular_blocks();
        if regular.is_empty() {
            return Err(Error::PartitionDegenerate("no regular blocks".into()));
        }
        let h = partition.h;
        let mut bins = Vec::new();
        let mut bin_owner = Vec::new();
        for (j, b) in regular.iter().enumerate() {
            for &iv in b.set.intervals() {
                bins.push(iv);
                bin_owner.push(j);
            }
        }
        let sigma_c = match sigma_c {
            Some(s) => s,
            None => sigma_n_sq_theory(f, k, h, &partition.c_set)?.sqrt(),
        };
        if !(sigma_c > 0.0) {
            return Err(Error::DegenerateDenominator("sigma_n(C_n) vanishes"));
        }
        let centering = regular.iter().map(|b| centering_proxy(f, k, h, &b.set)).collect();
        let integrator = match method {
            Some(m) => L1Integrator::new(f, k, h, bins, m)?,
            None => L1Integrator::auto(f, k, h, bins)?,
        };
        Ok(Self { partition, n, sigma_c, density: f.clone(), integrator, bin_owner, centering })
    }

    pub fn regular_count(&self) -> usize {
        self.centering.len()
    }

    /// Block index i of each entry of `BlockDraw::delta`.
    pub fn regular_indices(&self) -> Vec<usize> {
        self.partition.indices(BlockClass::Upsilon3)
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    /// Statistics of a sorted sample of any size, with divisor n.
    pub fn stats(&self, sorted: &[f64]) -> BlockDraw {
        let rn = (self.n as f64).sqrt();
        let ints = self.integrator.integrate(sorted, self.n);
        let mut delta = vec![0.0; self.centering.len()];
        for (v, &j) in ints.iter().zip(&self.bin_owner) {
            delta[j] += rn * v;
        }
        for (d, c) in delta.iter_mut().zip(&self.centering) {
            *d = (*d - c) / self.sigma_c;
        }
        let p = &self.partition;
        let nf = self.n as f64;
        let mut u = Vec::with_capacity(p.blocks.len());
        for b in &p.blocks {
            let lo = sorted.partition_point(|&x| x < b.z_lo);
            let hi = if b.i == p.blocks.len() { sorted.partition_point(|&x| x <= b.z_hi) } else { sorted.partition_point(|&x| x < b.z_hi) };
            u.push(((hi - lo) as f64 - nf * b.q) / rn);
        }
        let inside = sorted.partition_point(|&x| x <= p.m_cut) - sorted.partition_point(|&x| x < -p.m_cut);
        let outside = (sorted.len() - inside) as f64;
        let v = (outside - nf * (1.0 - p.core_mass)) / rn;
        BlockDraw { s: delta.iter().sum(), u_total: u.iter().sum(), delta, u, v, eta: sorted.len() }
    }

    /// Poissonised draw: eta ~ Poisson(n) points.
    pub fn draw(&self, rng: &mut Rng) -> BlockDraw {
        let eta = Poisson::new(self.n as f64).expect("positive mean").sample(rng) as usize;
        let xs = self.density.sample_sorted(eta, rng);
        self.stats(&xs)
    }

    /// Fixed-n draw: exactly n points.
    pub fn draw_fixed(&self, rng: &mut Rng) -> BlockDraw {
        let xs = self.density.sample_sorted(self.n, rng);
        self.stats(&xs)
    }

    /// Poissonised draw kept only when eta == n; returns the number of
    /// attempts used alongside the accepted draw.
    pub fn draw_conditioned(&self, rng: &mut Rng, max_attempts: usize) -> Result<(BlockDraw, usize)> {
        let pois = Poisson::new(self.n as f64).expect("positive mean");
        for attempt in 1..=max_attempts {
            let eta = pois.sample(rng) as usize;
            if eta == self.n {
                let xs = self.density.sample_sorted(eta, rng);
                return Ok((self.stats(&xs), attempt));
            }
        }
        Err(Error::RejectionTooSlow { rate: 1.0 / max_attempts as f64 })
    }
}
