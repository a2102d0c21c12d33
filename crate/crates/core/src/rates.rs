//! Rate ledger: the finite-n quantities that control how fast the
//! normalised L1 error approaches the normal law, for a given density,
//! kernel, sample size, bandwidth and admissible set.

use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::kde::rho_nxy;
use crate::kernel::{nabeya_cov, Kernel, Shape};
use crate::poly::PiecewisePoly;
use crate::quadrature::{adaptive_simpson, gl20, split_points, GaussLegendre};
use crate::sets::IntervalSet;

/// Constants that the asymptotic statements leave unspecified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    /// Generic constant A in the rate bounds.
    pub a: f64,
    /// Multiplier of kappa^2 sigma^-2 min(P_n, D_n h) in psi_n.
    pub psi_scale: f64,
}

impl Default for RateConstants {
    fn default() -> Self {
        Self { a: 1.0, psi_scale: 256.0 }
    }
}

/// Outer grid step for double integrals, as a fraction of h.
const OUTER_STEP: f64 = 0.2;
/// Supremum grid step, as a fraction of h.
const SUP_STEP: f64 = 0.05;
/// Grid step for rough densities, as a fraction of h.
const ROUGH_STEP: f64 = 0.05;

/// 1 - P(E).
pub fn excluded_mass(f: &Density, set: &IntervalSet) -> f64 {
    (1.0 - f.mass(set)).max(0.0)
}

/// (inf_E f, sup_E f).
pub fn density_bounds(f: &Density, set: &IntervalSet, h: f64) -> Result<(f64, f64)> {
    let (b, d) = f.extrema_on(set, SUP_STEP * h)?;
    if !(b > 0.0) {
        return Err(Error::NonPositiveValue { what: "inf of f over E", value: b });
    }
    Ok((b, d))
}

/// max_x P[x, x + 2h].
pub fn small_interval_mass(f: &Density, h: f64) -> f64 {
    f.max_window_mass(2.0 * h)
}

/// sup over the four smoothing shapes H and x in E of |f * H_h(x) - I(H) f(x)|.
pub fn smoothing_error(f: &Density, k: &Kernel, set: &IntervalSet, h: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut shapes: Vec<(&PiecewisePoly, f64)> = Vec::new();
    for s in Shape::ALL {
        let p = k.shape(s);
        let mass = k.shape_mass(s);
        // the box kernel makes all four shapes coincide
        if !shapes.iter().any(|(q, m)| *q == p && *m == mass) {
            shapes.push((p, mass));
        }
    }
    let mut best = 0.0f64;
    for &(a, b) in set.intervals() {
        let n = ((b - a) / (SUP_STEP * h)).ceil().max(1.0) as usize;
        for i in 0..=n {
            let x = a + (b - a) * i as f64 / n as f64;
            let fx = f.pdf(x);
            for (p, mass) in &shapes {
                best = best.max((f.smooth(x, h, p) - mass * fx).abs());
            }
        }
    }
    Ok(best)
}

/// ∫ over [a, b] of g, split at `breaks`, with a graded mesh towards a
/// density singularity and fine trapezoids for rough densities.
fn integrate_1d(f: &Density, g: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], h: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut br = breaks.to_vec();
    br.extend(f.singularity());
    let pts = split_points(a, b, &br);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if f.is_rough() {
            let (xs, step) = crate::quadrature::uniform_grid(p, q, ROUGH_STEP * h);
            let vals: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
            total += crate::quadrature::trapezoid(&vals, step);
        } else if f.singularity() == Some(p) {
            total += graded(g, p, q, true);
        } else if f.singularity() == Some(q) {
            total += graded(g, p, q, false);
        } else {
            let eps = 4.0 * f64::EPSILON * p.abs().max(q.abs()).max(q - p);
            let tol = 1e-12 * (q - p).max(h);
            total += match adaptive_simpson(&g, p + eps, q - eps, tol) {
                Ok(v) => v,
                Err(_) => composite_gl(g, p, q, 4096),
            };
        }
    }
    Ok(total)
}

fn composite_gl(g: &dyn Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let w = (b - a) / pieces as f64;
    (0..pieces).map(|i| gl20().integrate(g, a + w * i as f64, a + w * (i + 1) as f64)).sum()
}

/// Dyadic mesh shrinking towards the singular end.
fn graded(g: &dyn Fn(f64) -> f64, a: f64, b: f64, singular_left: bool) -> f64 {
    let len = b - a;
    let mut s = 0.0;
    for k in 0..80 {
        let outer = len * 0.5f64.powi(k);
        let inner = 0.5 * outer;
        s += if singular_left {
            gl20().integrate(g, a + inner, a + outer)
        } else {
            gl20().integrate(g, b - outer, b - inner)
        };
    }
    s
}

/// L(n, B) = ∫_B |h^-1 P[x - h/2, x + h/2] - f(x)| dx.
pub fn l1_smoothing_error_on(f: &Density, h: f64, set: &IntervalSet) -> Result<f64> {
    let g = |x: f64| (f.prob(x - 0.5 * h, x + 0.5 * h) / h - f.pdf(x)).abs();
    let mut br: Vec<f64> = Vec::new();
    for b in f.breaks() {
        br.extend([b - 0.5 * h, b, b + 0.5 * h]);
    }
    let mut total = 0.0;
    for &(a, b) in set.intervals() {
        total += integrate_1d(f, &g, a, b, &br, h)?;
    }
    Ok(total)
}

/// L(n, R).
pub fn l1_smoothing_error(f: &Density, h: f64) -> Result<f64> {
    let (a, b) = f.hull();
    l1_smoothing_error_on(f, h, &IntervalSet::interval(a - 0.5 * h, b + 0.5 * h))
}

/// ∫_E f^(3/2).
pub fn three_halves_mass(f: &Density, set: &IntervalSet, h: f64) -> Result<f64> {
    let g = |x: f64| f.pdf(x).powf(1.5);
    let br = f.breaks();
    let mut total = 0.0;
    for &(a, b) in set.intervals() {
        total += integrate_1d(f, &g, a, b, &br, h)?;
    }
    Ok(total)
}

/// Pointwise profile r(x) = ∫_{-1}^{1} |g_n - g| dt on a grid over E,
/// integrated over subsets through its piecewise-linear interpolant so
/// that the result is additive in the subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RnProfile {
    pub grids: Vec<(Vec<f64>, Vec<f64>)>,
}

impl RnProfile {
    pub fn total(&self) -> f64 {
        self.grids.iter().map(|(xs, rs)| pl_integral(xs, rs, xs[0], xs[xs.len() - 1])).sum()
    }

    /// R_n(B, E) for B inside E.
    pub fn over(&self, b: &IntervalSet) -> f64 {
        let mut s = 0.0;
        for (xs, rs) in &self.grids {
            let cell = IntervalSet::interval(xs[0], xs[xs.len() - 1]);
            for &(lo, hi) in cell.intersect(b).intervals() {
                s += pl_integral(xs, rs, lo, hi);
            }
        }
        s
    }
}

fn pl_integral(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    if b <= a || xs.len() < 2 {
        return 0.0;
    }
    let interp = |i: usize, x: f64| {
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        ys[i] + t * (ys[i + 1] - ys[i])
    };
    let mut s = 0.0;
    let start = xs.partition_point(|&x| x <= a).saturating_sub(1).min(xs.len() - 2);
    for i in start..xs.len() - 1 {
        let lo = a.max(xs[i]);
        let hi = b.min(xs[i + 1]);
        if hi > lo {
            s += 0.5 * (interp(i, lo) + interp(i, hi)) * (hi - lo);
        }
        if xs[i + 1] >= b {
            break;
        }
    }
    s
}

/// Results of the shared double loop over (x, t) in E x [-1, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoubleIntegrals {
    pub r_profile: RnProfile,
    /// ∫∫ 1{|x - y| <= h} sqrt(f(x) f(y)) K_n(x, y).
    pub ll: f64,
    /// ∫∫ 1{|x - y| <= h} f(x)^(1/2) f(y)^(-1/2).
    pub mm: f64,
}

/// Outer trapezoid in x with step h/5, inner Gauss-Legendre in t with
/// 32 nodes on each side of zero, split where x + t h leaves E.
pub fn double_integrals(f: &Density, k: &Kernel, set: &IntervalSet, n: usize, h: f64) -> Result<DoubleIntegrals> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let norms = k.norms();
    let rule = GaussLegendre::new(32);
    let k2 = k.shape(Shape::KSquared);
    let mut std_nodes: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            std_nodes.push((lo + 0.5 * (hi - lo) * (x + 1.0), 0.5 * (hi - lo) * w));
        }
    }
    let std_lag: Vec<PiecewisePoly> = std_nodes.iter().map(|&(t, _)| k.lag_product(t)).collect();
    let std_rho: Vec<f64> = std_nodes.iter().map(|&(t, _)| k.autocorrelation(t)).collect();
    let nh = n as f64 * h;
    let kn_const = norms.l3 / norms.l2.powf(1.5);

    let mut grids = Vec::new();
    let mut ll = 0.0;
    let mut mm = 0.0;
    for &(a, b) in set.intervals() {
        let steps = ((b - a) / (OUTER_STEP * h)).ceil().max(1.0) as usize;
        let dx = (b - a) / steps as f64;
        let mut xs = Vec::with_capacity(steps + 1);
        let mut rs = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let x = a + dx * i as f64;
            let fx = f.pdf(x);
            let sx = f.smooth(x, h, k2);
            // t-range where y = x + t h stays in E
            let inside_all = set.contains(x - h) && set.contains(x + h) && set.clip(x - h, x + h).intervals().len() == 1;
            let mut r = 0.0;
            let mut lsum = 0.0;
            let mut msum = 0.0;
            let mut visit = |t: f64, w: f64, lag: Option<&PiecewisePoly>, rho_t: f64| -> Result<()> {
                let y = x + t * h;
                let g = nabeya_cov(rho_t)? * fx;
                if !set.contains(y) {
                    r += w * g.abs();
                    return Ok(());
                }
                let fy = f.pdf(y);
                let sy = f.smooth(y, h, k2);
                if !(sx > 0.0 && sy > 0.0) {
                    return Err(Error::DegenerateDenominator("E K^2 vanishes inside E"));
                }
                let num = match lag {
                    Some(p) => f.smooth(x, h, p),
                    None => f.smooth(x, h, &k.lag_product(t)),
                };
                let rho = (num / (sx * sy).sqrt()).clamp(-1.0, 1.0);
                let gn = nabeya_cov(rho)? * (fx * fy).sqrt();
                r += w * (gn - g).abs();
                let one_m = (1.0 - rho * rho).max(0.0);
                let alt = if one_m > 0.0 { kn_const / (one_m.powf(1.5) * (nh * fx).sqrt()) } else { f64::INFINITY };
                lsum += w * (fx * fy).sqrt() * one_m.min(alt);
                msum += w * (fx / fy).sqrt();
                Ok(())
            };
            if inside_all {
                for (j, &(t, w)) in std_nodes.iter().enumerate() {
                    visit(t, w, Some(&std_lag[j]), std_rho[j])?;
                }
            } else {
                let mut cuts = vec![0.0];
                for &(p, q) in set.intervals() {
                    cuts.push((p - x) / h);
                    cuts.push((q - x) / h);
                }
                let pts = split_points(-1.0, 1.0, &cuts);
                for w2 in pts.windows(2) {
                    for (u, wt) in rule.nodes.iter().zip(&rule.weights) {
                        let t = w2[0] + 0.5 * (w2[1] - w2[0]) * (u + 1.0);
                        let w = 0.5 * (w2[1] - w2[0]) * wt;
                        visit(t, w, None, k.autocorrelation(t))?;
                    }
                }
            }
            let tw = if i == 0 || i == steps { 0.5 * dx } else { dx };
            ll += tw * h * lsum;
            mm += tw * h * msum;
            xs.push(x);
            rs.push(r);
        }
        grids.push((xs, rs));
    }
    Ok(DoubleIntegrals { r_profile: RnProfile { grids }, ll, mm })
}

/// psi_n = c kappa^2 sigma^-2 min(P_n, D_n h).
pub fn psi_n(psi_scale: f64, kappa: f64, sigma2: f64, p_n: f64, d_n: f64, h: f64) -> f64 {
    psi_scale * kappa * kappa / sigma2 * p_n.min(d_n * h)
}

/// Psi_n = ||K^2|| D_n beta_n^-1 kappa^2 sigma^-4.
pub fn big_psi(l2: f64, d_n: f64, beta_n: f64, kappa: f64, sigma2: f64) -> f64 {
    l2 * d_n / beta_n * kappa * kappa / (sigma2 * sigma2)
}

/// tau*_n = A Psi_n^(3/2) (P_n + psi_n)^(1/2).
pub fn tau_star(a: f64, big_psi: f64, p_n: f64, psi: f64) -> f64 {
    a * big_psi.powf(1.5) * (p_n + psi).sqrt()
}

/// alpha_n = (1296/5) tau*^2 log(1/tau*), the logarithm replaced by 1
/// once tau* >= 1/e.
pub fn alpha_n(tau: f64) -> f64 {
    let lg = if tau < (-1.0f64).exp() { (1.0 / tau).ln() } else { 1.0 };
    1296.0 / 5.0 * tau * tau * lg
}

/// tau*_n from its closed-form ingredients only; cheap enough for very
/// small bandwidths.
pub fn tau_star_at(f: &Density, k: &Kernel, h: f64, set: &IntervalSet, c: RateConstants) -> Result<f64> {
    let norms = k.norms();
    let sigma2 = k.asymptotic_variance()?;
    let (beta, d) = density_bounds(f, set, h)?;
    let p = small_interval_mass(f, h);
    let psi = psi_n(c.psi_scale, norms.kappa, sigma2, p, d, h);
    Ok(tau_star(c.a, big_psi(norms.l2, d, beta, norms.kappa, sigma2), p, psi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLedger {
    pub n: usize,
    pub h: f64,
    pub a: f64,
    pub sigma2: f64,
    pub lambda_e: f64,
    pub phi_n: f64,
    pub beta_n: f64,
    pub d_n: f64,
    pub eps_n: f64,
    pub n32_n: f64,
    pub p_n: f64,
    pub l_n: f64,
    pub r_n: f64,
    pub ll_n: f64,
    pub mm_n: f64,
    pub psi_n: f64,
    pub big_psi_n: f64,
    pub tau_star: f64,
    pub alpha_n: f64,
    pub omega_n: f64,
    pub y_n: f64,
    pub dd_n: f64,
    /// tau* >= 1 or psi_n >= 1: the bounds are vacuous at this n.
    pub not_yet_asymptotic: bool,
}

/// All rate quantities, evaluated in dependency order
/// (tau* before alpha_n before Omega_n).
pub fn rate_ledger(f: &Density, k: &Kernel, n: usize, h: f64, set: &IntervalSet, c: RateConstants) -> Result<RateLedger> {
    if n == 0 {
        return Err(Error::NonPositiveValue { what: "sample size", value: 0.0 });
    }
    if !(h > 0.0) {
        return Err(Error::NonPositiveValue { what: "bandwidth", value: h });
    }
    let di = double_integrals(f, k, set, n, h)?;
    rate_ledger_with(f, k, n, h, set, c, &di)
}

/// `rate_ledger` with precomputed double integrals over `set`.
pub fn rate_ledger_with(f: &Density, k: &Kernel, n: usize, h: f64, set: &IntervalSet, c: RateConstants, di: &DoubleIntegrals) -> Result<RateLedger> {
    let norms = k.norms();
    let sigma2 = k.asymptotic_variance()?;
    let sigma = sigma2.sqrt();
    let lambda_e = set.measure();
    let phi = excluded_mass(f, set);
    let (beta, d) = density_bounds(f, set, h)?;
    let eps = smoothing_error(f, k, set, h)?;
    let n32 = three_halves_mass(f, set, h)?;
    let p = small_interval_mass(f, h);
    let l = l1_smoothing_error(f, h)?;
    let r = di.r_profile.total();
    let psi = psi_n(c.psi_scale, norms.kappa, sigma2, p, d, h);
    let bpsi = big_psi(norms.l2, d, beta, norms.kappa, sigma2);
    let tau = tau_star(c.a, bpsi, p, psi);
    let alpha = alpha_n(tau);
    let omega = alpha + 2.0 * p + 2.0 * phi + 4.0 * norms.l2 * r / sigma2 + l;
    let root_nh2 = (n as f64 * h * h).sqrt();
    let y = c.a * lambda_e * norms.l3 / (norms.l2 * root_nh2) + c.a * n32 * h.sqrt() / norms.l2.sqrt();
    let dd = c.a * norms.l2 / (sigma * h) * (di.ll + eps * di.mm / norms.l2)
        + c.a * norms.kappa * omega.sqrt()
        + c.a / sigma * (norms.l3 * lambda_e / (norms.l2 * root_nh2)).powi(2);
    Ok(RateLedger {
        n,
        h,
        a: c.a,
        sigma2,
        lambda_e,
        phi_n: phi,
        beta_n: beta,
        d_n: d,
        eps_n: eps,
        n32_n: n32,
        p_n: p,
        l_n: l,
        r_n: r,
        ll_n: di.ll,
        mm_n: di.mm,
        psi_n: psi,
        big_psi_n: bpsi,
        tau_star: tau,
        alpha_n: alpha,
        omega_n: omega,
        y_n: y,
        dd_n: dd,
        not_yet_asymptotic: tau >= 1.0 || psi >= 1.0,
    })
}

/// Least-squares slope of log(value) against log(h).
pub fn rate_slope(hs: &[f64], values: &[f64]) -> Result<f64> {
    if hs.len() != values.len() || hs.len() < 2 {
        return Err(Error::InvalidConfig("slope fit needs at least two matching points".into()));
    }
    for (&h, &v) in hs.iter().zip(values) {
        if !(h > 0.0) {
            return Err(Error::NonPositiveValue { what: "bandwidth", value: h });
        }
        if !(v > 0.0) {
            return Err(Error::NonPositiveValue { what: "rate value", value: v });
        }
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateDenominator("all bandwidths equal"));
    }
    Ok(sxy / sxx)
}

/// Slope of a log-log fit with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub r_squared: f64,
}

pub fn rate_fit(hs: &[f64], values: &[f64]) -> Result<RateFit> {
    let slope = rate_slope(hs, values)?;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { slope, r_squared })
}

/// (d(n, B), 4 kappa^2 Omega(n, B)) with d(n, B) = 4 kappa ∫_B h^-1 E|K((x - X)/h)| dx
/// and Omega(n, B) = P(B) + L(n, B).
pub fn window_bound(f: &Density, k: &Kernel, h: f64, set: &IntervalSet) -> Result<(f64, f64)> {
    let kappa = k.norms().kappa;
    let abs_k = k.pieces().abs_pow(1);
    let g = |x: f64| f.smooth(x, h, &abs_k);
    let mut br: Vec<f64> = Vec::new();
    for b in f.breaks() {
        br.extend([b - 0.5 * h, b, b + 0.5 * h]);
    }
    let mut d = 0.0;
    for &(a, b) in set.intervals() {
        d += integrate_1d(f, &g, a, b, &br, h)?;
    }
    let omega = f.mass(set) + l1_smoothing_error_on(f, h, set)?;
    Ok((4.0 * kappa * d, 4.0 * kappa * kappa * omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DBound {
    /// d(n, B) = 4 kappa ∫_B h^-1 E|K((x - X)/h)| dx.
    pub d: f64,
    /// Omega(n, B) = P(B) + L(n, B).
    pub omega: f64,
    /// L(n, B).
    pub l: f64,
}

pub fn d_bound(f: &Density, k: &Kernel, h: f64, set: &IntervalSet) -> Result<DBound> {
    if set.is_empty() {
        return Ok(DBound { d: 0.0, omega: 0.0, l: 0.0 });
    }
    let (d, _) = window_bound(f, k, h, set)?;
    let l = l1_smoothing_error_on(f, h, set)?;
    Ok(DBound { d, omega: f.mass(set) + l, l })
}

/// R_n(B, E): the part of the g_n - g double integral with x in B.
pub fn rn(f: &Density, k: &Kernel, h: f64, b: &IntervalSet, e: &IntervalSet) -> Result<f64> {
    Ok(double_integrals(f, k, e, 1, h)?.r_profile.over(b))
}

/// Pointwise K_n(x, y) = min{1 - rho^2, ||K^3|| / ((1 - rho^2)^(3/2) ||K^2||^(3/2) sqrt(n h f(x)))}.
pub fn kk_n(f: &Density, k: &Kernel, h: f64, n: usize, x: f64, y: f64) -> Result<f64> {
    let norms = k.norms();
    let rho = rho_nxy(f, k, x, y, h)?;
    let one_m = (1.0 - rho * rho).max(0.0);
    if one_m == 0.0 {
        return Ok(0.0);
    }
    let alt = norms.l3 / (one_m.powf(1.5) * norms.l2.powf(1.5) * (n as f64 * h * f.pdf(x)).sqrt());
    Ok(one_m.min(alt))
}

/// Omega(n, B) = P(B) + L(n, B).
pub fn omega_set(f: &Density, h: f64, set: &IntervalSet) -> Result<f64> {
    Ok(f.mass(set) + l1_smoothing_error_on(f, h, set)?)
}

/// Correlation helper re-exported for callers that only need rho_{n,x,y}.
pub fn local_correlation(f: &Density, k: &Kernel, x: f64, y: f64, h: f64) -> Result<f64> {
    rho_nxy(f, k, x, y, h)
}
