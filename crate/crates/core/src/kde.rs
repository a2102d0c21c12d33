//! Kernel estimator evaluation, its exact moments, local correlations and
//! the L1 distance between the estimator and its mean.
//!
//! Samples are passed sorted; the divisor is always the nominal sample
//! size `n`, which makes the same code serve Poissonised samples.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quadrature::uniform_grid;
use crate::rng::Rng;
use crate::sets::IntervalSet;

/// Default grid step for the trapezoid integrator, as a fraction of h.
/// Spacing of the mean table used by the exact box integrator, in units of h.
const EXACT_TABLE_FRACTION: f64 = 1.0 / 16.0;

pub const GRID_STEP_FRACTION: f64 = 0.1;

fn window_range(sorted: &[f64], x: f64, h: f64) -> (usize, usize) {
    let lo = sorted.partition_point(|&v| v < x - 0.5 * h);
    let hi = sorted.partition_point(|&v| v <= x + 0.5 * h);
    (lo, hi)
}

/// f_n(x) = (n h)^-1 sum K((x - X_i) / h).
pub fn kde_eval(sorted: &[f64], n: usize, x: f64, h: f64, kernel: &Kernel) -> f64 {
    let (lo, hi) = window_range(sorted, x, h);
    let s: f64 = sorted[lo..hi].iter().map(|&xi| kernel.eval((x - xi) / h)).sum();
    s / (n as f64 * h)
}

/// A fixed-size or Poissonised sample, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub points: Vec<f64>,
    pub nominal_n: usize,
    /// n for a fixed sample, eta for a Poissonised one.
    pub actual_count: usize,
    pub poissonized: bool,
}

impl Sample {
    pub fn fixed(f: &Density, n: usize, rng: &mut Rng) -> Self {
        Self { points: f.sample_sorted(n, rng), nominal_n: n, actual_count: n, poissonized: false }
    }

    /// eta ~ Poisson(n) points; eta = 0 gives an empty sample.
    pub fn poissonized(f: &Density, n: usize, rng: &mut Rng) -> Self {
        let eta = if n == 0 { 0 } else { Poisson::new(n as f64).expect("positive mean").sample(rng) as usize };
        Self { points: f.sample_sorted(eta, rng), nominal_n: n, actual_count: eta, poissonized: true }
    }

    /// f_n at each x, always divided by the nominal n.
    pub fn evaluate(&self, kernel: &Kernel, h: f64, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| kde_eval(&self.points, self.nominal_n, x, h, kernel)).collect()
    }
}

/// E f_n(x) = (f * K_h)(x).
pub fn mean_estimator(f: &Density, kernel: &Kernel, x: f64, h: f64) -> f64 {
    f.smooth(x, h, kernel.pieces())
}

/// k_n(x) = h^-2 E K^2((x - X) / h).
pub fn kn(f: &Density, kernel: &Kernel, x: f64, h: f64) -> f64 {
    f.smooth(x, h, kernel.shape(crate::kernel::Shape::KSquared)) / h
}

/// Var f_n(x) = (k_n(x) - (E f_n(x))^2) / n.
pub fn var_estimator(f: &Density, kernel: &Kernel, x: f64, h: f64, n: usize) -> f64 {
    let m = mean_estimator(f, kernel, x, h);
    (kn(f, kernel, x, h) - m * m) / n as f64
}

/// n^-1/2 E|Z| ∫_E sqrt(k_n): the normal proxy for E||f_n - E f_n|| on E.
pub fn gaussian_mean_approx(f: &Density, kernel: &Kernel, h: f64, set: &IntervalSet, n: usize) -> f64 {
    crate::blocks::centering_proxy(f, kernel, h, set) / (n as f64).sqrt()
}

/// Correlation of K((x - X)/h) and K((y - X)/h) in the Poissonised model.
pub fn rho_nxy(f: &Density, kernel: &Kernel, x: f64, y: f64, h: f64) -> Result<f64> {
    let t = (y - x) / h;
    if t.abs() >= 1.0 {
        return Ok(0.0);
    }
    let k2 = kernel.shape(crate::kernel::Shape::KSquared);
    let dx = f.smooth(x, h, k2);
    let dy = f.smooth(y, h, k2);
    if !(dx > 0.0 && dy > 0.0) {
        return Err(Error::DegenerateDenominator("E K^2 vanishes at x or y"));
    }
    let num = f.smooth(x, h, &kernel.lag_product(t));
    Ok((num / (dx * dy).sqrt()).clamp(-1.0, 1.0))
}

/// T(x) = sqrt(n) (f_eta(x) - E f_n(x)) / sqrt(k_n(x)).
pub fn normalized_field(sorted: &[f64], n: usize, f: &Density, kernel: &Kernel, x: f64, h: f64) -> Result<f64> {
    let k = kn(f, kernel, x, h);
    if !(k > 0.0) {
        return Err(Error::DegenerateDenominator("k_n vanishes"));
    }
    let v = kde_eval(sorted, n, x, h, kernel) - mean_estimator(f, kernel, x, h);
    Ok((n as f64).sqrt() * v / k.sqrt())
}

/// How the L1 distance is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Method {
    /// Exact step-function integration, available for box kernels.
    Exact,
    /// Trapezoid rule with the given step as a fraction of h.
    Grid { step_fraction: f64 },
}

/// Prepared integrator for ∫_B |f_n - E f_n| over a fixed list of bins.
/// Everything that does not depend on the sample is computed once.
#[derive(Debug, Clone)]
pub struct L1Integrator {
    bins: Vec<(f64, f64)>,
    h: f64,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Exact { height: f64, tables: Vec<(Vec<f64>, Vec<f64>)> },
    Grid { kernel: Box<Kernel>, step: f64, grids: Vec<(Vec<f64>, Vec<f64>)> },
}

impl L1Integrator {
    /// `bins` must be sorted and pairwise disjoint.
    pub fn new(f: &Density, kernel: &Kernel, h: f64, bins: Vec<(f64, f64)>, method: L1Method) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::NonPositiveValue { what: "bandwidth", value: h });
        }
        if bins.windows(2).any(|w| w[1].0 < w[0].1) || bins.iter().any(|b| !(b.1 >= b.0)) {
            return Err(Error::InvalidConfig("L1 bins must be sorted and disjoint".into()));
        }
        let inner = match method {
            L1Method::Exact => {
                if !kernel.is_box() {
                    return Err(Error::InvalidConfig(format!("exact L1 integration needs a box kernel, got '{}'", kernel.name())));
                }
                let mut kinks: Vec<f64> = f.breaks().iter().flat_map(|b| [b - 0.5 * h, b + 0.5 * h]).collect();
                kinks.sort_by(f64::total_cmp);
                let height = kernel.eval(0.0);
                let tables = bins
                    .iter()
                    .map(|&(a, b)| {
                        let (mut xs, _) = uniform_grid(a, b, h * EXACT_TABLE_FRACTION);
                        xs.extend(kinks.iter().filter(|&&k| k > a && k < b));
                        xs.sort_by(f64::total_cmp);
                        xs.dedup();
                        let ms = xs.iter().map(|&x| height * f.prob(x - 0.5 * h, x + 0.5 * h) / h).collect();
                        (xs, ms)
                    })
                    .collect();
                Inner::Exact { height, tables }
            }
            L1Method::Grid { step_fraction } => {
                if !(step_fraction > 0.0) {
                    return Err(Error::NonPositiveValue { what: "grid step", value: step_fraction });
                }
                let step = step_fraction * h;
                let grids = bins
                    .iter()
                    .map(|&(a, b)| {
                        let (xs, _) = uniform_grid(a, b, step);
                        let ms = xs.iter().map(|&x| mean_estimator(f, kernel, x, h)).collect();
                        (xs, ms)
                    })
                    .collect();
                Inner::Grid { kernel: Box::new(kernel.clone()), step, grids }
            }
        };
        Ok(Self { bins, h, inner })
    }

    /// Picks the exact integrator for box kernels, the grid otherwise.
    pub fn auto(f: &Density, kernel: &Kernel, h: f64, bins: Vec<(f64, f64)>) -> Result<Self> {
        let m = if kernel.is_box() { L1Method::Exact } else { L1Method::Grid { step_fraction: GRID_STEP_FRACTION } };
        Self::new(f, kernel, h, bins, m)
    }

    pub fn bins(&self) -> &[(f64, f64)] {
        &self.bins
    }

    /// Grid step actually used, 0 for the exact integrator.
    pub fn grid_step(&self) -> f64 {
        match &self.inner {
            Inner::Exact { .. } => 0.0,
            Inner::Grid { step, .. } => *step,
        }
    }

    /// ∫ over each bin of |f_n - E f_n| for a sorted sample with divisor n.
    pub fn integrate(&self, sorted: &[f64], n: usize) -> Vec<f64> {
        match &self.inner {
            Inner::Exact { height, tables } => exact_box(sorted, n, self.h, *height, tables, &self.bins),
            Inner::Grid { kernel, step, grids } => grids
                .iter()
                .map(|(xs, ms)| {
                    let vals: Vec<f64> = xs.iter().zip(ms).map(|(&x, &m)| (kde_eval(sorted, n, x, self.h, kernel) - m).abs()).collect();
                    let st = if xs.len() > 1 { xs[1] - xs[0] } else { *step };
                    crate::quadrature::trapezoid(&vals, st)
                })
                .collect(),
        }
    }
}

/// ∫ |c - (m0 + (m1 - m0) s)| ds over s in [0, 1], times `len`.
fn abs_linear(c: f64, m0: f64, m1: f64, len: f64) -> f64 {
    let a = c - m0;
    let b = c - m1;
    if a * b >= 0.0 {
        0.5 * (a.abs() + b.abs()) * len
    } else {
        // crosses zero at s* = a / (a - b)
        0.5 * (a * a + b * b) / (a - b).abs() * len
    }
}

/// Walks the merged stream of window starts X_i - h/2, window ends X_i + h/2
/// and mean-table nodes inside each bin. Between consecutive stops the
/// estimator is constant and the mean is linear in the table, which is exact
/// when the density is piecewise constant.
fn exact_box(sorted: &[f64], n: usize, h: f64, height: f64, tables: &[(Vec<f64>, Vec<f64>)], bins: &[(f64, f64)]) -> Vec<f64> {
    let scale = height / (n as f64 * h);
    let half = 0.5 * h;
    let (mut si, mut ei) = (0usize, 0usize);
    let mut out = Vec::with_capacity(bins.len());
    for (&(a, _), (xs, ms)) in bins.iter().zip(tables) {
        // count on the open interval just right of a
        while si < sorted.len() && sorted[si] - half <= a {
            si += 1;
        }
        while ei < sorted.len() && sorted[ei] + half <= a {
            ei += 1;
        }
        let mut count = (si - ei) as f64;
        let mut total = 0.0;
        let (mut x, mut mx) = (a, ms[0]);
        for j in 1..xs.len() {
            let (x1, m1) = (xs[j], ms[j]);
            let slope = (m1 - ms[j - 1]) / (x1 - xs[j - 1]);
            loop {
                let ns = sorted.get(si).map_or(f64::INFINITY, |&v| v - half);
                let ne = sorted.get(ei).map_or(f64::INFINITY, |&v| v + half);
                let nx = ns.min(ne);
                if nx >= x1 {
                    break;
                }
                let mn = ms[j - 1] + slope * (nx - xs[j - 1]);
                total += abs_linear(count * scale, mx, mn, nx - x);
                x = nx;
                mx = mn;
                while si < sorted.len() && sorted[si] - half <= x {
                    count += 1.0;
                    si += 1;
                }
                while ei < sorted.len() && sorted[ei] + half <= x {
                    count -= 1.0;
                    ei += 1;
                }
            }
            total += abs_linear(count * scale, mx, m1, x1 - x);
            x = x1;
            mx = m1;
            while si < sorted.len() && sorted[si] - half <= x {
                count += 1.0;
                si += 1;
            }
            while ei < sorted.len() && sorted[ei] + half <= x {
                count -= 1.0;
                ei += 1;
            }
        }
        out.push(total);
    }
    out
}

/// Result of one L1 evaluation over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Deviation {
    pub value: f64,
    pub window_lo: f64,
    pub window_hi: f64,
    pub grid_step: f64,
}

/// Window outside which both f_n and E f_n vanish.
pub fn natural_window(f: &Density, h: f64) -> (f64, f64) {
    let (a, b) = f.hull();
    (a - 0.5 * h, b + 0.5 * h)
}

/// ∫ |f_n - E f_n| over `window`, failing if the window cuts off mass of
/// either the estimator or its mean.
pub fn l1_deviation(
    sorted: &[f64],
    n: usize,
    f: &Density,
    kernel: &Kernel,
    h: f64,
    window: Option<(f64, f64)>,
    method: Option<L1Method>,
) -> Result<L1Deviation> {
    let (nlo, nhi) = natural_window(f, h);
    let need_lo = sorted.first().map_or(nlo, |&v| (v - 0.5 * h).min(nlo));
    let need_hi = sorted.last().map_or(nhi, |&v| (v + 0.5 * h).max(nhi));
    let (lo, hi) = window.unwrap_or((need_lo, need_hi));
    if lo > need_lo || hi < need_hi {
        return Err(Error::WindowTooSmall { lo, hi, need_lo, need_hi });
    }
    let integ = match method {
        Some(m) => L1Integrator::new(f, kernel, h, vec![(lo, hi)], m)?,
        None => L1Integrator::auto(f, kernel, h, vec![(lo, hi)])?,
    };
    let value = integ.integrate(sorted, n)[0];
    Ok(L1Deviation { value, window_lo: lo, window_hi: hi, grid_step: integ.grid_step() })
}
