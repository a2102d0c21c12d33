//! One-dimensional quadrature: adaptive Simpson for tolerance-driven
//! integrals, fixed-order Gauss-Legendre for smooth pieces, and the
//! composite trapezoid rule on uniform grids.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
/// Hard cap on integrand evaluations per call.
const MAX_EVALS: usize = 4_000_000;

/// Adaptive Simpson with Richardson correction. `tol` is absolute.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut budget = Budget { ok: true, evals: 3 };
    let v = simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut budget);
    let ok = budget.ok;
    if ok && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure { a, b, tol })
    }
}

struct Budget {
    ok: bool,
    evals: usize,
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut Budget,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return left + right + delta / 15.0;
    }
    budget.evals += 2;
    if depth == 0 || budget.evals > MAX_EVALS || !delta.is_finite() {
        budget.ok = false;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)
}

/// Adaptive Simpson over `[a, b]` split at every breakpoint strictly inside.
/// The tolerance is shared out in proportion to piece length. Piece ends
/// are nudged inward by a few ulps so that one-sided limits are
/// used at jumps.
pub fn simpson_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    let pts = split_points(a, b, breaks);
    let len = b - a;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let eps = 4.0 * f64::EPSILON * w[0].abs().max(w[1].abs()).max(w[1] - w[0]);
        total += adaptive_simpson(f, w[0] + eps, w[1] - eps, tol * (w[1] - w[0]) / len)?;
    }
    Ok(total)
}

/// `[a, breaks inside (a, b) sorted, b]`.
pub fn split_points(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut pts = Vec::with_capacity(breaks.len() + 2);
    pts.push(a);
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);
    pts
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + r * x);
        }
        s * r
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 20-point rule, exact for polynomials of degree 39.
pub fn gl20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

/// Shared 64-point rule, used where the integrand has an integrable
/// endpoint singularity or is only moderately smooth.
pub fn gl64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Composite trapezoid over samples at uniform spacing `step`.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            step * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// `n + 1` equally spaced points spanning `[a, b]` with step at most `max_step`.
pub fn uniform_grid(a: f64, b: f64, max_step: f64) -> (Vec<f64>, f64) {
    let n = (((b - a) / max_step).ceil() as usize).max(1);
    let step = (b - a) / n as f64;
    ((0..=n).map(|i| a + step * i as f64).collect(), step)
}
