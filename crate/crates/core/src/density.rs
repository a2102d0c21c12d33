//! Density families: exact pdf/cdf/quantile, smoothing against piecewise
//! polynomial shapes, the example admissible sets and i.i.d. sampling.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{PiecewisePoly, Poly};
use crate::quadrature::{gl20, gl64};
use crate::rng::Rng;
use crate::sets::IntervalSet;
use crate::special::{norm_cdf, norm_pdf, norm_quantile, norm_sf};

/// Gaussian integrals are cut at this many standard deviations.
pub const GAUSS_TRUNC: f64 = 12.0;

/// One polynomial piece of a piecewise density, in the local variable `x - lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceSpec {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

/// Hölder-rough perturbation added on every piece: amplitude times
/// sum over k < terms of 2^(-k gamma) cos(2^k pi (x - lo) / (hi - lo)).
/// Each term integrates to zero over its piece, so the mass is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roughness {
    pub gamma: f64,
    pub amplitude: f64,
    #[serde(default = "default_terms")]
    pub terms: usize,
}

fn default_terms() -> usize {
    28
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform { lo: f64, hi: f64 },
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    /// (1 - gamma) x^(-gamma) on (0, 1].
    PowerLaw { gamma: f64 },
    PiecewiseLipschitz {
        pieces: Vec<PieceSpec>,
        #[serde(default)]
        roughness: Option<Roughness>,
    },
    /// Linear interpolation of a table, renormalised to unit mass.
    Custom { xs: Vec<f64>, ys: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

/// Which worked example supplies the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExampleKind {
    /// Support pieces shrunk by h/2 at each end.
    Lipschitz,
    /// [-sqrt(log(1/h)/2), +sqrt(log(1/h)/2)] in standard units.
    Gaussian,
    /// [h^alpha, 1 - h] with alpha = (1 - gamma) / (1 + 2 gamma).
    PowerLaw,
}

#[derive(Debug, Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    poly: Poly,
    mass: f64,
}

#[derive(Debug, Clone)]
enum Repr {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
    PowerLaw { gamma: f64 },
    Pieces { pieces: Vec<Piece>, cum: Vec<f64>, scale: f64, rough: Option<Roughness> },
    Table { xs: Vec<f64>, ys: Vec<f64>, cum: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Density {
    spec: DensitySpec,
    repr: Repr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCutoff {
    pub m: f64,
    /// Set when the cutoff sits at the edge of the (truncated) support.
    pub at_support_radius: bool,
}

impl Density {
    pub fn new(spec: DensitySpec) -> Result<Self> {
        let repr = match &spec {
            DensitySpec::Uniform { lo, hi } => {
                if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidConfig("uniform needs lo < hi".into()));
                }
                Repr::Uniform { lo: *lo, hi: *hi }
            }
            DensitySpec::Gaussian { mean, sd } => {
                if !(*sd > 0.0) || !mean.is_finite() {
                    return Err(Error::InvalidConfig("gaussian needs sd > 0".into()));
                }
                Repr::Gaussian { mean: *mean, sd: *sd }
            }
            DensitySpec::PowerLaw { gamma } => {
                if !(*gamma > 0.0 && *gamma < 1.0) {
                    return Err(Error::InvalidConfig("power law exponent must lie in (0, 1)".into()));
                }
                Repr::PowerLaw { gamma: *gamma }
            }
            DensitySpec::PiecewiseLipschitz { pieces, roughness } => build_pieces(pieces, *roughness)?,
            DensitySpec::Custom { xs, ys } => build_table(xs, ys)?,
        };
        let d = Self { spec, repr };
        d.check_positive()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::new(DensitySpec::Uniform { lo, hi }).expect("valid uniform")
    }

    pub fn standard_gaussian() -> Self {
        Self::new(DensitySpec::Gaussian { mean: 0.0, sd: 1.0 }).expect("valid gaussian")
    }

    pub fn power_law(gamma: f64) -> Result<Self> {
        Self::new(DensitySpec::PowerLaw { gamma })
    }

    /// Worked example densities: 1 is a Hölder-`gamma` density on [0, 1]
    /// (flat plus a Weierstrass term of amplitude 0.3), 2 the standard
    /// normal, 3 the power law (1 - gamma) x^-gamma on (0, 1].
    pub fn example(id: u8, gamma: f64) -> Result<Self> {
        match id {
            1 => Self::new(DensitySpec::PiecewiseLipschitz {
                pieces: vec![PieceSpec { lo: 0.0, hi: 1.0, coeffs: vec![1.0] }],
                roughness: Some(Roughness { gamma, amplitude: 0.3, terms: 28 }),
            }),
            2 => Ok(Self::standard_gaussian()),
            3 => Self::power_law(gamma),
            other => Err(Error::InvalidConfig(format!("no worked example {other}; choose 1, 2 or 3"))),
        }
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn example_kind(&self) -> ExampleKind {
        match self.repr {
            Repr::Gaussian { .. } => ExampleKind::Gaussian,
            Repr::PowerLaw { .. } => ExampleKind::PowerLaw,
            _ => ExampleKind::Lipschitz,
        }
    }

    fn check_positive(&self) -> Result<()> {
        if let Repr::Pieces { pieces, .. } = &self.repr {
            for p in pieces {
                let n = 4000;
                for i in 0..=n {
                    let x = p.lo + (p.hi - p.lo) * i as f64 / n as f64;
                    let x = x.min(p.hi - 1e-12 * (p.hi - p.lo));
                    if !(self.pdf(x) > 0.0) {
                        return Err(Error::InvalidConfig(format!("density not positive at {x}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed hull of the support (Gaussian truncated).
    pub fn hull(&self) -> (f64, f64) {
        match &self.repr {
            Repr::Uniform { lo, hi } => (*lo, *hi),
            Repr::Gaussian { mean, sd } => (mean - GAUSS_TRUNC * sd, mean + GAUSS_TRUNC * sd),
            Repr::PowerLaw { .. } => (0.0, 1.0),
            Repr::Pieces { pieces, .. } => (pieces[0].lo, pieces[pieces.len() - 1].hi),
            Repr::Table { xs, .. } => (xs[0], xs[xs.len() - 1]),
        }
    }

    /// Support as a union of intervals where the density is positive.
    pub fn support(&self) -> IntervalSet {
        match &self.repr {
            Repr::Pieces { pieces, .. } => IntervalSet::new(pieces.iter().map(|p| (p.lo, p.hi)).collect()),
            _ => {
                let (a, b) = self.hull();
                IntervalSet::interval(a, b)
            }
        }
    }

    /// True for densities with a Hölder-rough component, which defeat
    /// adaptive quadrature and are integrated on fine grids instead.
    pub fn is_rough(&self) -> bool {
        matches!(&self.repr, Repr::Pieces { rough: Some(_), .. })
    }

    /// Point where the density is unbounded, if any.
    pub fn singularity(&self) -> Option<f64> {
        match self.repr {
            Repr::PowerLaw { .. } => Some(0.0),
            _ => None,
        }
    }

    /// Points where the density or one of its derivatives jumps.
    pub fn breaks(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Uniform { lo, hi } => vec![*lo, *hi],
            Repr::Gaussian { .. } => vec![],
            Repr::PowerLaw { .. } => vec![0.0, 1.0],
            Repr::Pieces { pieces, .. } => {
                let mut v: Vec<f64> = pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
                v.dedup();
                v
            }
            Repr::Table { xs, .. } => xs.clone(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Repr::Gaussian { mean, sd } => norm_pdf((x - mean) / sd) / sd,
            Repr::PowerLaw { gamma } => {
                if x > 0.0 && x <= 1.0 {
                    (1.0 - gamma) * x.powf(-gamma)
                } else {
                    0.0
                }
            }
            Repr::Pieces { pieces, scale, rough, .. } => match find_piece(pieces, x) {
                Some(p) => (p.poly.eval(x - p.lo) + rough_value(rough, p, x)) * scale,
                None => 0.0,
            },
            Repr::Table { xs, ys, .. } => {
                if x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let i = xs[1..].partition_point(|&b| b < x).min(xs.len() - 2);
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + t * (ys[i + 1] - ys[i])
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Repr::Gaussian { mean, sd } => norm_cdf((x - mean) / sd),
            Repr::PowerLaw { gamma } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    x.powf(1.0 - gamma)
                }
            }
            Repr::Pieces { pieces, cum, scale, rough } => {
                if x <= pieces[0].lo {
                    return 0.0;
                }
                let i = pieces.partition_point(|p| p.hi <= x);
                if i >= pieces.len() {
                    return 1.0;
                }
                let p = &pieces[i];
                if x <= p.lo {
                    return cum[i];
                }
                let s = x - p.lo;
                let local = p.poly.integral(0.0, s) + rough_antideriv(rough, p, x);
                (cum[i] + local * scale).clamp(0.0, 1.0)
            }
            Repr::Table { xs, ys, cum } => {
                if x <= xs[0] {
                    return 0.0;
                }
                if x >= xs[xs.len() - 1] {
                    return 1.0;
                }
                let i = xs[1..].partition_point(|&b| b < x).min(xs.len() - 2);
                let w = x - xs[i];
                let slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
                cum[i] + ys[i] * w + 0.5 * slope * w * w
            }
        }
    }

    /// P(a <= X <= b), computed on the upper tail where that is more accurate.
    pub fn prob(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match &self.repr {
            Repr::Gaussian { mean, sd } if a > *mean => {
                (norm_sf((a - mean) / sd) - norm_sf((b - mean) / sd)).max(0.0)
            }
            _ => (self.cdf(b) - self.cdf(a)).max(0.0),
        }
    }

    /// P(X in set).
    pub fn mass(&self, set: &IntervalSet) -> f64 {
        set.intervals().iter().map(|&(a, b)| self.prob(a, b)).sum()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match &self.repr {
            Repr::Uniform { lo, hi } => lo + p * (hi - lo),
            Repr::Gaussian { mean, sd } => mean + sd * norm_quantile(p),
            Repr::PowerLaw { gamma } => p.powf(1.0 / (1.0 - gamma)),
            Repr::Pieces { pieces, cum, .. } => {
                let i = cum[1..].partition_point(|&c| c < p).min(pieces.len() - 1);
                self.invert_cdf(p, pieces[i].lo, pieces[i].hi)
            }
            Repr::Table { xs, cum, .. } => {
                let i = cum[1..].partition_point(|&c| c < p).min(xs.len() - 2);
                self.invert_cdf(p, xs[i], xs[i + 1])
            }
        }
    }

    /// Safeguarded Newton on the cdf inside a bracket.
    fn invert_cdf(&self, p: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.cdf(x) - p;
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(x);
            let mut nx = if d > 0.0 { x - g / d } else { 0.5 * (lo + hi) };
            if !(nx > lo && nx < hi) {
                nx = 0.5 * (lo + hi);
            }
            if (nx - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
                return nx;
            }
            x = nx;
        }
        x
    }

    /// n independent draws in generation order.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>())).collect()
    }

    /// Order statistics of n independent draws, generated in O(n) from
    /// normalised exponential spacings.
    pub fn sample_sorted(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        let mut acc = 0.0;
        let mut us = Vec::with_capacity(n);
        for _ in 0..n {
            let e: f64 = Exp1.sample(rng);
            acc += e;
            us.push(acc);
        }
        let e: f64 = Exp1.sample(rng);
        let total = acc + e;
        match &self.repr {
            Repr::Uniform { lo, hi } => {
                let w = (hi - lo) / total;
                us.iter_mut().for_each(|u| *u = lo + *u * w);
            }
            _ => us.iter_mut().for_each(|u| *u = self.quantile(*u / total)),
        }
        us
    }

    /// ∫ f(x - h u) g(u) du over the support of g.
    pub fn smooth(&self, x: f64, h: f64, g: &PiecewisePoly) -> f64 {
        let mut total = 0.0;
        for (ua, ub, p) in g.clipped(f64::NEG_INFINITY, f64::INFINITY) {
            total += self.smooth_piece(x, h, ua, ub, p);
        }
        total
    }

    fn smooth_piece(&self, x: f64, h: f64, ua: f64, ub: f64, p: &Poly) -> f64 {
        if p.degree() == 0 || p.0[1..].iter().all(|&c| c == 0.0) {
            return p.0[0] * self.prob(x - h * ub, x - h * ua) / h;
        }
        // integrate over z = x - h u, i.e. u = (x - z) / h, du = dz / h
        let za = x - h * ub;
        let zb = x - h * ua;
        let gz = |z: f64| p.eval((x - z) / h);
        match &self.repr {
            Repr::Uniform { lo, hi } => {
                let a = za.max(*lo);
                let b = zb.min(*hi);
                if b <= a {
                    return 0.0;
                }
                // exact: constant density times the polynomial in u
                let q = p.antiderivative();
                (q.eval((x - a) / h) - q.eval((x - b) / h)) / (hi - lo)
            }
            Repr::Gaussian { mean, sd } => {
                let a = za.max(mean - GAUSS_TRUNC * sd);
                let b = zb.min(mean + GAUSS_TRUNC * sd);
                if b <= a {
                    return 0.0;
                }
                let chunks = ((b - a) / (0.5 * sd)).ceil().max(1.0) as usize;
                let w = (b - a) / chunks as f64;
                (0..chunks)
                    .map(|c| {
                        let lo = a + w * c as f64;
                        gl20().integrate(|z| self.pdf(z) * gz(z), lo, lo + w)
                    })
                    .sum::<f64>()
                    / h
            }
            Repr::PowerLaw { gamma } => {
                let a = za.max(0.0);
                let b = zb.min(1.0);
                if b <= a {
                    return 0.0;
                }
                if a >= b - a {
                    gl20().integrate(|z| self.pdf(z) * gz(z), a, b) / h
                } else {
                    // w = z^(1 - gamma) absorbs the singularity at zero
                    let e = 1.0 / (1.0 - gamma);
                    let wa = a.powf(1.0 - gamma);
                    let wb = b.powf(1.0 - gamma);
                    gl64().integrate(|w| gz(w.powf(e)), wa, wb) / h
                }
            }
            Repr::Pieces { pieces, scale, rough, .. } => {
                let mut s = 0.0;
                for pc in pieces {
                    let a = za.max(pc.lo);
                    let b = zb.min(pc.hi);
                    if b <= a {
                        continue;
                    }
                    s += gl20().integrate(|z| pc.poly.eval(z - pc.lo) * gz(z), a, b) / h;
                    if let Some(r) = rough {
                        s += rough_smooth(r, pc, x, h, (x - b) / h, (x - a) / h, p);
                    }
                }
                s * scale
            }
            Repr::Table { xs, .. } => {
                let mut s = 0.0;
                for w in xs.windows(2) {
                    let a = za.max(w[0]);
                    let b = zb.min(w[1]);
                    if b > a {
                        s += gl20().integrate(|z| self.pdf(z) * gz(z), a, b);
                    }
                }
                s / h
            }
        }
    }

    /// Mean of the kernel estimator: (f * K_h)(x) = ∫ f(x - h u) K(u) du.
    pub fn smoothed(&self, x: f64, h: f64, k: &PiecewisePoly) -> f64 {
        self.smooth(x, h, k)
    }

    /// max over x of P[x, x + width].
    pub fn max_window_mass(&self, width: f64) -> f64 {
        match &self.repr {
            Repr::Uniform { lo, hi } => (width / (hi - lo)).min(1.0),
            Repr::Gaussian { mean, .. } => self.prob(mean - 0.5 * width, mean + 0.5 * width),
            Repr::PowerLaw { .. } => self.prob(0.0, width),
            _ => {
                let (lo, hi) = self.hull();
                let step = (width / 20.0).min((hi - lo) / 2000.0);
                let mut best = (lo - width, 0.0);
                let mut x = lo - width;
                while x <= hi {
                    let m = self.prob(x, x + width);
                    if m > best.1 {
                        best = (x, m);
                    }
                    x += step;
                }
                // golden-section polish around the best grid point
                let (mut a, mut b) = (best.0 - step, best.0 + step);
                let r = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..60 {
                    let c = b - r * (b - a);
                    let d = a + r * (b - a);
                    if self.prob(c, c + width) > self.prob(d, d + width) {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                best.1.max(self.prob(0.5 * (a + b), 0.5 * (a + b) + width))
            }
        }
    }

    /// Admissible set for bandwidth h from the matching worked example.
    pub fn example_set(&self, h: f64) -> Result<IntervalSet> {
        if !(h > 0.0) {
            return Err(Error::NonPositiveValue { what: "bandwidth", value: h });
        }
        match &self.repr {
            Repr::Gaussian { mean, sd } => {
                if h >= 1.0 {
                    return Err(Error::DegenerateSet(format!("h = {h} leaves no Gaussian core")));
                }
                let a = (0.5 * (1.0 / h).ln()).sqrt();
                Ok(IntervalSet::interval(mean - sd * a, mean + sd * a))
            }
            Repr::PowerLaw { gamma } => {
                let alpha = (1.0 - gamma) / (1.0 + 2.0 * gamma);
                let lo = h.powf(alpha);
                let hi = 1.0 - h;
                if lo >= hi {
                    return Err(Error::DegenerateSet(format!("h = {h} too large for [h^alpha, 1 - h]")));
                }
                Ok(IntervalSet::interval(lo, hi))
            }
            _ => {
                let sup = self.support();
                let mut out = Vec::new();
                for &(a, b) in sup.intervals() {
                    if h >= b - a {
                        return Err(Error::DegenerateSet(format!("h = {h} exceeds support piece [{a}, {b}]")));
                    }
                    out.push((a + 0.5 * h, b - 0.5 * h));
                }
                Ok(IntervalSet::new(out))
            }
        }
    }

    /// (inf, sup) of the density over a set, exact for the monotone and
    /// symmetric families and by grid search with step `step` otherwise.
    pub fn extrema_on(&self, set: &IntervalSet, step: f64) -> Result<(f64, f64)> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        let (lo, hi) = set.hull().unwrap();
        match &self.repr {
            Repr::Uniform { .. } => {
                let v = set.intervals().iter().map(|&(a, b)| self.pdf(0.5 * (a + b))).fold(f64::INFINITY, f64::min);
                Ok((v, v))
            }
            Repr::PowerLaw { .. } => Ok((self.pdf(hi), self.pdf(lo))),
            Repr::Gaussian { mean, .. } => {
                let far = if (lo - mean).abs() > (hi - mean).abs() { lo } else { hi };
                let near = if set.contains(*mean) {
                    *mean
                } else {
                    set.intervals().iter().flat_map(|&(a, b)| [a, b]).min_by(|a, b| (a - mean).abs().total_cmp(&(b - mean).abs())).unwrap()
                };
                Ok((self.pdf(far), self.pdf(near)))
            }
            _ => {
                let mut mn = f64::INFINITY;
                let mut mx = 0.0f64;
                for &(a, b) in set.intervals() {
                    let n = ((b - a) / step).ceil().max(1.0) as usize;
                    for i in 0..=n {
                        let x = a + (b - a) * i as f64 / n as f64;
                        let v = self.pdf(x);
                        mn = mn.min(v);
                        mx = mx.max(v);
                    }
                }
                Ok((mn, mx))
            }
        }
    }

    /// Radius M with P(|X| > M) = alpha.
    pub fn tail_cutoff(&self, alpha: f64) -> Result<TailCutoff> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("tail mass {alpha} must lie in (0, 1)")));
        }
        let (lo, hi) = self.hull();
        let radius = lo.abs().max(hi.abs());
        let tail = |m: f64| 1.0 - self.prob(-m, m);
        if tail(radius) >= alpha {
            return Ok(TailCutoff { m: radius, at_support_radius: true });
        }
        let (mut a, mut b) = (0.0, radius);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if tail(m) > alpha {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 * radius {
                break;
            }
        }
        Ok(TailCutoff { m: 0.5 * (a + b), at_support_radius: false })
    }
}

fn find_piece(pieces: &[Piece], x: f64) -> Option<&Piece> {
    let i = pieces.partition_point(|p| p.hi < x);
    let p = pieces.get(i)?;
    (x >= p.lo && x <= p.hi).then_some(p)
}

fn build_pieces(specs: &[PieceSpec], rough: Option<Roughness>) -> Result<Repr> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("piecewise density needs at least one piece".into()));
    }
    let mut pieces: Vec<Piece> = specs
        .iter()
        .map(|s| {
            let poly = Poly(s.coeffs.clone());
            let mass = poly.integral(0.0, s.hi - s.lo);
            Piece { lo: s.lo, hi: s.hi, poly, mass }
        })
        .collect();
    pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    if pieces.iter().any(|p| !(p.hi > p.lo)) || pieces.windows(2).any(|w| w[1].lo < w[0].hi) {
        return Err(Error::InvalidConfig("pieces must be non-empty and non-overlapping".into()));
    }
    if let Some(r) = rough {
        if !(r.gamma > 0.0 && r.gamma <= 1.0) || r.terms == 0 || !r.amplitude.is_finite() {
            return Err(Error::InvalidConfig("roughness needs gamma in (0, 1] and terms >= 1".into()));
        }
    }
    let total: f64 = pieces.iter().map(|p| p.mass).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("piecewise density has no mass".into()));
    }
    let scale = 1.0 / total;
    let mut cum = vec![0.0];
    for p in &pieces {
        cum.push(cum.last().unwrap() + p.mass * scale);
    }
    Ok(Repr::Pieces { pieces, cum, scale, rough })
}

fn build_table(xs: &[f64], ys: &[f64]) -> Result<Repr> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::InvalidConfig("table needs matching xs/ys of length >= 2".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) || ys.iter().any(|&y| !(y >= 0.0)) {
        return Err(Error::InvalidConfig("table xs must increase and ys be non-negative".into()));
    }
    let mass: f64 = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidConfig("table has no mass".into()));
    }
    let ys: Vec<f64> = ys.iter().map(|y| y / mass).collect();
    let mut cum = vec![0.0];
    for (x, y) in xs.windows(2).zip(ys.windows(2)) {
        cum.push(cum.last().unwrap() + 0.5 * (x[1] - x[0]) * (y[0] + y[1]));
    }
    Ok(Repr::Table { xs: xs.to_vec(), ys, cum })
}

fn rough_value(rough: &Option<Roughness>, p: &Piece, x: f64) -> f64 {
    let Some(r) = rough else { return 0.0 };
    let base = std::f64::consts::PI * (x - p.lo) / (p.hi - p.lo);
    let mut s = 0.0;
    let mut freq = 1.0;
    for k in 0..r.terms {
        s += (-(k as f64) * r.gamma).exp2() * (freq * base).cos();
        freq *= 2.0;
    }
    r.amplitude * s
}

fn rough_antideriv(rough: &Option<Roughness>, p: &Piece, x: f64) -> f64 {
    let Some(r) = rough else { return 0.0 };
    let w0 = std::f64::consts::PI / (p.hi - p.lo);
    let mut s = 0.0;
    let mut freq = 1.0;
    for k in 0..r.terms {
        let w = freq * w0;
        s += (-(k as f64) * r.gamma).exp2() * (w * (x - p.lo)).sin() / w;
        freq *= 2.0;
    }
    r.amplitude * s
}

/// Roughness part of ∫_{ua}^{ub} f(x - h u) P(u) du on one piece.
fn rough_smooth(r: &Roughness, pc: &Piece, x: f64, h: f64, ua: f64, ub: f64, p: &Poly) -> f64 {
    let w0 = std::f64::consts::PI / (pc.hi - pc.lo);
    let derivs: Vec<Poly> = std::iter::successors(Some(p.clone()), |q| (q.degree() > 0).then(|| q.derivative())).collect();
    let mut s = 0.0;
    let mut freq = 1.0;
    for k in 0..r.terms {
        let w = freq * w0;
        freq *= 2.0;
        let amp = (-(k as f64) * r.gamma).exp2();
        let theta = w * (x - pc.lo);
        let beta = w * h;
        // ∫ cos(theta - beta u) P(u) du
        let v = if beta * (ub - ua) <= 3.0 {
            gl20().integrate(|u| (theta - beta * u).cos() * p.eval(u), ua, ub)
        } else {
            // e^{i(theta - beta u)} antiderivative: e^{i(theta - beta u)} * sum_j P^(j)(u) (i/beta)^(j+1) * (-1)^j ... take real part
            let at = |u: f64| {
                let (sn, cs) = (theta - beta * u).sin_cos();
                let mut re = 0.0;
                // (i / beta)^(j+1): cycle i, -1, -i, 1
                let mut pw = 1.0 / beta;
                for (j, d) in derivs.iter().enumerate() {
                    let dv = d.eval(u) * pw;
                    // coefficient c_j = i^(j+1) * (-1)^j
                    let (cr, ci) = match (j + 1) % 4 {
                        1 => (0.0, 1.0),
                        2 => (-1.0, 0.0),
                        3 => (0.0, -1.0),
                        _ => (1.0, 0.0),
                    };
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    // Re[(cs + i sn) * (cr + i ci)] * dv * sign
                    re += sign * dv * (cs * cr - sn * ci);
                    pw /= beta;
                }
                re
            };
            at(ub) - at(ua)
        };
        s += amp * v;
    }
    r.amplitude * s
}
