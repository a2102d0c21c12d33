//! Compactly supported kernels on [-1/2, 1/2] stored as piecewise
//! polynomials, their norms, the normalised autocorrelation and the
//! asymptotic variance of the L1 error.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{PiecewisePoly, Poly};
use crate::quadrature::simpson_with_breaks;
use crate::rng::rng_from_seed;

const NORM_TOL: f64 = 1e-10;
const SIGMA2_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelNorms {
    /// Integral of K.
    pub integral: f64,
    /// sup |K|.
    pub kappa: f64,
    /// Integral of K^2.
    pub l2: f64,
    /// Integral of |K|^3.
    pub l3: f64,
}

/// The four smoothing shapes whose bias enters the uniform smoothing error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    K,
    KSquared,
    KAbsCubed,
    Indicator,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::K, Shape::KSquared, Shape::KAbsCubed, Shape::Indicator];
}

#[derive(Debug, Clone)]
pub struct Kernel {
    name: String,
    k: PiecewisePoly,
    k2: PiecewisePoly,
    k3: PiecewisePoly,
    indicator: PiecewisePoly,
    norms: KernelNorms,
    sigma2: OnceLock<f64>,
}

/// Serialisable kernel description: a built-in name, or explicit pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaks: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<Vec<f64>>>,
    /// Declared bound on |K|, checked when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { name: "uniform".into(), breaks: None, coeffs: None, kappa: None }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        match (&self.breaks, &self.coeffs) {
            (Some(b), Some(c)) => Kernel::validated(&self.name, b.clone(), c.clone(), self.kappa),
            (None, None) => Kernel::by_name(&self.name),
            _ => Err(Error::InvalidConfig("kernel needs both 'breaks' and 'coeffs' or neither".into())),
        }
    }
}

impl Kernel {
    pub fn uniform() -> Self {
        Self::from_pieces("uniform", vec![-0.5, 0.5], vec![vec![1.0]]).expect("uniform kernel is valid")
    }

    /// Epanechnikov rescaled to [-1/2, 1/2]: 1.5 (1 - 4u^2).
    pub fn epanechnikov() -> Self {
        Self::from_pieces("epanechnikov", vec![-0.5, 0.5], vec![vec![1.5, 0.0, -6.0]])
            .expect("epanechnikov kernel is valid")
    }

    /// Asymmetric K(u) = 1 + u; its first moment does not vanish, so
    /// smoothing errors keep their first-order terms.
    pub fn tilt() -> Self {
        Self::from_pieces("tilt", vec![-0.5, 0.5], vec![vec![1.0, 1.0]]).expect("tilt kernel is valid")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Self::uniform()),
            "epanechnikov" => Ok(Self::epanechnikov()),
            "tilt" => Ok(Self::tilt()),
            other => Err(Error::InvalidConfig(format!("unknown kernel '{other}'"))),
        }
    }

    /// Piecewise polynomial kernel; `breaks` must start at -1/2 and end at
    /// 1/2, `coeffs[i]` are ascending monomial coefficients on piece `i`.
    pub fn from_pieces(name: &str, breaks: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        Self::validated(name, breaks, coeffs, None)
    }

    /// As [`Kernel::from_pieces`], also checking a caller-declared bound on |K|.
    pub fn validated(name: &str, breaks: Vec<f64>, coeffs: Vec<Vec<f64>>, declared_kappa: Option<f64>) -> Result<Self> {
        if breaks.len() != coeffs.len() + 1 || coeffs.is_empty() {
            return Err(Error::InvalidConfig("kernel needs one coefficient list per piece".into()));
        }
        if (breaks[0] + 0.5).abs() > 1e-12 || (breaks[breaks.len() - 1] - 0.5).abs() > 1e-12 {
            return Err(Error::InvalidConfig("kernel support must be [-1/2, 1/2]".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) || coeffs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("kernel breakpoints must increase and coefficients be finite".into()));
        }
        let k = PiecewisePoly::new(breaks, coeffs.into_iter().map(Poly).collect());
        let k2 = k.map_pieces(|p| p.mul(p));
        let k3 = k.abs_pow(3);
        let indicator = PiecewisePoly::new(vec![-0.5, 0.5], vec![Poly::constant(1.0)]);

        let eval = |u: f64| k.eval(u);
        let integral = simpson_with_breaks(&eval, -0.5, 0.5, &k.breaks, NORM_TOL)?;
        if (integral - 1.0).abs() > 1e-8 {
            return Err(Error::NonUnitIntegral { integral });
        }
        let l2 = simpson_with_breaks(&|u: f64| eval(u).powi(2), -0.5, 0.5, &k.breaks, NORM_TOL)?;
        let l3 = simpson_with_breaks(&|u: f64| eval(u).abs().powi(3), -0.5, 0.5, &k3.breaks, NORM_TOL)?;
        let kappa = sup_abs(&k);
        if let Some(d) = declared_kappa {
            if kappa > d + 1e-8 {
                return Err(Error::Unbounded { observed: kappa, declared: d });
            }
        }
        Ok(Self {
            name: name.to_string(),
            k,
            k2,
            k3,
            indicator,
            norms: KernelNorms { integral, kappa, l2, l3 },
            sigma2: OnceLock::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.k.eval(u)
    }

    pub fn norms(&self) -> KernelNorms {
        self.norms
    }

    pub fn pieces(&self) -> &PiecewisePoly {
        &self.k
    }

    /// True when K is constant on its support, which enables the exact
    /// step-function integrators.
    pub fn is_box(&self) -> bool {
        self.k.pieces.iter().all(|p| p.0.iter().skip(1).all(|&c| c == 0.0))
            && self.k.pieces.windows(2).all(|w| w[0].0[0] == w[1].0[0])
    }

    pub fn shape(&self, s: Shape) -> &PiecewisePoly {
        match s {
            Shape::K => &self.k,
            Shape::KSquared => &self.k2,
            Shape::KAbsCubed => &self.k3,
            Shape::Indicator => &self.indicator,
        }
    }

    /// Integral of a smoothing shape, the factor multiplying f in its bias.
    pub fn shape_mass(&self, s: Shape) -> f64 {
        match s {
            Shape::K => 1.0,
            Shape::KSquared => self.norms.l2,
            Shape::KAbsCubed => self.norms.l3,
            Shape::Indicator => 1.0,
        }
    }

    /// `u -> K(u) K(u + t)` as a piecewise polynomial.
    pub fn lag_product(&self, t: f64) -> PiecewisePoly {
        self.k.shifted_product(&self.k, t)
    }

    /// Normalised autocorrelation; vanishes for |t| >= 1.
    pub fn autocorrelation(&self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        self.lag_product(t).integral() / self.norms.l2
    }

    /// sigma^2 = ||K^2|| * integral over [-1, 1] of phi(rho(t)).
    pub fn asymptotic_variance(&self) -> Result<f64> {
        if let Some(v) = self.sigma2.get() {
            return Ok(*v);
        }
        let mut lags: Vec<f64> = Vec::new();
        for a in &self.k.breaks {
            for b in &self.k.breaks {
                let d = (a - b).abs();
                if d > 0.0 && d < 1.0 {
                    lags.push(d);
                }
            }
        }
        let g = |t: f64| nabeya_cov(self.autocorrelation(t).clamp(-1.0, 1.0)).unwrap_or(f64::NAN);
        let half = simpson_with_breaks(&g, 0.0, 1.0, &lags, SIGMA2_TOL)?;
        let v = 2.0 * self.norms.l2 * half;
        Ok(*self.sigma2.get_or_init(|| v))
    }
}

fn sup_abs(k: &PiecewisePoly) -> f64 {
    let mut best = 0.0f64;
    for (p, w) in k.pieces.iter().zip(k.breaks.windows(2)) {
        best = best.max(p.eval(w[0]).abs()).max(p.eval(w[1]).abs());
        let d = p.derivative();
        let n = 2048;
        let step = (w[1] - w[0]) / n as f64;
        let mut prev = d.eval(w[0]);
        for i in 1..=n {
            let x = w[0] + step * i as f64;
            let cur = d.eval(x);
            best = best.max(p.eval(x).abs());
            if prev * cur < 0.0 {
                let (mut lo, mut hi) = (x - step, x);
                for _ in 0..60 {
                    let m = 0.5 * (lo + hi);
                    if d.eval(m) * prev <= 0.0 {
                        hi = m;
                    } else {
                        lo = m;
                    }
                }
                best = best.max(p.eval(0.5 * (lo + hi)).abs());
            }
            prev = cur;
        }
    }
    best
}

/// Covariance of (|Z1|, |Z2|) for standard normals with correlation rho.
pub fn nabeya_cov(rho: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0 + 1e-12) {
        return Err(Error::DomainError { what: "correlation", value: rho });
    }
    let r = rho.clamp(-1.0, 1.0);
    Ok((2.0 / PI) * (r * r.asin() + (1.0 - r * r).max(0.0).sqrt() - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub draws: usize,
}

/// Monte Carlo estimate of `nabeya_cov(rho)` with its standard error.
pub fn nabeya_cov_mc(rho: f64, draws: usize, seed: u64) -> Result<McEstimate> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::DomainError { what: "correlation", value: rho });
    }
    if draws < 2 {
        return Err(Error::InvalidConfig("need at least two draws".into()));
    }
    let mut rng = rng_from_seed(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut a = Vec::with_capacity(draws);
    let mut b = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        a.push(z1.abs());
        b.push((rho * z1 + c * z2).abs());
    }
    let n = draws as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let prods: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let cov = prods.iter().sum::<f64>() / (n - 1.0);
    let var = prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate { mean: cov, se: (var / n).sqrt(), draws })
}
