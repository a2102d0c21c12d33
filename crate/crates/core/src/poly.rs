//! Dense polynomials in monomial form and piecewise polynomials on a
//! sorted breakpoint list. Kernels and every kernel product used by the
//! variance and correlation formulas are represented this way, so their
//! integrals against densities can be done exactly or in closed form.

#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(vec![0.0]);
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Coefficients of `u -> p(u + t)`.
    pub fn shift(&self, t: f64) -> Poly {
        let n = self.0.len();
        let mut out = vec![0.0; n];
        for (k, &c) in self.0.iter().enumerate() {
            // (u + t)^k = sum_j C(k, j) u^j t^(k-j)
            let mut binom = 1.0;
            for j in (0..=k).rev() {
                out[j] += c * binom * t.powi((k - j) as i32);
                binom = binom * j as f64 / (k - j + 1) as f64;
            }
        }
        Poly(out)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Poly {
        let mut out = vec![0.0; self.0.len() + 1];
        for (k, c) in self.0.iter().enumerate() {
            out[k + 1] = c / (k + 1) as f64;
        }
        Poly(out)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let p = self.antiderivative();
        p.eval(b) - p.eval(a)
    }

    pub fn pow(&self, e: u32) -> Poly {
        (0..e).fold(Poly::constant(1.0), |acc, _| acc.mul(self))
    }
}

/// Polynomial pieces on `[breaks[i], breaks[i + 1]]`, zero outside the hull.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub breaks: Vec<f64>,
    pub pieces: Vec<Poly>,
}

impl PiecewisePoly {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Poly>) -> Self {
        assert_eq!(breaks.len(), pieces.len() + 1, "one polynomial per gap");
        debug_assert!(breaks.windows(2).all(|w| w[0] <= w[1]));
        Self { breaks, pieces }
    }

    pub fn lo(&self) -> f64 {
        self.breaks[0]
    }

    pub fn hi(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// Right-continuous inside, closed at both ends of the hull.
    pub fn eval(&self, u: f64) -> f64 {
        if u < self.lo() || u > self.hi() || self.pieces.is_empty() {
            return 0.0;
        }
        let i = self.breaks[1..].partition_point(|&b| b <= u).min(self.pieces.len() - 1);
        self.pieces[i].eval(u)
    }

    pub fn integral(&self) -> f64 {
        self.pieces
            .iter()
            .zip(self.breaks.windows(2))
            .map(|(p, w)| p.integral(w[0], w[1]))
            .sum()
    }

    /// Pieces intersected with `[a, b]`, skipping empty ones.
    pub fn clipped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64, &Poly)> + '_ {
        self.pieces.iter().zip(self.breaks.windows(2)).filter_map(move |(p, w)| {
            let lo = w[0].max(a);
            let hi = w[1].min(b);
            (hi > lo).then_some((lo, hi, p))
        })
    }

    pub fn map_pieces(&self, f: impl Fn(&Poly) -> Poly) -> PiecewisePoly {
        PiecewisePoly::new(self.breaks.clone(), self.pieces.iter().map(f).collect())
    }

    /// `u -> self(u) * other(u + t)` on the common support.
    pub fn shifted_product(&self, other: &PiecewisePoly, t: f64) -> PiecewisePoly {
        let lo = self.lo().max(other.lo() - t);
        let hi = self.hi().min(other.hi() - t);
        if hi <= lo {
            return PiecewisePoly::new(vec![0.0, 0.0], vec![Poly::constant(0.0)]);
        }
        let mut cuts: Vec<f64> = self.breaks.iter().copied().chain(other.breaks.iter().map(|b| b - t)).filter(|&b| b > lo && b < hi).collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mut pieces = Vec::with_capacity(cuts.len() - 1);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let pa = self.piece_at(mid);
            let pb = other.piece_at(mid + t).shift(t);
            pieces.push(pa.mul(&pb));
        }
        PiecewisePoly::new(cuts, pieces)
    }

    fn piece_at(&self, u: f64) -> &Poly {
        let i = self.breaks[1..].partition_point(|&b| b <= u).min(self.pieces.len() - 1);
        &self.pieces[i]
    }

    /// Refines the breakpoints at every sign change of the function, so
    /// that `|p|` is again a polynomial on each piece.
    pub fn split_at_roots(&self) -> PiecewisePoly {
        let mut breaks = vec![self.lo()];
        let mut pieces = Vec::new();
        for (p, w) in self.pieces.iter().zip(self.breaks.windows(2)) {
            let mut roots = real_roots_in(p, w[0], w[1]);
            roots.push(w[1]);
            for r in roots {
                if r > *breaks.last().unwrap() {
                    breaks.push(r);
                    pieces.push(p.clone());
                }
            }
        }
        PiecewisePoly::new(breaks, pieces)
    }

    /// Same breakpoints, each piece replaced by `|p|^e`. Requires the
    /// function not to change sign inside a piece.
    pub fn abs_pow(&self, e: u32) -> PiecewisePoly {
        let split = self.split_at_roots();
        let pieces = split
            .pieces
            .iter()
            .zip(split.breaks.windows(2))
            .map(|(p, w)| {
                let s = if p.eval(0.5 * (w[0] + w[1])) < 0.0 { -1.0 } else { 1.0 };
                Poly(p.0.iter().map(|c| s * c).collect()).pow(e)
            })
            .collect();
        PiecewisePoly::new(split.breaks, pieces)
    }
}

/// Sign changes of `p` strictly inside `(a, b)`, located by scanning a
/// fine grid and bisecting.
fn real_roots_in(p: &Poly, a: f64, b: f64) -> Vec<f64> {
    const SCAN: usize = 512;
    let mut out = Vec::new();
    let step = (b - a) / SCAN as f64;
    let mut x0 = a;
    let mut f0 = p.eval(a);
    for i in 1..=SCAN {
        let x1 = if i == SCAN { b } else { a + step * i as f64 };
        let f1 = p.eval(x1);
        if f1 == 0.0 && i < SCAN && f0 != 0.0 {
            out.push(x1);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = p.eval(mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            let r = 0.5 * (lo + hi);
            if r > a && r < b {
                out.push(r);
            }
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matches_direct_evaluation() {
        let p = Poly(vec![1.0, -2.0, 0.5, 3.0]);
        let q = p.shift(0.37);
        for &u in &[-1.0, 0.0, 0.2, 1.5] {
            assert!((q.eval(u) - p.eval(u + 0.37)).abs() < 1e-12);
        }
    }

    #[test]
    fn antiderivative_and_integral() {
        let p = Poly(vec![0.0, 0.0, 3.0]);
        assert!((p.integral(0.0, 2.0) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_product_of_boxes_is_triangle() {
        let b = PiecewisePoly::new(vec![-0.5, 0.5], vec![Poly::constant(1.0)]);
        for &t in &[-0.8, -0.3, 0.0, 0.4, 1.2] {
            let g = b.shifted_product(&b, t);
            let want = (1.0 - f64::abs(t)).max(0.0);
            assert!((g.integral() - want).abs() < 1e-14, "t={t}");
        }
    }

    #[test]
    fn abs_pow_splits_sign_changes() {
        let p = PiecewisePoly::new(vec![-1.0, 1.0], vec![Poly(vec![0.0, 1.0])]);
        let a = p.abs_pow(3);
        assert_eq!(a.pieces.len(), 2);
        assert!((a.integral() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eval_closed_hull() {
        let b = PiecewisePoly::new(vec![-0.5, 0.0, 0.5], vec![Poly::constant(1.0), Poly::constant(2.0)]);
        assert_eq!(b.eval(-0.5), 1.0);
        assert_eq!(b.eval(0.0), 2.0);
        assert_eq!(b.eval(0.5), 2.0);
        assert_eq!(b.eval(0.5000001), 0.0);
    }
}
