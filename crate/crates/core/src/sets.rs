//! Finite unions of closed intervals, kept sorted and disjoint.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn new(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| b > a);
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Self { intervals: out }
    }

    pub fn interval(a: f64, b: f64) -> Self {
        Self::new(vec![(a, b)])
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    pub fn contains(&self, x: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.1 < x);
        i < self.intervals.len() && self.intervals[i].0 <= x
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        Self::new(self.intervals.iter().map(|&(a, b)| (a.max(lo), b.min(hi))).collect())
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a0, a1) = self.intervals[i];
            let (b0, b1) = other.intervals[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { intervals: out }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(self.intervals.iter().chain(other.intervals.iter()).copied().collect())
    }

    /// `[lo, hi]` minus this set.
    pub fn complement_within(&self, lo: f64, hi: f64) -> Self {
        let mut out = Vec::new();
        let mut cur = lo;
        for &(a, b) in &self.intervals {
            if b <= lo || a >= hi {
                continue;
            }
            if a > cur {
                out.push((cur, a.min(hi)));
            }
            cur = cur.max(b);
        }
        if cur < hi {
            out.push((cur, hi));
        }
        Self::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalises_and_measures() {
        let s = IntervalSet::new(vec![(0.5, 0.7), (0.0, 0.2), (0.15, 0.3), (1.0, 1.0)]);
        assert_eq!(s.intervals(), &[(0.0, 0.3), (0.5, 0.7)]);
        assert!((s.measure() - 0.5).abs() < 1e-15);
        assert!(s.contains(0.6) && !s.contains(0.4));
    }

    #[test]
    fn intersect_and_complement() {
        let a = IntervalSet::new(vec![(0.0, 1.0), (2.0, 3.0)]);
        let b = IntervalSet::interval(0.5, 2.5);
        assert_eq!(a.intersect(&b).intervals(), &[(0.5, 1.0), (2.0, 2.5)]);
        assert_eq!(a.complement_within(-1.0, 4.0).intervals(), &[(-1.0, 0.0), (1.0, 2.0), (3.0, 4.0)]);
    }
}
