use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Variance values down to this far below zero are rounding noise and clamp to 0.
pub const VARIANCE_TOLERANCE: f64 = 1e-12;

/// Running statistics of the contributions routed to one leaf.
///
/// `sum` and `sum_sq` accumulate `v - shift`, where `shift` is the first value
/// pushed. Shifting keeps the variance free of cancellation when all
/// contributions sit far from zero, and leaves the stats exactly mergeable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LeafStats {
    pub count: u64,
    pub shift: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl LeafStats {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let mut s = Self::default();
        for v in values {
            s.push(v);
        }
        s
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.shift = v;
        }
        let d = v - self.shift;
        self.count += 1;
        self.sum += d;
        self.sum_sq += d * d;
    }

    /// Leaf output `o`: the mean contribution. NaN for an empty leaf.
    #[inline]
    pub fn mean(&self) -> f64 {
        self.shift + self.sum / self.count as f64
    }

    /// Sample variance `s²` with the `c - 1` denominator; `None` while `c < 2`.
    pub fn variance(&self) -> Result<Option<f64>> {
        if self.count < 2 {
            return Ok(None);
        }
        let c = self.count as f64;
        let raw = (self.sum_sq - self.sum * self.sum / c) / (c - 1.0);
        if raw >= 0.0 {
            Ok(Some(raw))
        } else if raw >= -VARIANCE_TOLERANCE {
            Ok(Some(0.0))
        } else {
            Err(Error::Internal(format!(
                "leaf variance {raw} below tolerance (count {}, sum {}, sum_sq {})",
                self.count, self.sum, self.sum_sq
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn update_matches_recomputation() {
        // {c=2, o=1, s²=0} plus 4.0 is the multiset {1, 1, 4}.
        let mut s = LeafStats::from_values([1.0, 1.0]);
        assert_eq!(s.variance().unwrap(), Some(0.0));
        s.push(4.0);
        assert_eq!(s.count, 3);
        assert!((s.mean() - 2.0).abs() < 1e-15);
        assert!((s.variance().unwrap().unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn pushing_the_mean_keeps_zero_variance() {
        let mut s = LeafStats::from_values([2.5, 2.5]);
        s.push(2.5);
        assert_eq!(s.variance().unwrap(), Some(0.0));
    }

    #[test]
    fn successive_pushes_equal_batch() {
        let mut a = LeafStats::from_values([0.3, 1.7]);
        a.push(-2.0);
        a.push(5.5);
        let b = LeafStats::from_values([0.3, 1.7, -2.0, 5.5]);
        assert_eq!(a, b);
    }

    #[test]
    fn large_offset_constant_values_have_zero_variance() {
        let s = LeafStats::from_values(std::iter::repeat(-1234.567).take(10_000));
        assert_eq!(s.variance().unwrap(), Some(0.0));
    }

    #[test]
    fn undefined_below_two() {
        assert_eq!(LeafStats::from_values([1.0]).variance().unwrap(), None);
        assert!(LeafStats::default().mean().is_nan());
    }

    #[test]
    fn matches_two_pass_formula() {
        let vals = [3.2, -1.0, 7.25, 0.0, 2.5, 2.5, -4.125];
        let s = LeafStats::from_values(vals);
        let (m, v) = brute(&vals);
        assert!((s.mean() - m).abs() < 1e-12);
        assert!((s.variance().unwrap().unwrap() - v).abs() < 1e-12);
    }
}
