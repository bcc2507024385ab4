//! Order-independent floating-point accumulation.
//!
//! [`ExactSum`] keeps the running total as a list of non-overlapping partials
//! (Shewchuk's expansion arithmetic, the algorithm behind Python's
//! `math.fsum`). Every addition is exact and [`ExactSum::value`] returns the
//! correctly rounded total, so the result does not depend on the order in
//! which values arrive or on how partial sums are merged across threads.

use std::mem;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
    // inf/nan bypass the expansion; they are summed naively
    special: f64,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        if !value.is_finite() {
            self.special += value;
            return;
        }
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// Adds every partial of `other`; exact, hence commutative and associative.
    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
        self.special += other.special;
    }

    /// Correctly rounded (round-half-even) value of the exact sum.
    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        let p = &self.partials;
        let Some(mut idx) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[idx];
        let mut lo = 0.0;
        while idx > 0 {
            let x = hi;
            idx -= 1;
            let y = p[idx];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: the remaining partials decide the rounding direction.
        if idx > 0 && ((lo < 0.0 && p[idx - 1] < 0.0) || (lo > 0.0 && p[idx - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        s.extend(iter);
        s
    }
}

/// Exact first and second moments of a stream, plus the fourth moment used
/// for Monte Carlo standard errors of the second.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentSums {
    pub count: u64,
    pub sum: ExactSum,
    pub sum_sq: ExactSum,
    pub sum_quad: ExactSum,
}

impl MomentSums {
    pub fn push(&mut self, x: f64) {
        let sq = x * x;
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(sq);
        self.sum_quad.add(sq * sq);
    }

    pub fn merge(&mut self, other: &MomentSums) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.sum_quad.merge(&other.sum_quad);
    }

    pub fn mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    pub fn mean_sq(&self) -> f64 {
        self.sum_sq.value() / self.count as f64
    }

    /// Standard error of [`MomentSums::mean_sq`].
    pub fn mean_sq_se(&self) -> f64 {
        let n = self.count as f64;
        let m2 = self.mean_sq();
        let var = (self.sum_quad.value() / n - m2 * m2).max(0.0);
        (var / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancels_catastrophically_large_terms() {
        let s: ExactSum = [1e100, 1.0, -1e100, 1e-100].into_iter().collect();
        assert_eq!(s.value(), 1.0);
        let s: ExactSum = [0.1; 10].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn empty_and_special() {
        assert_eq!(ExactSum::new().value(), 0.0);
        let s: ExactSum = [1.0, f64::INFINITY].into_iter().collect();
        assert_eq!(s.value(), f64::INFINITY);
    }

    #[test]
    fn half_way_rounds_to_even() {
        // 1 + 2^-53 + 2^-106 is just above the half-way point between 1 and 1 + 2^-52.
        let s: ExactSum = [1.0, 2f64.powi(-53), 2f64.powi(-106)].into_iter().collect();
        assert_eq!(s.value(), 1.0 + 2f64.powi(-52));
        let s: ExactSum = [1.0, 2f64.powi(-53)].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }

    fn scaled() -> impl Strategy<Value = f64> {
        // m·2^e with |e| small enough that an i128 fixed-point sum is exact
        (-(1i64 << 52)..(1i64 << 52), -40i32..20).prop_map(|(m, e)| m as f64 * 2f64.powi(e))
    }

    proptest! {
        #[test]
        fn matches_fixed_point_oracle(values in prop::collection::vec(scaled(), 0..60)) {
            let exact: i128 = values.iter().map(|v| (v * 2f64.powi(40)) as i128).sum();
            let oracle = exact as f64 / 2f64.powi(40);
            let s: ExactSum = values.iter().copied().collect();
            prop_assert_eq!(s.value(), oracle);
        }

        #[test]
        fn order_and_merge_independent(values in prop::collection::vec(-1e6f64..1e6, 1..80), split in 0usize..80) {
            let forward: ExactSum = values.iter().copied().collect();
            let backward: ExactSum = values.iter().rev().copied().collect();
            prop_assert_eq!(forward.value().to_bits(), backward.value().to_bits());

            let split = split.min(values.len());
            let mut left: ExactSum = values[..split].iter().copied().collect();
            let right: ExactSum = values[split..].iter().copied().collect();
            left.merge(&right);
            prop_assert_eq!(left.value().to_bits(), forward.value().to_bits());
        }
    }
}
