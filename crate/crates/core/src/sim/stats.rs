//! Summary statistics for trajectory estimates.

use serde::Serialize;

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Sample mean and standard error (sample std over `sqrt(n)`); the error
/// is NaN below two samples.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let s = Summary::of(xs);
    (s.mean, s.std_error())
}

/// Mean, sample standard deviation and normal 95% half-width across
/// independent replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_half_width: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mut acc = KahanSum::new();
        xs.iter().for_each(|&x| acc.add(x));
        let mean = if n == 0 { f64::NAN } else { acc.value() / n as f64 };
        let std = if n < 2 {
            f64::NAN
        } else {
            let mut sq = KahanSum::new();
            xs.iter().for_each(|&x| sq.add((x - mean) * (x - mean)));
            (sq.value() / (n - 1) as f64).sqrt()
        };
        Summary {
            n,
            mean,
            std,
            ci_half_width: 1.96 * std / (n as f64).sqrt(),
        }
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci_half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_half_width
    }

    /// True when the two 95% intervals are disjoint.
    pub fn separated_from(&self, other: &Summary) -> bool {
        self.upper() < other.lower() || other.upper() < self.lower()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_formula() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        let std = (5.0f64 / 3.0).sqrt();
        assert!((s.std - std).abs() < 1e-15);
        assert!((s.ci_half_width - 1.96 * std / 2.0).abs() < 1e-15);
        assert!(Summary::of(&[1.0]).ci_half_width.is_nan());
    }

    #[test]
    fn kahan_beats_naive() {
        let mut k = KahanSum::new();
        let mut naive = 0.0;
        for _ in 0..1_000_000 {
            k.add(0.1);
            naive += 0.1;
        }
        assert!((k.value() - 100_000.0).abs() < (naive - 100_000.0f64).abs());
        assert!((k.value() - 100_000.0).abs() < 1e-9);
    }

    #[test]
    fn separation() {
        let a = Summary::of(&[1.0, 1.1, 0.9]);
        let b = Summary::of(&[5.0, 5.1, 4.9]);
        assert!(a.separated_from(&b));
        assert!(!a.separated_from(&a));
    }
}
