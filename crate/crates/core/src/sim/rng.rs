//! Seeded random streams and small sampling helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::scalar::Scalar;

pub type SimRng = ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a seed for one cell of an experiment from the master seed and
/// the cell's coordinates.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

pub fn exponential<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rate: T) -> T {
    let e: f64 = rng.sample(Exp1);
    T::lit(e) / rate
}

/// Draws an index with probability proportional to `weights`. `total`
/// must be their sum and positive.
pub fn categorical<T: Scalar, R: Rng + ?Sized>(rng: &mut R, weights: &[T], total: T) -> usize {
    let target = uniform::<T, _>(rng) * total;
    pick(weights, target)
}

/// Index where the running sum of `weights` first exceeds `target`,
/// falling back to the last positive weight.
pub fn pick<T: Scalar>(weights: &[T], target: T) -> usize {
    let mut acc = T::zero();
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > T::zero() {
            acc = acc + w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Action 1 with probability `p1`.
pub fn bernoulli<T: Scalar, R: Rng + ?Sized>(rng: &mut R, p1: T) -> usize {
    if p1 >= T::one() {
        1
    } else if p1 <= T::zero() {
        0
    } else {
        usize::from(uniform::<T, _>(rng) < p1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, stream| {
            let mut r = stream_rng(seed, stream);
            (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>()
        };
        let (a, b, c) = (draw(7, 1), draw(7, 1), draw(7, 2));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    }

    #[test]
    fn pick_skips_zero_weights() {
        let w = [0.0, 0.25, 0.0, 0.75];
        assert_eq!(pick(&w, 0.0), 1);
        assert_eq!(pick(&w, 0.3), 3);
        assert_eq!(pick(&w, 1.0), 3);
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = stream_rng(3, 0);
        let w = [1.0, 3.0];
        let hits = (0..40_000).filter(|_| categorical(&mut rng, &w, 4.0) == 1).count();
        assert!((hits as f64 / 40_000.0 - 0.75).abs() < 0.01);
    }
}
