//! Counter-based randomness.
//!
//! Every random quantity in the crate is a pure function of a master seed, a
//! stream (replica) identifier and a counter. Results therefore do not depend
//! on thread scheduling, and the same uniform value is reused for an edge when
//! only the percolation parameters change (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child key from a parent key and a label.
#[inline]
pub fn derive(key: u64, label: u64) -> u64 {
    mix64(mix64(key ^ 0x5851_F42D_4C95_7F2D).wrapping_add(label.wrapping_mul(GOLDEN)))
}

/// Key for one stream (replica) of a master seed.
#[inline]
pub fn stream_key(seed: u64, stream: u64) -> u64 {
    derive(seed, stream)
}

/// Raw 53-bit value for `counter` within a stream.
#[inline]
pub fn counter_bits(stream_key: u64, counter: u64) -> u64 {
    mix64(stream_key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN))) >> 11
}

/// Converts 53 random bits to a uniform value in `[0, 1)`.
#[inline]
pub fn bits_to_unit(bits: u64) -> f64 {
    bits as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform value in `[0, 1)` for `counter` within a stream.
#[inline]
pub fn counter_uniform(stream_key: u64, counter: u64) -> f64 {
    bits_to_unit(counter_bits(stream_key, counter))
}

/// A sequential generator for the given stream of a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_in_unit_interval_and_deterministic() {
        let key = stream_key(7, 3);
        for c in 0..10_000 {
            let u = counter_uniform(key, c);
            assert!((0.0..1.0).contains(&u));
            assert_eq!(u, counter_uniform(key, c));
        }
    }

    #[test]
    fn streams_differ() {
        let a = stream_key(7, 0);
        let b = stream_key(7, 1);
        let same = (0..1000).filter(|&c| counter_bits(a, c) == counter_bits(b, c)).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn mean_and_variance_are_uniform() {
        let key = stream_key(11, 0);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for c in 0..n {
            let u = counter_uniform(key, c);
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 3.0 * (1.0f64 / 12.0 / n as f64).sqrt() * 1.5);
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }
}
