//! Counter-based randomness: every draw is SplitMix64 over a packed key, so
//! streams are reproducible across platforms and independent of call order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn key(seed: u64, stream: u64, t: u64, salt: u64) -> u64 {
    mix(mix(mix(mix(seed) ^ stream) ^ t) ^ salt)
}

/// Uniform in [0, 1) with 53 bits.
pub fn unit(key: u64) -> f64 {
    (mix(key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_value() {
        // first output of the reference generator seeded with 0
        assert_eq!(mix(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn unit_range() {
        for i in 0..10_000 {
            let u = unit(key(3, 1, i, 0));
            assert!((0.0..1.0).contains(&u));
        }
    }
}
