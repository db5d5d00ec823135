//! Deterministic seeded random stream used everywhere randomness is needed.
//!
//! xoshiro256** state expanded from a 64-bit seed via SplitMix64, with
//! substreams derived by hashing tag words into the seed. Channel draws,
//! data symbols and noise all come from here, so a run is a pure function
//! of its seed.

use crate::Scalar;
use nalgebra::Complex;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(z: &mut u64) -> u64 {
    *z = z.wrapping_add(GOLDEN);
    let mut x = *z;
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded xoshiro256** stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    s: [u64; 4],
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut z = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut z);
        }
        SeededRng { s }
    }

    /// Independent substream for `(seed, tags...)`, e.g. per (trial, hop).
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut z = seed;
        let mut mixed = splitmix64(&mut z);
        for &t in tags {
            let mut w = t ^ mixed.rotate_left(17);
            mixed ^= splitmix64(&mut w).wrapping_add(GOLDEN);
        }
        SeededRng::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = (self.s[1].wrapping_mul(5)).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        // Modulo bias is irrelevant for the small n used here.
        self.next_u64() % n
    }

    /// Pair of independent standard normals (Box-Muller).
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        loop {
            let u1 = self.next_f64();
            let u2 = self.next_f64();
            if u1 > 1e-300 {
                let r = (-2.0 * u1.ln()).sqrt();
                let theta = 2.0 * std::f64::consts::PI * u2;
                return (r * theta.cos(), r * theta.sin());
            }
        }
    }

    /// Circularly symmetric complex Gaussian, zero mean, unit variance
    /// (real and imaginary parts each carry variance 1/2).
    pub fn complex_gaussian<T: Scalar>(&mut self) -> Complex<T> {
        let (a, b) = self.next_gaussian_pair();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        Complex::new(T::from_f64_lit(a * half), T::from_f64_lit(b * half))
    }
}
