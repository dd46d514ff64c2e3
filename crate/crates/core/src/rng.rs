//! Counter-based random coefficients.
//!
//! A coefficient is a pure function of `(seed, draw, family, k)`: the ChaCha
//! stream is selected by `(draw, family)` and the word position by the lattice
//! point `k`. Draws can therefore be evaluated in any order, on any number of
//! threads, and still be bit-identical.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Distribution of the randomizing coefficients; all have `E|g|^2 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// Real and imaginary parts independent `N(0, 1/2)`.
    ComplexGaussian,
    /// Real and imaginary parts independent `+-1/sqrt 2`.
    Bernoulli,
}

/// Words reserved per lattice point; Box-Muller needs four.
const WORDS_PER_POINT: u128 = 8;

fn lattice_key(k: &[i64; 4]) -> u128 {
    // 16 bits per component comfortably covers any grid this crate can hold.
    k.iter()
        .fold(0u128, |acc, &c| (acc << 16) | ((c + (1 << 15)) as u128 & 0xffff))
}

/// The coefficient stream of one draw of one family.
pub struct CoefficientStream {
    rng: ChaCha8Rng,
}

impl CoefficientStream {
    pub fn new(seed: u64, draw: u64, family: u8) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(draw.wrapping_mul(256).wrapping_add(family as u64));
        Self { rng }
    }

    fn uniforms(&mut self, k: &[i64; 4]) -> (f64, f64) {
        self.rng.set_word_pos(lattice_key(k) * WORDS_PER_POINT);
        let a: f64 = self.rng.gen();
        let b: f64 = self.rng.gen();
        (a, b)
    }

    /// Coefficient at lattice point `k`.
    pub fn coefficient(&mut self, law: Law, k: &[i64; 4]) -> Complex64 {
        let (a, b) = self.uniforms(k);
        match law {
            Law::ComplexGaussian => {
                let r = (-(1.0 - a).ln()).sqrt();
                Complex64::from_polar(r, 2.0 * PI * b)
            }
            Law::Bernoulli => {
                let re = if a < 0.5 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if b < 0.5 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                Complex64::new(re, im)
            }
        }
    }

    /// A real coefficient with unit variance.
    pub fn real_coefficient(&mut self, law: Law, k: &[i64; 4]) -> f64 {
        let (a, b) = self.uniforms(k);
        match law {
            Law::ComplexGaussian => (-2.0 * (1.0 - a).ln()).sqrt() * (2.0 * PI * b).cos(),
            Law::Bernoulli => {
                if a < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_do_not_depend_on_query_order() {
        let pts: Vec<[i64; 4]> = (0..50).map(|i| [i % 7 - 3, i / 7 - 3, i % 3, -(i % 5)]).collect();
        let mut s = CoefficientStream::new(9, 4, 0);
        let fwd: Vec<_> = pts.iter().map(|k| s.coefficient(Law::ComplexGaussian, k)).collect();
        let mut s2 = CoefficientStream::new(9, 4, 0);
        let rev: Vec<_> = pts.iter().rev().map(|k| s2.coefficient(Law::ComplexGaussian, k)).collect();
        for (a, b) in fwd.iter().zip(rev.iter().rev()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn draws_and_families_differ() {
        let k = [1, 2, 3, 4];
        let a = CoefficientStream::new(1, 0, 0).coefficient(Law::ComplexGaussian, &k);
        let b = CoefficientStream::new(1, 1, 0).coefficient(Law::ComplexGaussian, &k);
        let c = CoefficientStream::new(1, 0, 1).coefficient(Law::ComplexGaussian, &k);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unit_second_moment() {
        for law in [Law::ComplexGaussian, Law::Bernoulli] {
            let mut s = CoefficientStream::new(3, 0, 0);
            let n = 40_000;
            let m2: f64 = (0..n)
                .map(|i| s.coefficient(law, &[i % 200 - 100, i / 200 - 100, 0, 0]).norm_sqr())
                .sum::<f64>()
                / n as f64;
            assert!((m2 - 1.0).abs() < 0.03, "{law:?}: {m2}");
        }
    }
}
