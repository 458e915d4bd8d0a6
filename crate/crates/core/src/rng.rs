//! Deterministic, seedable random number generation.
//!
//! Every Monte-Carlo loop in this crate derives one child generator per
//! sample index from a single 64-bit seed, so tallies are bitwise identical
//! regardless of how the samples are spread across worker threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::Error;
use crate::image::Image;
use crate::scalar::Real;
use crate::Result;

/// Derives a child seed from `(seed, index)` with a splitmix64-style
/// finalizer. The mixing function is fixed; child streams for distinct
/// indices are statistically independent.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator seeded by a single `u64`.
///
/// The stream is ChaCha8; identical seeds give identical streams. Gaussian
/// variates use the Box-Muller transform (fixed choice, so runs are
/// reproducible bit for bit per seed within one build).
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            stream: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// The seed this generator was built from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator for `(seed, index)`; does not consume this stream.
    pub fn child(&self, index: u64) -> Rng {
        Rng::from_seed(split_seed(self.seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.stream.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in `[0, bound)`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Standard normal variate via Box-Muller; pairs are generated together
    /// and the second value is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `count` distinct indices drawn uniformly from `0..bound`, in draw
    /// order (partial Fisher-Yates).
    pub fn sample_distinct(&mut self, bound: usize, count: usize) -> Vec<usize> {
        assert!(count <= bound, "cannot draw {count} distinct values from {bound}");
        let mut pool: Vec<usize> = (0..bound).collect();
        for i in 0..count {
            let j = i + self.below((bound - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }

    /// Random permutation of `0..n` (full Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        self.sample_distinct(n, n)
    }
}

/// Image-shaped field of independent `N(0, sigma^2)` entries.
///
/// `sigma = 0` yields the all-zero field.
pub fn sample_gaussian_image<T: Real>(
    height: usize,
    width: usize,
    channels: usize,
    sigma: f64,
    rng: &mut Rng,
) -> Result<Image<T>> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "noise std must be finite and nonnegative, got {sigma}"
        )));
    }
    let mut img = Image::zeros(height, width, channels)?;
    for v in img.data_mut() {
        *v = T::from64(sigma * rng.standard_normal());
    }
    Ok(img)
}

/// Image-shaped direction of unit L2 norm (a normalized Gaussian field).
pub fn sample_unit_direction<T: Real>(
    height: usize,
    width: usize,
    channels: usize,
    rng: &mut Rng,
) -> Result<Image<T>> {
    loop {
        let field = sample_gaussian_image::<T>(height, width, channels, 1.0, rng)?;
        let norm = field.l2_norm();
        if norm > 1e-12 {
            return Ok(field.scaled(1.0 / norm));
        }
    }
}
