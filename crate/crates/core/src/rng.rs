//! Seeded random streams.
//!
//! The generator is xoshiro256++ seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). Both are fully specified integer
//! algorithms, so a seed yields the same stream on every platform.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub struct Rng {
    inner: Xoshiro256PlusPlus,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Independent child stream; used so that e.g. prototypes and per-sequence
    /// noise do not share a stream.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.inner.random())
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self, mu: f64, sigma: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.inner);
        mu + sigma * z
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_in(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// Distribution used by [`rng_fill`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform { lo: f64, hi: f64 },
    Normal { mu: f64, sigma: f64 },
    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
}

pub fn rng_fill(rng: &mut Rng, rows: usize, cols: usize, init: Init) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidShape { rows, cols });
    }
    let count = rows * cols;
    let data = match init {
        Init::Uniform { lo, hi } => (0..count).map(|_| rng.uniform_in(lo, hi)).collect(),
        Init::Normal { mu, sigma } => (0..count).map(|_| rng.normal(mu, sigma)).collect(),
        Init::Glorot { fan_in, fan_out } => {
            if fan_in == 0 || fan_out == 0 {
                return Err(Error::InvalidArgument(format!(
                    "glorot fans must be positive, got ({fan_in}, {fan_out})"
                )));
            }
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..count).map(|_| rng.uniform_in(-limit, limit)).collect()
        }
    };
    Matrix::new(rows, cols, data)
}
