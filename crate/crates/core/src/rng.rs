//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the 64-bit seed with a
//! 64-bit stream id derived from `(purpose, step, branch)`. Uniforms take the
//! top 53 bits of a `u64` draw, `u = ((x >> 11) + 0.5) * 2^-53`, which is
//! strictly inside `(0, 1)`; normals are `Phi^-1(u)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::grid::{FeatureGrid, GridError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    ForwardNoise = 1,
    StepNoise = 2,
    Weights = 3,
    Test = 15,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Source = 0,
    Reference = 1,
    Target = 2,
    None = 3,
}

/// `purpose` in the top 8 bits, `step` in the next 40, `branch` in the low 16.
pub fn stream_id(purpose: Purpose, step: u64, branch: Branch) -> u64 {
    ((purpose as u64) << 56) | ((step & 0xFF_FFFF_FFFF) << 16) | branch as u64
}

pub struct NoiseStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            normal: Normal::new(0.0, 1.0).expect("unit normal"),
        }
    }

    pub fn for_purpose(seed: u64, purpose: Purpose, step: u64, branch: Branch) -> Self {
        Self::new(seed, stream_id(purpose, step, branch))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    pub fn normal_grid(
        &mut self,
        height: usize,
        width: usize,
        channels: usize,
    ) -> Result<FeatureGrid, GridError> {
        FeatureGrid::new(height, width, channels, self.normals(height * width * channels))
    }
}

/// FNV-1a over `bytes`, starting from the offset basis xor `seed`.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
