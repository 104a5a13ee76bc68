//! Seed splitting and standard-normal generation.
//!
//! Every sample index gets its own ChaCha8 stream seeded from
//! `splitmix64(seed ^ splitmix64(index + 1))`, so results never depend on
//! which thread handled which index. Normals come from Box-Muller on 53-bit
//! uniforms in `(0, 1]`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;

/// Root seed of a reproducible computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    /// Seed for stream `index`.
    pub fn child(self, index: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(1))))
    }

    pub fn normals(self) -> NormalStream {
        NormalStream::new(self)
    }
}

pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: RngSeed) -> Self {
        NormalStream { rng: ChaCha8Rng::seed_from_u64(seed.0), spare: None }
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = self.normal());
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Matrix<f64> {
        let mut data = vec![0.0; rows * cols];
        self.fill(&mut data);
        Matrix::from_vec(rows, cols, data)
    }
}
