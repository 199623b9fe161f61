use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const SYNTH_MEAN: f64 = 0.5;
/// Wide enough that roughly 31% of the mass clips to each end of `[0, 1]`.
pub const SYNTH_A_SIGMA: f64 = 1.0;
pub const SYNTH_B_SIGMA: f64 = 0.15;

/// Synthetic activation distributions: `A` piles up at 0 and 1, `B` sits
/// around mid-range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    A,
    B,
}

impl SynthKind {
    pub fn sigma(self) -> f64 {
        match self {
            SynthKind::A => SYNTH_A_SIGMA,
            SynthKind::B => SYNTH_B_SIGMA,
        }
    }
}

/// `count` vectors of width `dim`, each entry `N(0.5, σ)` clipped to `[0, 1]`.
pub fn synth_distribution(kind: SynthKind, count: usize, dim: usize, seed: u64) -> Result<Matrix> {
    if count == 0 || dim == 0 {
        return Err(Error::Shape("synthetic batch must be non-empty".into()));
    }
    let normal = Normal::new(SYNTH_MEAN, kind.sigma()).expect("sigma is positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..count * dim)
        .map(|_| normal.sample(&mut rng).clamp(0.0, 1.0))
        .collect();
    Matrix::from_vec(count, dim, data)
}
