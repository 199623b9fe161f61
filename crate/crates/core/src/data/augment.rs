use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CropMode {
    /// Offsets drawn uniformly from `0..=(source - target)` on each axis.
    Random,
    Center,
}

/// Random distortions applied to 32×32×3 CIFAR images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub crop: usize,
    pub crop_mode: CropMode,
    pub flip_prob: f64,
    /// Brightness shift drawn from `[-brightness, brightness]`.
    pub brightness: f64,
    /// Contrast factor drawn from `[1 - contrast, 1 + contrast]`.
    pub contrast: f64,
    pub seed: u64,
}

impl AugmentSpec {
    /// Training distortions: random 28×28 crop, flips, brightness ±63/255 and
    /// contrast in [0.2, 1.8].
    pub fn training(seed: u64) -> Self {
        Self {
            crop: 28,
            crop_mode: CropMode::Random,
            flip_prob: 0.5,
            brightness: 63.0 / 255.0,
            contrast: 0.8,
            seed,
        }
    }

    /// Deterministic evaluation pipeline: center crop, nothing else.
    pub fn evaluation() -> Self {
        Self {
            crop: 28,
            crop_mode: CropMode::Center,
            flip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            seed: 0,
        }
    }
}

/// Crops and distorts every sample; output stays channel-planar.
pub fn augment(data: &Dataset, spec: &AugmentSpec) -> Result<Dataset> {
    let (h, w, c) = data.shape();
    if (h, w, c) != (32, 32, 3) {
        return Err(Error::Shape(format!(
            "augmentation expects 32x32x3 sources, got {h}x{w}x{c}"
        )));
    }
    if spec.crop == 0 || spec.crop > h {
        return Err(Error::Shape(format!("crop {} does not fit {h}", spec.crop)));
    }
    let t = spec.crop;
    let slack = h - t;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(data.len() * t * t * c);
    let mut buf = vec![0.0; t * t * c];
    for n in 0..data.len() {
        let src = data.image(n);
        let (oy, ox) = match spec.crop_mode {
            CropMode::Random => (rng.random_range(0..=slack), rng.random_range(0..=slack)),
            CropMode::Center => (slack / 2, slack / 2),
        };
        let flip = spec.flip_prob > 0.0 && rng.random::<f64>() < spec.flip_prob;
        let delta = if spec.brightness > 0.0 {
            rng.random_range(-spec.brightness..=spec.brightness)
        } else {
            0.0
        };
        let factor = if spec.contrast > 0.0 {
            rng.random_range(1.0 - spec.contrast..=1.0 + spec.contrast)
        } else {
            1.0
        };
        for ch in 0..c {
            for y in 0..t {
                for x in 0..t {
                    let sx = if flip { ox + t - 1 - x } else { ox + x };
                    buf[ch * t * t + y * t + x] = src[ch * h * w + (oy + y) * w + sx] + delta;
                }
            }
        }
        if factor != 1.0 {
            let mean = buf.iter().sum::<f64>() / buf.len() as f64;
            for v in &mut buf {
                *v = (*v - mean) * factor + mean;
            }
        }
        out.extend(buf.iter().map(|v| v.clamp(0.0, 1.0)));
    }
    Dataset::new(out, data.labels().to_vec(), (t, t, c), data.classes())
}

pub fn center_crop(data: &Dataset) -> Result<Dataset> {
    augment(data, &AugmentSpec::evaluation())
}
