//! Datasets: loaders for the MNIST IDX and CIFAR-10 binary formats, CIFAR
//! augmentation, synthetic activation distributions, and verified downloads.
//!
//! Directory layout under the data root (`$RRAMNET_DATA_DIR`, default `./data`):
//!
//! ```text
//! mnist/train-images-idx3-ubyte     (or the same name with .gz)
//! mnist/train-labels-idx1-ubyte
//! mnist/t10k-images-idx3-ubyte
//! mnist/t10k-labels-idx1-ubyte
//! cifar-10-batches-bin/data_batch_{1..5}.bin
//! cifar-10-batches-bin/test_batch.bin
//! ```

mod augment;
mod cifar;
mod fetch;
mod mnist;
mod synth;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

pub use augment::{augment, center_crop, AugmentSpec, CropMode};
pub use cifar::{load_cifar10_bin, load_cifar10_dir, CIFAR_RECORD_BYTES};
pub use fetch::{fetch, fetch_pinned, sha256_file, verify_file, DatasetName, FetchReport, PinnedFile};
pub use mnist::{load_mnist, load_mnist_idx, MnistSplit};
pub use synth::{synth_distribution, SynthKind, SYNTH_A_SIGMA, SYNTH_B_SIGMA};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DATA_DIR_ENV: &str = "RRAMNET_DATA_DIR";

/// `$RRAMNET_DATA_DIR` if set, else `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Flattened images in `[0, 1]` with integer labels.
///
/// Images are stored row-major, one sample per row of `dim()` values. CIFAR
/// samples keep the channel-planar layout of the source files (all red,
/// then all green, then all blue).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<f64>,
    labels: Vec<u8>,
    /// `(height, width, channels)`
    shape: (usize, usize, usize),
    classes: usize,
}

impl Dataset {
    pub fn new(
        images: Vec<f64>,
        labels: Vec<u8>,
        shape: (usize, usize, usize),
        classes: usize,
    ) -> Result<Self> {
        let dim = shape.0 * shape.1 * shape.2;
        if dim == 0 || images.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} pixel values for {} samples of {dim}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain("pixel", *v, "[0, 1]"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::domain("label", l as f64, format!("< {classes}")));
        }
        Ok(Self {
            images,
            labels,
            shape,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, n: usize) -> &[f64] {
        let d = self.dim();
        &self.images[n * d..(n + 1) * d]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.images
    }

    /// Gathers the given samples into a `(len, dim)` matrix plus labels.
    pub fn batch(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        let mut labels = Vec::with_capacity(idx.len());
        for &n in idx {
            data.extend_from_slice(self.image(n));
            labels.push(self.labels[n] as usize);
        }
        (
            Matrix::from_vec(idx.len(), d, data).expect("gathered rows are full width"),
            labels,
        )
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n * self.dim()].to_vec(),
            labels: self.labels[..n].to_vec(),
            shape: self.shape,
            classes: self.classes,
        }
    }

    /// A seeded random subset of `n` samples, in shuffled order.
    pub fn subset(&self, n: usize, rng: &mut impl Rng) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        idx.truncate(n.min(self.len()));
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(idx.len() * self.dim());
        let mut labels = Vec::with_capacity(idx.len());
        for &n in idx {
            images.extend_from_slice(self.image(n));
            labels.push(self.labels[n]);
        }
        Dataset {
            images,
            labels,
            shape: self.shape,
            classes: self.classes,
        }
    }

    pub fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let (shape, classes) = (first.shape, first.classes);
        if parts.iter().any(|p| p.shape != shape || p.classes != classes) {
            return Err(Error::Shape("cannot concatenate datasets of different shapes".into()));
        }
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            images.extend(p.images);
            labels.extend(p.labels);
        }
        Ok(Dataset {
            images,
            labels,
            shape,
            classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_enforces_invariants() {
        assert!(Dataset::new(vec![0.0; 4], vec![0, 1], (1, 2, 1), 2).is_ok());
        assert!(Dataset::new(vec![0.0; 3], vec![0, 1], (1, 2, 1), 2).is_err());
        assert!(Dataset::new(vec![0.0, 1.5], vec![0], (1, 2, 1), 2).is_err());
        assert!(Dataset::new(vec![0.0; 2], vec![2], (1, 2, 1), 2).is_err());
    }

    #[test]
    fn batch_and_select() {
        let d = Dataset::new(vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5], vec![0, 1, 2], (1, 2, 1), 3).unwrap();
        let (x, y) = d.batch(&[2, 0]);
        assert_eq!(x.as_slice(), &[0.4, 0.5, 0.0, 0.1]);
        assert_eq!(y, vec![2, 0]);
        assert_eq!(d.select(&[1]).image(0), &[0.2, 0.3]);
        assert_eq!(d.head(2).len(), 2);
        let both = Dataset::concat(vec![d.head(1), d.head(2)]).unwrap();
        assert_eq!(both.labels(), &[0, 0, 1]);
    }
}
