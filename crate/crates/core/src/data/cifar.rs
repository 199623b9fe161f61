use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const SIDE: usize = 32;
const CHANNELS: usize = 3;
const PIXELS: usize = SIDE * SIDE * CHANNELS;
/// One label byte followed by 3072 channel-planar pixel bytes.
pub const CIFAR_RECORD_BYTES: usize = PIXELS + 1;

/// Loads and concatenates CIFAR-10 binary batch files.
pub fn load_cifar10_bin(paths: &[impl AsRef<Path>]) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(Error::format(
                path,
                format!(
                    "length {} is not a positive multiple of {CIFAR_RECORD_BYTES}",
                    bytes.len()
                ),
            ));
        }
        images.reserve(bytes.len());
        for rec in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            if rec[0] > 9 {
                return Err(Error::format(path, format!("label {} out of range", rec[0])));
            }
            labels.push(rec[0]);
            images.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    Dataset::new(images, labels, (SIDE, SIDE, CHANNELS), 10)
}

/// `(train, test)` from a `cifar-10-batches-bin` directory.
pub fn load_cifar10_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train: Vec<_> = (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .collect();
    Ok((
        load_cifar10_bin(&train)?,
        load_cifar10_bin(&[dir.join("test_batch.bin")])?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = vec![0u8; 2 * CIFAR_RECORD_BYTES];
        bytes[CIFAR_RECORD_BYTES] = 9;
        bytes[CIFAR_RECORD_BYTES + 1] = 255;
        let p = dir.path().join("b.bin");
        std::fs::write(&p, &bytes).unwrap();
        let d = load_cifar10_bin(&[&p]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.shape(), (32, 32, 3));
        assert_eq!(d.labels(), &[0, 9]);
        assert!(d.image(0).iter().all(|&v| v == 0.0));
        assert_eq!(d.image(1)[0], 1.0);
    }

    #[test]
    fn rejects_ragged_and_bad_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        std::fs::write(&p, vec![0u8; CIFAR_RECORD_BYTES + 5]).unwrap();
        assert!(matches!(load_cifar10_bin(&[&p]), Err(Error::Format { .. })));
        std::fs::write(&p, vec![]).unwrap();
        assert!(load_cifar10_bin(&[&p]).is_err());
        let mut rec = vec![0u8; CIFAR_RECORD_BYTES];
        rec[0] = 10;
        std::fs::write(&p, rec).unwrap();
        assert!(load_cifar10_bin(&[&p]).is_err());
        assert!(matches!(
            load_cifar10_bin(&[dir.path().join("missing.bin")]),
            Err(Error::Io { .. })
        ));
    }
}
