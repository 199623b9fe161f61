use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: usize = 2051;
const LABELS_MAGIC: usize = 2049;
const MAX_SAMPLES: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn prefix(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        }
    }
}

/// Loads a split from `dir`, accepting either raw or `.gz` files.
pub fn load_mnist(dir: &Path, split: MnistSplit) -> Result<Dataset> {
    let find = |kind: &str| -> PathBuf {
        let raw = dir.join(format!("{}-{kind}", split.prefix()));
        if raw.exists() {
            return raw;
        }
        let mut gz = raw.into_os_string();
        gz.push(".gz");
        PathBuf::from(gz)
    };
    load_mnist_idx(&find("images-idx3-ubyte"), &find("labels-idx1-ubyte"))
}

fn open(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    let gz = path.extension().is_some_and(|e| e == "gz");
    let res = if gz {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut buf)
    } else {
        BufReader::new(file).read_to_end(&mut buf)
    };
    res.map_err(|e| Error::format(path, format!("read failed: {e}")))?;
    Ok(buf)
}

fn header(path: &Path, bytes: &[u8], words: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 * words {
        return Err(Error::format(path, "short read: header truncated"));
    }
    Ok((0..words)
        .map(|i| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize)
        .collect())
}

/// Parses an IDX image/label file pair; pixels are scaled by 1/255.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let ib = open(images)?;
    let h = header(images, &ib, 4)?;
    if h[0] != IMAGES_MAGIC {
        return Err(Error::format(
            images,
            format!("bad magic {} (expected {IMAGES_MAGIC})", h[0]),
        ));
    }
    let (n, rows, cols) = (h[1], h[2], h[3]);
    if n > MAX_SAMPLES || rows == 0 || cols == 0 || rows > 1024 || cols > 1024 {
        return Err(Error::format(
            images,
            format!("implausible dimensions {n}x{rows}x{cols}"),
        ));
    }
    let need = 16 + n * rows * cols;
    if ib.len() < need {
        return Err(Error::format(
            images,
            format!("short read: {} of {need} bytes", ib.len()),
        ));
    }

    let lb = open(labels)?;
    let lh = header(labels, &lb, 2)?;
    if lh[0] != LABELS_MAGIC {
        return Err(Error::format(
            labels,
            format!("bad magic {} (expected {LABELS_MAGIC})", lh[0]),
        ));
    }
    if lh[1] != n {
        return Err(Error::format(
            labels,
            format!("{} labels for {n} images", lh[1]),
        ));
    }
    if lb.len() < 8 + n {
        return Err(Error::format(
            labels,
            format!("short read: {} of {} bytes", lb.len(), 8 + n),
        ));
    }
    let label_bytes = lb[8..8 + n].to_vec();
    if let Some(bad) = label_bytes.iter().find(|&&l| l > 9) {
        return Err(Error::format(labels, format!("label {bad} out of range")));
    }
    let pixels = ib[16..need].iter().map(|&p| p as f64 / 255.0).collect();
    Dataset::new(pixels, label_bytes, (rows, cols, 1), 10)
}
