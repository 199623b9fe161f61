use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MNIST_BASE: &str = "https://storage.googleapis.com/cvdf-datasets/mnist";
const CIFAR_URL: &str = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz";
const ATTEMPTS: u32 = 3;

/// Hashes are of the decompressed files as they sit on disk.
const MNIST_PINS: [(&str, &str); 4] = [
    ("mnist/train-images-idx3-ubyte", "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"),
    ("mnist/train-labels-idx1-ubyte", "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"),
    ("mnist/t10k-images-idx3-ubyte", "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"),
    ("mnist/t10k-labels-idx1-ubyte", "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"),
];

const CIFAR_PINS: [(&str, &str); 6] = [
    ("cifar-10-batches-bin/data_batch_1.bin", "cee916563c9f80d84e3cc88e17fdc0941787f1244f00a67874d45b261883ada5"),
    ("cifar-10-batches-bin/data_batch_2.bin", "a591ca11fa1708a91ee40f54b3da4784ccd871ecf2137de63f51ada8b3fa57ed"),
    ("cifar-10-batches-bin/data_batch_3.bin", "bbe8596564c0f86427f876058170b84dac6670ddf06d79402899d93ceea26f67"),
    ("cifar-10-batches-bin/data_batch_4.bin", "014e562d6e23c72197cc727519169a60359f5eccd8945ad5a09d710285ff4e48"),
    ("cifar-10-batches-bin/data_batch_5.bin", "755304fc0b379caeae8c14f0dac912fbc7d6cd469eb67a1029a08a39453a9add"),
    ("cifar-10-batches-bin/test_batch.bin", "8e2eb146ae340b09e24670f29cabc6326dba54da8789dab6768acf480273f65b"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    Cifar10,
}

impl DatasetName {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(Self::Mnist),
            "cifar10" | "cifar-10" | "cifar" => Ok(Self::Cifar10),
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }

    /// The files this dataset must provide, relative to the data root.
    pub fn pinned(self) -> Vec<PinnedFile> {
        let pins: &[(&str, &str)] = match self {
            Self::Mnist => &MNIST_PINS,
            Self::Cifar10 => &CIFAR_PINS,
        };
        pins.iter()
            .map(|(p, h)| PinnedFile::new(*p, *h))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinnedFile {
    pub rel_path: PathBuf,
    /// Lowercase hex SHA-256.
    pub sha256: String,
}

impl PinnedFile {
    pub fn new(rel_path: impl Into<PathBuf>, sha256: impl Into<String>) -> Self {
        Self {
            rel_path: rel_path.into(),
            sha256: sha256.into().to_ascii_lowercase(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchReport {
    /// Every pinned file, verified.
    pub paths: Vec<PathBuf>,
    /// The subset that had to be downloaded during this call.
    pub downloaded: Vec<PathBuf>,
}

/// Hex SHA-256 of a file, streamed.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn verify_file(path: &Path, expected: &str) -> Result<()> {
    let actual = sha256_file(path)?;
    if actual != expected.to_ascii_lowercase() {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

/// Makes the dataset available under `root`, downloading only missing files.
///
/// Files that exist are verified and never re-downloaded; a mismatch is a hard
/// error so a corrupted copy is noticed rather than silently replaced.
pub fn fetch(name: DatasetName, root: &Path) -> Result<FetchReport> {
    fetch_pinned(name, root, &name.pinned())
}

pub fn fetch_pinned(name: DatasetName, root: &Path, pins: &[PinnedFile]) -> Result<FetchReport> {
    let mut report = FetchReport::default();
    let mut missing = Vec::new();
    for pin in pins {
        let path = root.join(&pin.rel_path);
        if path.exists() {
            verify_file(&path, &pin.sha256)?;
        } else {
            missing.push(pin);
        }
        report.paths.push(path);
    }
    if missing.is_empty() {
        return Ok(report);
    }
    match name {
        DatasetName::Mnist => {
            for pin in missing {
                let path = root.join(&pin.rel_path);
                let file = path.file_name().unwrap().to_string_lossy().into_owned();
                let url = format!("{MNIST_BASE}/{file}.gz");
                let body = download(&url)?;
                let mut raw = Vec::new();
                GzDecoder::new(&body[..])
                    .read_to_end(&mut raw)
                    .map_err(|e| Error::format(&path, format!("gunzip failed: {e}")))?;
                write_verified(&path, &raw, &pin.sha256)?;
                report.downloaded.push(path);
            }
        }
        DatasetName::Cifar10 => {
            let body = download(CIFAR_URL)?;
            let mut archive = tar::Archive::new(GzDecoder::new(&body[..]));
            let entries = archive
                .entries()
                .map_err(|e| Error::format(CIFAR_URL, e.to_string()))?;
            let mut extracted = std::collections::HashMap::new();
            for entry in entries {
                let mut entry = entry.map_err(|e| Error::format(CIFAR_URL, e.to_string()))?;
                let name = entry
                    .path()
                    .map_err(|e| Error::format(CIFAR_URL, e.to_string()))?
                    .into_owned();
                if let Some(pin) = missing.iter().find(|p| p.rel_path == name) {
                    let mut buf = Vec::new();
                    entry
                        .read_to_end(&mut buf)
                        .map_err(|e| Error::format(CIFAR_URL, e.to_string()))?;
                    extracted.insert(pin.rel_path.clone(), buf);
                }
            }
            for pin in missing {
                let path = root.join(&pin.rel_path);
                let bytes = extracted.get(&pin.rel_path).ok_or_else(|| {
                    Error::format(CIFAR_URL, format!("archive lacks {}", pin.rel_path.display()))
                })?;
                write_verified(&path, bytes, &pin.sha256)?;
                report.downloaded.push(path);
            }
        }
    }
    Ok(report)
}

fn write_verified(path: &Path, bytes: &[u8], sha256: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut part = path.as_os_str().to_owned();
    part.push(".part");
    let part = PathBuf::from(part);
    let mut f = File::create(&part).map_err(|e| Error::io(&part, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&part, e))?;
    drop(f);
    if let Err(e) = verify_file(&part, sha256) {
        let _ = std::fs::remove_file(&part);
        return Err(match e {
            Error::Checksum { expected, actual, .. } => Error::Checksum {
                path: path.to_path_buf(),
                expected,
                actual,
            },
            other => other,
        });
    }
    std::fs::rename(&part, path).map_err(|e| Error::io(path, e))
}

fn download(url: &str) -> Result<Vec<u8>> {
    let mut last = None;
    for attempt in 0..ATTEMPTS {
        if attempt > 0 {
            std::thread::sleep(Duration::from_secs(1 << attempt));
        }
        log::info!("downloading {url} (attempt {})", attempt + 1);
        match get(url) {
            Ok(b) => return Ok(b),
            Err(e) => {
                log::warn!("{e}");
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn get(url: &str) -> Result<Vec<u8>> {
    let net = |msg: String| Error::Network {
        url: url.to_string(),
        msg,
    };
    let resp = ureq::get(url).call().map_err(|e| net(e.to_string()))?;
    let mut buf = Vec::new();
    resp.into_body()
        .into_reader()
        .read_to_end(&mut buf)
        .map_err(|e: io::Error| net(e.to_string()))?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hash(bytes: &[u8]) -> String {
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn empty_input_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e");
        std::fs::write(&p, b"").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn present_files_are_not_downloaded() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("mnist")).unwrap();
        let pins: Vec<_> = ["a", "b"]
            .iter()
            .map(|n| {
                let rel = format!("mnist/{n}");
                std::fs::write(dir.path().join(&rel), n.as_bytes()).unwrap();
                PinnedFile::new(rel, hash(n.as_bytes()))
            })
            .collect();
        let r = fetch_pinned(DatasetName::Mnist, dir.path(), &pins).unwrap();
        assert_eq!(r.paths.len(), 2);
        assert!(r.downloaded.is_empty());
    }

    #[test]
    fn corruption_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.bin"), b"tampered").unwrap();
        let pins = [PinnedFile::new("x.bin", hash(b"original"))];
        let err = fetch_pinned(DatasetName::Cifar10, dir.path(), &pins).unwrap_err();
        assert!(matches!(err, Error::Checksum { .. }));
        assert!(err.to_string().contains("x.bin"));
        assert!(!err.is_retriable());
    }

    #[test]
    fn pins_cover_layout() {
        assert_eq!(DatasetName::Mnist.pinned().len(), 4);
        assert_eq!(DatasetName::Cifar10.pinned().len(), 6);
        assert_eq!(DatasetName::parse("CIFAR-10").unwrap(), DatasetName::Cifar10);
        assert!(DatasetName::parse("svhn").is_err());
    }
}
