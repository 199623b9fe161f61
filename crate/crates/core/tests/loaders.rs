use proptest::prelude::*;
use rramnet::data::{load_cifar10_bin, load_mnist_idx};

fn idx_pair(images: &[u8], labels: &[u8]) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let ip = dir.path().join("images");
    let lp = dir.path().join("labels");
    std::fs::write(&ip, images).unwrap();
    std::fs::write(&lp, labels).unwrap();
    (dir, ip, lp)
}

fn header(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_be_bytes()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arbitrary_idx_bytes_never_panic(images in proptest::collection::vec(any::<u8>(), 0..64),
                                       labels in proptest::collection::vec(any::<u8>(), 0..16)) {
        let (_d, ip, lp) = idx_pair(&images, &labels);
        let _ = load_mnist_idx(&ip, &lp);
    }

    #[test]
    fn header_claims_beyond_payload_are_rejected(n in 1u32..1_000_000, rows in 1u32..64, cols in 1u32..64) {
        let mut images = header(&[2051, n, rows, cols]);
        // One pixel short of the claimed payload.
        images.extend(std::iter::repeat(0u8).take((n * rows * cols).min(4096) as usize - 1));
        let mut labels = header(&[2049, n]);
        labels.extend(std::iter::repeat(0u8).take(n.min(4096) as usize));
        let (_d, ip, lp) = idx_pair(&images, &labels);
        prop_assert!(load_mnist_idx(&ip, &lp).is_err());
    }

    #[test]
    fn arbitrary_cifar_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..8000)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("batch.bin");
        std::fs::write(&p, &bytes).unwrap();
        let r = load_cifar10_bin(&[&p]);
        if bytes.len() % 3073 != 0 || bytes.is_empty() {
            prop_assert!(r.is_err());
        }
    }
}

#[test]
fn well_formed_pair_loads() {
    let mut images = header(&[2051, 2, 2, 2]);
    images.extend([0, 255, 128, 64, 1, 2, 3, 4]);
    let mut labels = header(&[2049, 2]);
    labels.extend([3, 9]);
    let (_d, ip, lp) = idx_pair(&images, &labels);
    let d = load_mnist_idx(&ip, &lp).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.labels(), &[3, 9]);
    assert_eq!(d.image(0)[1], 1.0);
}
