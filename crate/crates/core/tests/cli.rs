use std::path::Path;
use std::process::{Command, Output};

fn rramnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rramnet"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Ten tiny 28×28 images per split, one per class.
fn fake_mnist(root: &Path) {
    let dir = root.join("mnist");
    std::fs::create_dir_all(&dir).unwrap();
    let idx = |magic: u32, dims: &[u32], payload: &[u8]| {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v.extend_from_slice(payload);
        v
    };
    let pixels: Vec<u8> = (0..10 * 784).map(|i| ((i / 784) * 25 + i % 7) as u8).collect();
    let labels: Vec<u8> = (0..10).collect();
    for split in ["train", "t10k"] {
        std::fs::write(dir.join(format!("{split}-images-idx3-ubyte")), idx(2051, &[10, 28, 28], &pixels)).unwrap();
        std::fs::write(dir.join(format!("{split}-labels-idx1-ubyte")), idx(2049, &[10], &labels)).unwrap();
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rramnet(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(rramnet(&["train", "--preset", "vgg"], dir.path()).status.code(), Some(1));
    assert_eq!(rramnet(&["train", "--k", "1.5", "--transfer", "sinh"], dir.path()).status.code(), Some(1));
    assert_eq!(rramnet(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = rramnet(&["train", "--data-dir", "nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rramnet(&["sweep-naive", "--checkpoint", "missing.ckpt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ckpt"));
}

#[test]
fn gradcheck_passes_for_every_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let out = rramnet(&["gradcheck"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    for t in ["linear", "sinh", "complex"] {
        assert!(text.contains(&format!("{t}: pass")), "{text}");
    }
}

#[test]
fn train_sweep_hist_round() {
    let dir = tempfile::tempdir().unwrap();
    fake_mnist(dir.path());
    let common = ["--data-dir", ".", "--dims", "784-16-10", "--epochs", "2", "--batch-size", "5"];
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = extra.to_vec();
        args.extend_from_slice(&common);
        rramnet(&args, dir.path())
    };

    let out = run(&["train", "--transfer", "linear", "--out", "lin"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("lin/history.csv")).unwrap();
    assert!(history.starts_with("# seed=1\n"));
    assert_eq!(history.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let out = run(&["sweep-naive", "--checkpoint", "lin/model.ckpt", "--k-list", "2,7.5", "--out", "lin"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(dir.path().join("lin/sweep_naive.csv")).unwrap();
    run(&["sweep-naive", "--checkpoint", "lin/model.ckpt", "--k-list", "2,7.5", "--out", "lin"]);
    assert_eq!(first, std::fs::read(dir.path().join("lin/sweep_naive.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("k,b,accuracy,normalized_loss"));

    for source in ["a", "b"] {
        let out = run(&["hist", "--checkpoint", "lin/model.ckpt", "--layer", "1", "--source", source, "--count", "20", "--out", "lin"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let hist = std::fs::read_to_string(dir.path().join("lin/hist_synth-a_layer1.csv")).unwrap();
    assert!(hist.contains("series,bin,lo,hi,count"));
    let out = run(&["hist", "--checkpoint", "lin/model.ckpt", "--layer", "5", "--out", "lin"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["sweep-proposed", "--k-list", "3,7.5", "--out", "prop"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("prop/sweep_proposed.csv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(dir.path().join("prop/proposed_k7.5.ckpt").exists());

    // A sinh checkpoint is not a valid naive-sweep input.
    let out = run(&["sweep-naive", "--checkpoint", "prop/proposed_k3.ckpt", "--out", "prop"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    fake_mnist(dir.path());
    std::fs::write(
        dir.path().join("run.conf"),
        "[experiment]\ndims = 784-8-10\nepochs = 1\ntransfer = linear\nseed = 4\nout = from-file\n",
    )
    .unwrap();
    let out = rramnet(&["train", "--config", "run.conf", "--data-dir", ".", "--seed", "9"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("from-file/history.csv")).unwrap();
    assert!(history.starts_with("# seed=9\n"));
    assert!(history.contains("# dims=784-8-10\n"));
}
