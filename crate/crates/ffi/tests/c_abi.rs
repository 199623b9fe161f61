use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rramnet::{Matrix, MlpModel, TransferKind};
use rramnet_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe { rram_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn nonlinearity_round_trip() {
    let mut k = 0.0;
    let mut b = 0.0;
    unsafe {
        assert_eq!(rram_k_of_b(4.0, &mut k), RramStatus::Ok);
        assert_eq!(rram_b_of_k(k, &mut b), RramStatus::Ok);
    }
    assert!((k - 7.524391382167263).abs() < 1e-12);
    assert!((b - 4.0).abs() < 1e-9);
    assert_eq!(unsafe { rram_b_of_k(1.0, &mut b) }, RramStatus::Domain);
    assert!(last_error().contains("domain"));
}

#[test]
fn device_current_and_partials() {
    let mut dev = ptr::null_mut();
    unsafe {
        assert_eq!(rram_sinh_device_new(4.0, (-14f64).exp(), (-8f64).exp(), 1.0, &mut dev), RramStatus::Ok);
        let g = (-10f64).exp();
        let (mut i, mut dg, mut dv) = (0.0, 0.0, 0.0);
        assert_eq!(rram_device_current(dev, g, 0.5, &mut i), RramStatus::Ok);
        assert!((i - g * 2f64.sinh()).abs() < 1e-20);
        assert_eq!(rram_device_partials(dev, g, 0.5, &mut dg, &mut dv), RramStatus::Ok);
        assert!((dg - 2f64.sinh()).abs() < 1e-12);
        assert_eq!(rram_device_current(dev, 1.0, 0.5, &mut i), RramStatus::Domain);
        assert_eq!(rram_device_current(ptr::null(), g, 0.5, &mut i), RramStatus::NullPointer);
        rram_device_free(dev);
        rram_device_free(ptr::null_mut());
    }
}

#[test]
fn crossbar_readout_and_unmap() {
    let w = [0.5, -0.25, 1.0, 0.0, -1.0, 0.75];
    let x = [0.2, 0.9];
    let mut dev = ptr::null_mut();
    let mut xb = ptr::null_mut();
    let mut currents = [0.0; 3];
    let mut s = [0.0; 3];
    let mut n = 0usize;
    unsafe {
        rram_sinh_device_new(4.0, (-14f64).exp(), (-8f64).exp(), 1.0, &mut dev);
        assert_eq!(rram_crossbar_new(w.as_ptr(), 2, 3, dev, &mut xb), RramStatus::Ok);
        assert_eq!(
            rram_crossbar_readout(xb, x.as_ptr(), 2, currents.as_mut_ptr(), 3, &mut n),
            RramStatus::Ok
        );
        assert_eq!(n, 3);
        assert_eq!(rram_crossbar_unmap(xb, currents.as_ptr(), 3, s.as_mut_ptr(), 3, &mut n), RramStatus::Ok);
        assert_eq!(
            rram_crossbar_readout(xb, x.as_ptr(), 2, currents.as_mut_ptr(), 2, &mut n),
            RramStatus::BufferTooSmall
        );
        assert_eq!(n, 3);
        assert_eq!(
            rram_crossbar_readout(xb, x.as_ptr(), 1, currents.as_mut_ptr(), 3, &mut n),
            RramStatus::Shape
        );
        rram_crossbar_free(xb);
        rram_device_free(dev);
    }
    for j in 0..3 {
        let expect: f64 = (0..2).map(|i| w[i * 3 + j] * (4.0 * x[i]).sinh()).sum();
        assert!((s[j] - expect).abs() <= 1e-9 * expect.abs().max(1.0), "{} vs {expect}", s[j]);
    }
}

#[test]
fn model_load_and_forward() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let w0 = Matrix::from_fn(3, 4, |i, j| 0.1 * (i as f64 - j as f64));
    let w1 = Matrix::from_fn(4, 2, |i, j| 0.2 * (i + j) as f64 - 0.3);
    let model = MlpModel::new(vec![3, 4, 2], vec![w0, w1], TransferKind::LinearWeightedSum).unwrap();
    model.save(&path).unwrap();
    let x = [0.1, 0.5, 0.9, 1.0, 0.0, 0.3];
    let expect = model.logits(&Matrix::from_vec(2, 3, x.to_vec()).unwrap()).unwrap();

    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    let mut dims = [0usize; 3];
    let mut n = 0;
    let mut logits = [0.0; 4];
    unsafe {
        assert_eq!(rram_model_load(c.as_ptr(), &mut m), RramStatus::Ok);
        assert_eq!(rram_model_dims(m, dims.as_mut_ptr(), 3, &mut n), RramStatus::Ok);
        assert_eq!(dims, [3, 4, 2]);
        assert_eq!(rram_model_forward(m, x.as_ptr(), 2, 3, logits.as_mut_ptr(), 4, &mut n), RramStatus::Ok);
        assert_eq!(rram_model_forward(m, x.as_ptr(), 3, 2, logits.as_mut_ptr(), 4, &mut n), RramStatus::Shape);
        rram_model_free(m);
        let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
        assert_eq!(rram_model_load(missing.as_ptr(), &mut m), RramStatus::Io);
    }
    assert_eq!(&logits[..], expect.as_slice());
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rramnet.h");
    assert!(header.exists());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"rramnet.h\"\nint main(void) { double k; return rram_k_of_b(4.0, &k) == RRAM_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
