//! C ABI for `rramnet`.
//!
//! Objects are opaque heap handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`RramStatus`]; on failure a message is kept per thread and can be copied
//! out with [`rram_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rramnet::crossbar::CrossbarPair;
use rramnet::{ComplexDevice, DeviceModel, Error, Matrix, MlpModel, NonlinearityK, SinhDevice};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RramStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Shape = 3,
    Unsupported = 4,
    Io = 5,
    Format = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

/// A device I-V law.
pub struct RramDevice(DeviceModel);

/// A trained multilayer perceptron.
pub struct RramModel(MlpModel);

/// A differential pair of crossbar arrays holding one weight matrix.
pub struct RramCrossbar(CrossbarPair);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RramStatus {
    match e {
        Error::Domain { .. } | Error::Range(_) | Error::DegenerateMap(_) => RramStatus::Domain,
        Error::Shape(_) => RramStatus::Shape,
        Error::Unsupported(_) => RramStatus::Unsupported,
        Error::Io { .. } => RramStatus::Io,
        Error::Format { .. } | Error::Checksum { .. } => RramStatus::Format,
        Error::Numerical(_) => RramStatus::Numerical,
        _ => RramStatus::Other,
    }
}

enum Fail {
    Status(RramStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(RramStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RramStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RramStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            RramStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(src: &[f64], out: *mut f64, cap: usize, written: *mut usize) -> Result<(), Fail> {
    if let Some(w) = written.as_mut() {
        *w = src.len();
    }
    if src.len() > cap {
        return Err(Fail::Status(
            RramStatus::BufferTooSmall,
            format!("need {} values, buffer holds {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `cap` bytes. Returns the full message length excluding NUL.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn rram_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Half-bias nonlinearity `k = 2·cosh(b/2)`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_k_of_b(b: f64, out: *mut f64) -> RramStatus {
    guard(|| {
        *out_ref(out, "out")? = rramnet::k_of_b(b)?.value();
        Ok(())
    })
}

/// Inverse of [`rram_k_of_b`] for `k ≥ 2`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_b_of_k(k: f64, out: *mut f64) -> RramStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = rramnet::b_of_k(NonlinearityK::new(k)?, 1e-13)?;
        Ok(())
    })
}

/// Sinh device `I = g·sinh(b·V)` with conductances in `[g_min, g_max]`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_sinh_device_new(
    b: f64,
    g_min: f64,
    g_max: f64,
    v_read_max: f64,
    out: *mut *mut RramDevice,
) -> RramStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let d = SinhDevice::new(b, g_min, g_max, v_read_max)?;
        *out = Box::into_raw(Box::new(RramDevice(DeviceModel::Sinh(d))));
        Ok(())
    })
}

/// The fitted complex device with default constants.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_complex_device_new(out: *mut *mut RramDevice) -> RramStatus {
    guard(|| {
        *out_ref(out, "out")? = Box::into_raw(Box::new(RramDevice(DeviceModel::Complex(ComplexDevice::default()))));
        Ok(())
    })
}

/// # Safety
/// `dev` must be null or a handle from a device constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn rram_device_free(dev: *mut RramDevice) {
    if !dev.is_null() {
        drop(Box::from_raw(dev));
    }
}

/// Cell current at `state` (conductance or complex-device state) and
/// read voltage `v`.
///
/// # Safety
/// `dev` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_device_current(
    dev: *const RramDevice,
    state: f64,
    v: f64,
    out: *mut f64,
) -> RramStatus {
    guard(|| {
        let dev = dev.as_ref().ok_or_else(|| null("device"))?;
        *out_ref(out, "out")? = dev.0.current(state, v)?;
        Ok(())
    })
}

/// `∂I/∂state` and `∂I/∂v`.
///
/// # Safety
/// `dev` must be a live handle; the outputs must be valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn rram_device_partials(
    dev: *const RramDevice,
    state: f64,
    v: f64,
    d_state: *mut f64,
    d_v: *mut f64,
) -> RramStatus {
    guard(|| {
        let dev = dev.as_ref().ok_or_else(|| null("device"))?;
        let (ds, dv) = dev.0.partials(state, v)?;
        *out_ref(d_state, "d_state")? = ds;
        *out_ref(d_v, "d_v")? = dv;
        Ok(())
    })
}

/// Loads a checkpoint written by the `rramnet` tool.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_model_load(path: *const c_char, out: *mut *mut RramModel) -> RramStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail::Status(RramStatus::Other, "path is not UTF-8".into()))?;
        *out = Box::into_raw(Box::new(RramModel(MlpModel::load(Path::new(path))?)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`rram_model_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rram_model_free(model: *mut RramModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Layer sizes, input first. `*len` receives the count even when `cap` is
/// too small.
///
/// # Safety
/// `model` must be a live handle, `dims` valid for `cap` writes, `len` null
/// or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_model_dims(
    model: *const RramModel,
    dims: *mut usize,
    cap: usize,
    len: *mut usize,
) -> RramStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let d = m.0.dims();
        if let Some(l) = len.as_mut() {
            *l = d.len();
        }
        if d.len() > cap {
            return Err(Fail::Status(RramStatus::BufferTooSmall, format!("need {} entries", d.len())));
        }
        if dims.is_null() {
            return Err(null("dims"));
        }
        ptr::copy_nonoverlapping(d.as_ptr(), dims, d.len());
        Ok(())
    })
}

/// Logits for `rows` row-major inputs of width `cols`.
///
/// # Safety
/// `x` must hold `rows·cols` values; `logits` must be valid for `cap`
/// writes; `written` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_model_forward(
    model: *const RramModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    logits: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RramStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let len = rows.checked_mul(cols).ok_or_else(|| Fail::Lib(Error::Shape("rows·cols overflows".into())))?;
        let x = Matrix::from_vec(rows, cols, slice(x, len, "x")?.to_vec())?;
        let out = m.0.logits(&x)?;
        write_out(out.as_slice(), logits, cap, written)
    })
}

/// Maps a row-major `rows × cols` weight matrix onto a differential crossbar
/// pair of the given device.
///
/// # Safety
/// `dev` must be a live handle, `w` hold `rows·cols` values and `out` be
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_crossbar_new(
    w: *const f64,
    rows: usize,
    cols: usize,
    dev: *const RramDevice,
    out: *mut *mut RramCrossbar,
) -> RramStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let dev = dev.as_ref().ok_or_else(|| null("device"))?;
        let len = rows.checked_mul(cols).ok_or_else(|| Fail::Lib(Error::Shape("rows·cols overflows".into())))?;
        let w = Matrix::from_vec(rows, cols, slice(w, len, "w")?.to_vec())?;
        *out = Box::into_raw(Box::new(RramCrossbar(CrossbarPair::from_weights(&w, dev.0)?)));
        Ok(())
    })
}

/// # Safety
/// `xb` must be null or a handle from [`rram_crossbar_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rram_crossbar_free(xb: *mut RramCrossbar) {
    if !xb.is_null() {
        drop(Box::from_raw(xb));
    }
}

/// Differential column currents for row voltages `v` (length = rows).
///
/// # Safety
/// `xb` must be a live handle, `v` hold `len` values, `out` be valid for
/// `cap` writes and `written` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rram_crossbar_readout(
    xb: *const RramCrossbar,
    v: *const f64,
    len: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RramStatus {
    guard(|| {
        let xb = xb.as_ref().ok_or_else(|| null("crossbar"))?;
        let currents = xb.0.readout(slice(v, len, "v")?)?;
        write_out(&currents, out, cap, written)
    })
}

/// Converts differential currents back to weighted sums (sinh devices).
///
/// # Safety
/// As for [`rram_crossbar_readout`], with `currents` holding `len` values.
#[no_mangle]
pub unsafe extern "C" fn rram_crossbar_unmap(
    xb: *const RramCrossbar,
    currents: *const f64,
    len: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RramStatus {
    guard(|| {
        let xb = xb.as_ref().ok_or_else(|| null("crossbar"))?;
        let s = xb.0.unmap_output(slice(currents, len, "currents")?)?;
        write_out(&s, out, cap, written)
    })
}
