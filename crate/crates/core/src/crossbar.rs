//! Crossbar arrays: signed weights split over two adjacent columns, mapped
//! affinely onto device states, read out as differential column currents.
//!
//! Matrices are oriented like the weights they hold: rows are input lines,
//! columns are outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::device::{DeviceModel, SinhDevice};
use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};
use crate::nn::{clip_to, MlpModel, TransferKind};

/// `state = intercept + slope · weight`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub slope: f64,
    pub intercept: f64,
}

impl AffineMap {
    pub fn apply(&self, w: f64) -> f64 {
        self.intercept + self.slope * w
    }

    pub fn invert(&self, g: f64) -> f64 {
        (g - self.intercept) / self.slope
    }
}

/// `(w⁺, w⁻)` with `w⁺ = max(w, 0)` and `w⁻ = max(−w, 0)`.
pub fn decompose_weights(w: &Matrix) -> Result<(Matrix, Matrix)> {
    if let Some(&v) = w.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("w", v, "finite"));
    }
    // `max` keeps −0.0 out of the negative column.
    Ok((w.map(|v| v.max(0.0)), w.map(|v| (-v).max(0.0))))
}

/// A weight matrix stored as positive and negative device-state columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarPair {
    g_plus: Matrix,
    g_minus: Matrix,
    map: AffineMap,
    device: DeviceModel,
}

/// Highest state a mapping may target. The complex device's range is open, so
/// its upper end is pulled in by the same margin the trainer uses.
fn mapping_range(device: &DeviceModel) -> (f64, f64) {
    let (lo, hi) = device.state_range();
    match device {
        DeviceModel::Sinh(_) => (lo, hi),
        DeviceModel::Complex(_) => (lo, hi - crate::nn::COMPLEX_STATE_MARGIN),
    }
}

impl CrossbarPair {
    /// Maps nonnegative sub-weights with one global scale: the largest entry of
    /// either matrix lands on the top of the state range, zero on the bottom.
    pub fn map_subweights(w_plus: &Matrix, w_minus: &Matrix, device: DeviceModel) -> Result<Self> {
        if w_plus.shape() != w_minus.shape() {
            return Err(Error::Shape(format!(
                "sub-weights {:?} vs {:?}",
                w_plus.shape(),
                w_minus.shape()
            )));
        }
        for v in w_plus.as_slice().iter().chain(w_minus.as_slice()) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::domain("sub-weight", *v, "finite and >= 0"));
            }
        }
        let max = w_plus.max_abs().max(w_minus.max_abs());
        if max <= 0.0 {
            return Err(Error::DegenerateMap("all weights are zero".into()));
        }
        let (lo, hi) = mapping_range(&device);
        let map = AffineMap {
            slope: (hi - lo) / max,
            intercept: lo,
        };
        Ok(Self {
            g_plus: w_plus.map(|w| map.apply(w).min(hi)),
            g_minus: w_minus.map(|w| map.apply(w).min(hi)),
            map,
            device,
        })
    }

    pub fn from_weights(w: &Matrix, device: DeviceModel) -> Result<Self> {
        let (p, m) = decompose_weights(w)?;
        Self::map_subweights(&p, &m, device)
    }

    /// Builds a pair from explicit states, checking them against the device.
    pub fn from_states(
        g_plus: Matrix,
        g_minus: Matrix,
        map: AffineMap,
        device: DeviceModel,
    ) -> Result<Self> {
        if g_plus.shape() != g_minus.shape() {
            return Err(Error::Shape("state matrices differ in shape".into()));
        }
        if !(map.slope > 0.0 && map.slope.is_finite()) {
            return Err(Error::DegenerateMap(format!("slope {}", map.slope)));
        }
        let (lo, hi) = device.state_range();
        for &g in g_plus.as_slice().iter().chain(g_minus.as_slice()) {
            if !(lo..=hi).contains(&g) {
                return Err(Error::domain("state", g, format!("[{lo:e}, {hi:e}]")));
            }
        }
        Ok(Self {
            g_plus,
            g_minus,
            map,
            device,
        })
    }

    pub fn g_plus(&self) -> &Matrix {
        &self.g_plus
    }

    pub fn g_minus(&self) -> &Matrix {
        &self.g_minus
    }

    pub fn map(&self) -> AffineMap {
        self.map
    }

    pub fn device(&self) -> &DeviceModel {
        &self.device
    }

    pub fn inputs(&self) -> usize {
        self.g_plus.rows()
    }

    pub fn outputs(&self) -> usize {
        self.g_plus.cols()
    }

    fn check_voltages(&self, x: &[f64], sample: Option<usize>) -> Result<()> {
        let vmax = self.device.v_read_max();
        if let Some((i, &v)) = x.iter().enumerate().find(|(_, v)| !(v.abs() <= vmax)) {
            let at = match sample {
                Some(n) => format!("sample {n}, row {i}"),
                None => format!("row {i}"),
            };
            return Err(Error::Domain {
                what: "x",
                value: v,
                bound: format!("|x| <= {vmax} at {at}"),
            });
        }
        Ok(())
    }

    /// `Σ_i I(g⁺_ij, x_i) − Σ_i I(g⁻_ij, x_i)` for every output `j`.
    pub fn readout(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "{} voltages for {} rows",
                x.len(),
                self.inputs()
            )));
        }
        self.check_voltages(x, None)?;
        let mut pos = vec![0.0; self.outputs()];
        let mut neg = vec![0.0; self.outputs()];
        for (i, &v) in x.iter().enumerate() {
            for j in 0..self.outputs() {
                pos[j] += self.device.current_unchecked(self.g_plus.get(i, j), v);
                neg[j] += self.device.current_unchecked(self.g_minus.get(i, j), v);
            }
        }
        Ok(pos.iter().zip(&neg).map(|(p, n)| p - n).collect())
    }

    /// Batch readout (`rows = samples`).
    pub fn readout_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.inputs() {
            return Err(Error::Shape(format!(
                "{} voltages for {} rows",
                x.cols(),
                self.inputs()
            )));
        }
        for n in 0..x.rows() {
            self.check_voltages(x.row(n), Some(n))?;
        }
        match &self.device {
            DeviceModel::Sinh(d) => {
                // The sinh law factors as g · sinh(bV), so each column sum is a
                // product with the element-wise sinh of the inputs.
                let s = x.map(|v| (d.b * v).sinh());
                let mut out = Matrix::zeros(x.rows(), self.outputs());
                gemm(&s, false, &self.g_plus, false, &mut out, 1.0, 0.0);
                gemm(&s, false, &self.g_minus, false, &mut out, -1.0, 1.0);
                Ok(out)
            }
            DeviceModel::Complex(_) => {
                let mut out = Matrix::zeros(x.rows(), self.outputs());
                for n in 0..x.rows() {
                    let v = self.readout(x.row(n))?;
                    out.row_mut(n).copy_from_slice(&v);
                }
                Ok(out)
            }
        }
    }

    /// Recovers transfer values from currents by undoing the mapping's scale.
    /// Only valid for devices whose current is linear in state.
    pub fn unmap_output(&self, currents: &[f64]) -> Result<Vec<f64>> {
        self.require_linear_in_state()?;
        Ok(currents.iter().map(|c| c / self.map.slope).collect())
    }

    pub fn unmap_batch(&self, currents: &Matrix) -> Result<Matrix> {
        self.require_linear_in_state()?;
        Ok(currents.map(|c| c / self.map.slope))
    }

    fn require_linear_in_state(&self) -> Result<()> {
        match self.device {
            DeviceModel::Sinh(_) => Ok(()),
            DeviceModel::Complex(_) => Err(Error::Unsupported(
                "complex-device currents are not linear in state and cannot be unmapped".into(),
            )),
        }
    }

    /// Writes `<stem>_plus.csv` and `<stem>_minus.csv` into `dir`.
    pub fn dump_csv(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let write = |m: &Matrix, suffix: &str| -> Result<PathBuf> {
            let path = dir.join(format!("{stem}_{suffix}.csv"));
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(f);
            let io = |e| Error::io(&path, e);
            writeln!(
                w,
                "# slope={:e} intercept={:e} device={}",
                self.map.slope,
                self.map.intercept,
                self.device.kind()
            )
            .map_err(io)?;
            for i in 0..m.rows() {
                let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{}", line.join(",")).map_err(io)?;
            }
            w.flush().map_err(io)?;
            Ok(path)
        };
        Ok((write(&self.g_plus, "plus")?, write(&self.g_minus, "minus")?))
    }
}

/// Single-array affine map sending the smallest weight to `g_min` and the
/// largest to `g_max`.
pub fn map_naive_linear(w: &Matrix, g_min: f64, g_max: f64) -> Result<(Matrix, AffineMap)> {
    if !(g_min < g_max) {
        return Err(Error::domain("g_min", g_min, format!("< g_max = {g_max}")));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in w.as_slice() {
        if !v.is_finite() {
            return Err(Error::domain("w", v, "finite"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return Err(Error::DegenerateMap(format!("weights span [{lo}, {hi}]")));
    }
    let slope = (g_max - g_min) / (hi - lo);
    let map = AffineMap {
        slope,
        intercept: g_min - lo * slope,
    };
    Ok((w.map(|v| (g_min + (v - lo) * slope).clamp(g_min, g_max)), map))
}

/// `s = x · W`
pub fn ideal_vmm(x: &[f64], w: &Matrix) -> Result<Vec<f64>> {
    if x.len() != w.rows() {
        return Err(Error::Shape(format!(
            "{} inputs for {} weight rows",
            x.len(),
            w.rows()
        )));
    }
    let mut out = vec![0.0; w.cols()];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &wij) in out.iter_mut().zip(w.row(i)) {
            *o += xi * wij;
        }
    }
    Ok(out)
}

/// How a weighted-sum layer is placed on the array for naive inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NaiveScheme {
    /// Signed weights split over a column pair; the pair's currents are
    /// subtracted, so the shared intercept cancels.
    #[default]
    Differential,
    /// One cell per weight, `w_min → g_min` and `w_max → g_max`. The
    /// intercept's contribution is removed digitally as `g₀ · Σ x`, which is
    /// only exact for an ohmic device.
    Offset,
}

impl NaiveScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "differential" => Ok(Self::Differential),
            "offset" => Ok(Self::Offset),
            _ => Err(Error::Config(format!("unknown naive scheme {s:?} (differential|offset)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Differential => "differential",
            Self::Offset => "offset",
        }
    }
}

/// One layer of naive hardware inference: the trained weighted-sum weights go
/// onto the crossbar unchanged and the currents are read back as if each cell
/// were an ohmic conductance `I(v_read_max) / v_read_max`.
pub fn naive_layer(w: &Matrix, device: &SinhDevice, x: &Matrix) -> Result<Matrix> {
    naive_layer_with(w, device, x, NaiveScheme::Differential)
}

pub fn naive_layer_with(w: &Matrix, device: &SinhDevice, x: &Matrix, scheme: NaiveScheme) -> Result<Matrix> {
    match scheme {
        NaiveScheme::Differential => {
            let pair = CrossbarPair::from_weights(w, DeviceModel::Sinh(*device))?;
            naive_readout(&pair, device, x)
        }
        NaiveScheme::Offset => {
            if x.cols() != w.rows() {
                return Err(Error::Shape(format!("{} inputs for {} weight rows", x.cols(), w.rows())));
            }
            let (g, map) = map_naive_linear(w, device.g_min, device.g_max)?;
            let vmax = device.v_read_max;
            let full = (device.b * vmax).sinh();
            // Currents in units of the ohmic conductance at v_read_max.
            let v = x.map(|xi| vmax * (device.b * xi).sinh() / full);
            let mut s = v.matmul(&g)?;
            for n in 0..s.rows() {
                let offset = map.intercept * x.row(n).iter().sum::<f64>();
                for c in s.row_mut(n) {
                    *c = (*c - offset) / map.slope;
                }
            }
            Ok(s)
        }
    }
}

fn naive_readout(pair: &CrossbarPair, device: &SinhDevice, x: &Matrix) -> Result<Matrix> {
    let vmax = device.v_read_max;
    let conductance = pair.map.slope * (device.b * vmax).sinh() / vmax;
    Ok(pair.readout_batch(x)?.map(|c| c / conductance))
}

/// Runs a weighted-sum-trained model through a nonlinear crossbar.
///
/// Each layer is decomposed and mapped with its own scale. Activations leaving
/// `[0, v_read_max]` are clipped with a warning.
pub fn simulate_naive_inference(model: &MlpModel, device: &SinhDevice, x: &Matrix) -> Result<Matrix> {
    simulate_naive_inference_with(model, device, x, NaiveScheme::Differential)
}

pub fn simulate_naive_inference_with(
    model: &MlpModel,
    device: &SinhDevice,
    x: &Matrix,
    scheme: NaiveScheme,
) -> Result<Matrix> {
    if !matches!(model.transfer(), TransferKind::LinearWeightedSum) {
        return Err(Error::Unsupported(format!(
            "naive inference expects a weighted-sum model, got {}",
            model.transfer().name()
        )));
    }
    if x.cols() != model.dims()[0] {
        return Err(Error::Shape(format!(
            "input width {} but model expects {}",
            x.cols(),
            model.dims()[0]
        )));
    }
    let vmax = device.v_read_max;
    let clip_input = |m: &Matrix| -> Matrix {
        if m.as_slice().iter().any(|v| !(0.0..=vmax).contains(v)) {
            log::warn!("clipping activations into [0, {vmax}] before readout");
            m.map(|v| clip_to(v, vmax))
        } else {
            m.clone()
        }
    };
    let n = model.layer_count();
    let mut y = clip_input(x);
    for (k, w) in model.weights().iter().enumerate() {
        let s = naive_layer_with(w, device, &y, scheme)?;
        if k + 1 == n {
            return Ok(s);
        }
        y = s.map(|v| clip_to(v, vmax));
    }
    unreachable!("model has at least one layer")
}

/// Evaluates a device-trained sinh model through the crossbar path
/// (decompose, map, read out, unmap) instead of the analytic transfer.
pub fn simulate_crossbar_inference(model: &MlpModel, x: &Matrix) -> Result<Matrix> {
    let TransferKind::SinhDevice { b } = *model.transfer() else {
        return Err(Error::Unsupported(format!(
            "crossbar inference needs a sinh model, got {}",
            model.transfer().name()
        )));
    };
    let fitted = SinhDevice::fitted();
    let device = SinhDevice::new(b, fitted.g_min, fitted.g_max, model.v_read_max())?;
    let n = model.layer_count();
    let mut y = x.clone();
    for (k, w) in model.weights().iter().enumerate() {
        let pair = CrossbarPair::from_weights(w, DeviceModel::Sinh(device))?;
        let s = pair.unmap_batch(&pair.readout_batch(&y)?)?;
        if k + 1 == n {
            return Ok(s);
        }
        y = s.map(|v| clip_to(v, model.v_read_max()));
    }
    unreachable!("model has at least one layer")
}
