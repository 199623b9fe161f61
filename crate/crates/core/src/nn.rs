//! Multilayer perceptrons whose transfer function is either the ordinary
//! weighted sum or a device I-V law.
//!
//! Hidden layers apply a clipped ReLU bounded by the maximum read voltage, so
//! every hidden activation is a valid input voltage for the next crossbar.
//! The output layer emits raw logits; softmax lives in the loss.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::Dataset;
use crate::device::ComplexDevice;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Distance kept from the complex device's state bound when projecting weights.
pub const COMPLEX_STATE_MARGIN: f64 = 1e-4;

const CHECKPOINT_MAGIC: &[u8; 8] = b"RRAMNET\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Signed-weight transfer built on the complex device law:
/// `s_j = gain · Σ_i sgn(w_ij) · (I(|w_ij|, x_i) − I(0, x_i))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexTransfer {
    pub device: ComplexDevice,
    pub gain: f64,
    /// Weights are projected onto `[-(w_max - margin), w_max - margin]`.
    pub margin: f64,
}

impl ComplexTransfer {
    /// Gain normalizes currents by the cell's output at half the state range
    /// under full read voltage.
    pub fn new(device: ComplexDevice) -> Result<Self> {
        device.validate()?;
        let w_ref = 0.5 * device.w_max;
        let gain = 1.0 / device.current_unchecked(w_ref, device.v_read_max);
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::Numerical(format!("complex transfer gain {gain}")));
        }
        Ok(Self {
            device,
            gain,
            margin: COMPLEX_STATE_MARGIN,
        })
    }

    pub fn weight_bound(&self) -> f64 {
        self.device.w_max - self.margin
    }

    /// One cell pair's contribution to a pre-activation.
    #[inline]
    pub fn cell(&self, w: f64, x: f64) -> f64 {
        let d = &self.device;
        let mag = d.current_unchecked(w.abs(), x) - d.current_unchecked(0.0, x);
        if w >= 0.0 {
            self.gain * mag
        } else {
            -self.gain * mag
        }
    }

    /// `(∂cell/∂w, ∂cell/∂x)`; `w = 0` takes the `w ≥ 0` branch.
    #[inline]
    pub fn cell_partials(&self, w: f64, x: f64) -> (f64, f64) {
        let d = &self.device;
        let (dw, dv) = d.partials_unchecked(w.abs(), x);
        let (_, dv0) = d.partials_unchecked(0.0, x);
        let sign = if w >= 0.0 { 1.0 } else { -1.0 };
        (self.gain * dw, self.gain * sign * (dv - dv0))
    }

    /// `|∂cell/∂w|` at `w = 0` under full read voltage.
    pub fn sensitivity(&self) -> f64 {
        self.cell_partials(0.0, self.device.v_read_max).0.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferKind {
    /// `s = x · W`
    LinearWeightedSum,
    /// `s = sinh(b·x) · W`
    SinhDevice { b: f64 },
    ComplexDevice(ComplexTransfer),
}

impl TransferKind {
    pub fn sinh(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::domain("b", b, "b > 0"));
        }
        Ok(TransferKind::SinhDevice { b })
    }

    pub fn complex_default() -> Self {
        TransferKind::ComplexDevice(
            ComplexTransfer::new(ComplexDevice::default()).expect("default constants are valid"),
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransferKind::LinearWeightedSum => "linear",
            TransferKind::SinhDevice { .. } => "sinh",
            TransferKind::ComplexDevice(_) => "complex",
        }
    }

    /// Applies the transfer to a batch (`rows = samples`).
    pub fn apply(&self, x: &Matrix, w: &Matrix) -> Result<Matrix> {
        if x.cols() != w.rows() {
            return Err(Error::Shape(format!(
                "input width {} does not match weight rows {}",
                x.cols(),
                w.rows()
            )));
        }
        match self {
            TransferKind::LinearWeightedSum => x.matmul(w),
            TransferKind::SinhDevice { b } => x.map(|v| (b * v).sinh()).matmul(w),
            TransferKind::ComplexDevice(ct) => {
                let mut out = Matrix::zeros(x.rows(), w.cols());
                for n in 0..x.rows() {
                    let xs = x.row(n);
                    let row = out.row_mut(n);
                    for (i, &xi) in xs.iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        for (j, acc) in row.iter_mut().enumerate() {
                            *acc += ct.cell(w.get(i, j), xi);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Validates and applies the transfer to a single input vector.
pub fn transfer(kind: &TransferKind, x: &[f64], w: &Matrix, v_read_max: f64) -> Result<Vec<f64>> {
    check_voltages(x, v_read_max)?;
    let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
    Ok(kind.apply(&xm, w)?.into_vec())
}

fn check_voltages(x: &[f64], v_read_max: f64) -> Result<()> {
    if let Some((i, &v)) = x
        .iter()
        .enumerate()
        .find(|(_, &v)| !(0.0..=v_read_max).contains(&v))
    {
        return Err(Error::Domain {
            what: "x",
            value: v,
            bound: format!("x[{i}] in [0, {v_read_max}]"),
        });
    }
    Ok(())
}

#[inline]
pub fn clipped_relu(s: f64) -> f64 {
    clip_to(s, 1.0)
}

/// 1 on the closed interval `[0, 1]`, including both kinks.
#[inline]
pub fn clipped_relu_grad(s: f64) -> f64 {
    clip_grad(s, 1.0)
}

#[inline]
pub(crate) fn clip_to(s: f64, ceil: f64) -> f64 {
    s.max(0.0).min(ceil)
}

#[inline]
pub(crate) fn clip_grad(s: f64, ceil: f64) -> f64 {
    if (0.0..=ceil).contains(&s) {
        1.0
    } else {
        0.0
    }
}

/// Softmax cross-entropy: `(−ln softmax(logits)[label], softmax − onehot)`.
pub fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label {label} out of range");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    for p in &mut probs {
        *p /= sum;
    }
    probs[label] -= 1.0;
    (loss, probs)
}

/// Per-layer cache from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    model_id: u64,
    revision: u64,
    /// `inputs[k]` feeds layer `k`; `inputs[0]` is the network input.
    pub inputs: Vec<Matrix>,
    /// `pre[k]` is the transfer output of layer `k`; the last entry is the logits.
    pub pre: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        self.pre.last().expect("trace has at least one layer")
    }

    pub(crate) fn belongs_to(&self, model: &MlpModel) -> bool {
        self.model_id == model.id && self.revision == model.revision
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Matrix>,
    transfer: TransferKind,
    v_read_max: f64,
    id: u64,
    revision: u64,
}

impl Clone for MlpModel {
    fn clone(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            weights: self.weights.clone(),
            transfer: self.transfer,
            v_read_max: self.v_read_max,
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            revision: 0,
        }
    }
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.weights == other.weights
            && self.transfer == other.transfer
            && self.v_read_max == other.v_read_max
    }
}

impl MlpModel {
    pub fn new(dims: Vec<usize>, weights: Vec<Matrix>, transfer: TransferKind) -> Result<Self> {
        Self::with_read_voltage(dims, weights, transfer, 1.0)
    }

    pub fn with_read_voltage(
        dims: Vec<usize>,
        weights: Vec<Matrix>,
        transfer: TransferKind,
        v_read_max: f64,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("invalid layer dims {dims:?}")));
        }
        if weights.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                dims.len()
            )));
        }
        for (k, w) in weights.iter().enumerate() {
            if w.shape() != (dims[k], dims[k + 1]) {
                return Err(Error::Shape(format!(
                    "layer {k}: weight is {:?}, expected {:?}",
                    w.shape(),
                    (dims[k], dims[k + 1])
                )));
            }
        }
        if !(v_read_max > 0.0 && v_read_max.is_finite()) {
            return Err(Error::domain("v_read_max", v_read_max, "v_read_max > 0"));
        }
        let mut model = Self {
            dims,
            weights,
            transfer,
            v_read_max,
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            revision: 0,
        };
        if let TransferKind::ComplexDevice(ct) = transfer {
            let bound = ct.weight_bound();
            if model.weights.iter().any(|w| w.max_abs() > bound) {
                log::warn!("projecting complex-device weights onto ±{bound}");
                model.project_weights();
            }
        }
        Ok(model)
    }

    pub fn zeros(dims: Vec<usize>, transfer: TransferKind) -> Result<Self> {
        let weights = dims.windows(2).map(|p| Matrix::zeros(p[0], p[1])).collect();
        Self::new(dims, weights, transfer)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// Mutable access; invalidates outstanding traces.
    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        self.revision += 1;
        &mut self.weights
    }

    pub fn transfer(&self) -> &TransferKind {
        &self.transfer
    }

    pub fn v_read_max(&self) -> f64 {
        self.v_read_max
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }

    /// Clamps complex-device weights into the representable signed range.
    pub fn project_weights(&mut self) {
        if let TransferKind::ComplexDevice(ct) = self.transfer {
            let bound = ct.weight_bound();
            for w in self.weights_mut() {
                for v in w.as_mut_slice() {
                    *v = v.clamp(-bound, bound);
                }
            }
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dims[0] {
            return Err(Error::Shape(format!(
                "input width {} but model expects {}",
                x.cols(),
                self.dims[0]
            )));
        }
        check_voltages(x.as_slice(), self.v_read_max)
    }

    /// Batch forward pass (`rows = samples`) keeping the per-layer trace.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        self.check_input(x)?;
        let n = self.weights.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut y = x.clone();
        for (k, w) in self.weights.iter().enumerate() {
            let s = self.transfer.apply(&y, w)?;
            let next = (k + 1 < n).then(|| s.map(|v| clip_to(v, self.v_read_max)));
            inputs.push(y);
            pre.push(s);
            if let Some(next) = next {
                debug_assert!(next.as_slice().iter().all(|v| (0.0..=self.v_read_max).contains(v)));
                y = next;
            } else {
                break;
            }
        }
        let logits = pre.last().expect("at least one layer").clone();
        Ok((
            logits,
            ForwardTrace {
                model_id: self.id,
                revision: self.revision,
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without a trace.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let n = self.weights.len();
        let mut y = x.clone();
        for (k, w) in self.weights.iter().enumerate() {
            let s = self.transfer.apply(&y, w)?;
            if k + 1 == n {
                return Ok(s);
            }
            y = s.map(|v| clip_to(v, self.v_read_max));
        }
        unreachable!("model has at least one layer")
    }

    /// Activation entering layer `layer` (0 = network input).
    pub fn layer_input(&self, x: &Matrix, layer: usize) -> Result<Matrix> {
        if layer >= self.weights.len() {
            return Err(Error::Shape(format!(
                "layer {layer} out of range for {} layers",
                self.weights.len()
            )));
        }
        self.check_input(x)?;
        let mut y = x.clone();
        for w in &self.weights[..layer] {
            y = self
                .transfer
                .apply(&y, w)?
                .map(|v| clip_to(v, self.v_read_max));
        }
        Ok(y)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let params: Vec<f64> = match &self.transfer {
            TransferKind::LinearWeightedSum => {
                w.write_all(&[0])?;
                vec![]
            }
            TransferKind::SinhDevice { b } => {
                w.write_all(&[1])?;
                vec![*b]
            }
            TransferKind::ComplexDevice(ct) => {
                w.write_all(&[2])?;
                let d = &ct.device;
                vec![d.a, d.b, d.c, d.d, d.w_min, d.w_max, d.v_read_max, ct.gain, ct.margin]
            }
        };
        for p in params {
            w.write_all(&p.to_le_bytes())?;
        }
        w.write_all(&self.v_read_max.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for m in &self.weights {
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file), path)
    }

    pub fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let short = |e: std::io::Error| Error::format(path, format!("truncated checkpoint: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(short)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "not an rramnet checkpoint"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(short)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(short)?;
        let mut f64s = |n: usize, r: &mut dyn Read| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    r.read_exact(&mut b8).map_err(short)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let transfer = match tag[0] {
            0 => TransferKind::LinearWeightedSum,
            1 => TransferKind::sinh(f64s(1, r)?[0])?,
            2 => {
                let p = f64s(9, r)?;
                let device = ComplexDevice {
                    a: p[0],
                    b: p[1],
                    c: p[2],
                    d: p[3],
                    w_min: p[4],
                    w_max: p[5],
                    v_read_max: p[6],
                };
                device.validate()?;
                TransferKind::ComplexDevice(ComplexTransfer {
                    device,
                    gain: p[7],
                    margin: p[8],
                })
            }
            t => return Err(Error::format(path, format!("unknown transfer tag {t}"))),
        };
        let v_read_max = f64s(1, r)?[0];
        r.read_exact(&mut b4).map_err(short)?;
        let n = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::format(path, format!("implausible layer count {n}")));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b4).map_err(short)?;
            dims.push(u32::from_le_bytes(b4) as usize);
        }
        let mut weights = Vec::with_capacity(n - 1);
        for p in dims.windows(2) {
            let data = f64s(p[0] * p[1], r)?;
            weights.push(Matrix::from_vec(p[0], p[1], data)?);
        }
        Self::with_read_voltage(dims, weights, transfer, v_read_max)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Top-1 predictions for a batch.
pub fn predict(model: &MlpModel, x: &Matrix) -> Result<Vec<usize>> {
    let logits = model.logits(x)?;
    Ok((0..logits.rows()).map(|n| argmax(logits.row(n))).collect())
}

/// Fraction of samples whose top-1 logit matches the label.
pub fn accuracy(model: &MlpModel, data: &Dataset) -> Result<f64> {
    accuracy_with(data, |x| predict(model, x))
}

/// Accuracy under an arbitrary batch predictor (used for crossbar-simulated
/// inference as well as the analytic model).
pub fn accuracy_with(
    data: &Dataset,
    mut predictor: impl FnMut(&Matrix) -> Result<Vec<usize>>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    const CHUNK: usize = 1000;
    let mut correct = 0usize;
    let mut start = 0;
    while start < data.len() {
        let end = (start + CHUNK).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let (x, labels) = data.batch(&idx);
        let pred = predictor(&x)?;
        correct += pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
        start = end;
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(dims: &[usize], transfer: TransferKind, scale: f64, seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = dims
            .windows(2)
            .map(|p| Matrix::from_fn(p[0], p[1], |_, _| rng.random_range(-scale..scale)))
            .collect();
        MlpModel::new(dims.to_vec(), weights, transfer).unwrap()
    }

    /// Scalar-loop reference forward, independent of the matrix path.
    fn reference_logits(model: &MlpModel, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let n = model.layer_count();
        for (k, w) in model.weights().iter().enumerate() {
            let mut s = vec![0.0; w.cols()];
            for (j, sj) in s.iter_mut().enumerate() {
                for (i, &yi) in y.iter().enumerate() {
                    let wij = w.get(i, j);
                    *sj += match model.transfer() {
                        TransferKind::LinearWeightedSum => wij * yi,
                        TransferKind::SinhDevice { b } => wij * (b * yi).sinh(),
                        TransferKind::ComplexDevice(ct) => {
                            let d = ct.device;
                            let i_of = |st: f64| {
                                (d.a * st + d.b).exp() * ((d.c * yi.powf(st + d.d)).exp() - 1.0)
                            };
                            let mag = if yi == 0.0 { 0.0 } else { i_of(wij.abs()) - i_of(0.0) };
                            ct.gain * wij.signum() * mag
                        }
                    };
                }
            }
            if k + 1 < n {
                y = s.iter().map(|&v| v.max(0.0).min(1.0)).collect();
            } else {
                return s;
            }
        }
        unreachable!()
    }

    #[test]
    fn sinh_transfer_example() {
        let w = Matrix::from_vec(2, 1, vec![0.5, -0.2]).unwrap();
        let s = transfer(&TransferKind::sinh(4.0).unwrap(), &[1.0, 0.5], &w, 1.0).unwrap();
        assert_relative_eq!(s[0], 12.919586516994472, max_relative = 1e-14);
        let s = transfer(&TransferKind::sinh(4.0).unwrap(), &[0.0, 0.0], &w, 1.0).unwrap();
        assert_eq!(s, vec![0.0]);
        assert!(transfer(&TransferKind::LinearWeightedSum, &[1.2, 0.0], &w, 1.0).is_err());
        assert!(transfer(&TransferKind::LinearWeightedSum, &[-0.1, 0.0], &w, 1.0).is_err());
    }

    #[test]
    fn sinh_linear_limit() {
        let b = 1e-6;
        let w = Matrix::from_fn(6, 3, |i, j| (i as f64 - 2.5) * 0.3 + j as f64 * 0.1);
        let x = [0.1, 0.9, 0.5, 0.0, 1.0, 0.33];
        let lin = transfer(&TransferKind::LinearWeightedSum, &x, &w, 1.0).unwrap();
        let sh = transfer(&TransferKind::sinh(b).unwrap(), &x, &w, 1.0).unwrap();
        for (l, s) in lin.iter().zip(&sh) {
            assert_relative_eq!(s / b, *l, max_relative = 1e-6);
        }
    }

    #[test]
    fn clipped_relu_examples() {
        assert_eq!((clipped_relu(0.5), clipped_relu_grad(0.5)), (0.5, 1.0));
        assert_eq!((clipped_relu(-1.0), clipped_relu_grad(-1.0)), (0.0, 0.0));
        assert_eq!((clipped_relu(1.0), clipped_relu_grad(1.0)), (1.0, 1.0));
        assert_eq!((clipped_relu(0.0), clipped_relu_grad(0.0)), (0.0, 1.0));
        assert_eq!((clipped_relu(3.0), clipped_relu_grad(3.0)), (1.0, 0.0));
    }

    #[test]
    fn softmax_ce_examples() {
        let (loss, grad) = softmax_ce(&[0.3; 10], 4);
        assert_relative_eq!(loss, 10f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(grad.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
        let mut logits = vec![0.0; 10];
        logits[2] = 800.0;
        let (loss, _) = softmax_ce(&logits, 2);
        assert!(loss < 1e-300);
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
            let label = rng.random_range(0..10);
            let (_, grad) = softmax_ce(&logits, label);
            for i in 0..10 {
                let h = 1e-5;
                let mut up = logits.clone();
                up[i] += h;
                let mut dn = logits.clone();
                dn[i] -= h;
                let num = (softmax_ce(&up, label).0 - softmax_ce(&dn, label).0) / (2.0 * h);
                let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-12);
                assert!(rel <= 1e-6, "logit {i}: {num} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn forward_examples() {
        let w = Matrix::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let m = MlpModel::new(vec![3, 3], vec![w], TransferKind::LinearWeightedSum).unwrap();
        let x = Matrix::from_vec(1, 3, vec![0.2, 0.7, 1.0]).unwrap();
        assert_eq!(m.forward(&x).unwrap().0, x);

        let z = MlpModel::zeros(vec![4, 5, 3], TransferKind::sinh(4.0).unwrap()).unwrap();
        let (logits, trace) = z.forward(&Matrix::zeros(2, 4)).unwrap();
        assert_eq!(logits, Matrix::zeros(2, 3));
        assert_eq!(trace.inputs[1], Matrix::zeros(2, 5));

        assert!(matches!(z.forward(&Matrix::zeros(1, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let transfers = [
            (TransferKind::LinearWeightedSum, 0.8),
            (TransferKind::sinh(4.0).unwrap(), 0.1),
            (TransferKind::complex_default(), 2e-3),
        ];
        for (t, scale) in transfers {
            let model = random_model(&[7, 6, 5, 4], t, scale, 5);
            let x = Matrix::from_fn(3, 7, |_, _| rng.random_range(0.0..1.0));
            let (logits, _) = model.forward(&x).unwrap();
            for n in 0..3 {
                let want = reference_logits(&model, x.row(n));
                for (a, b) in logits.row(n).iter().zip(&want) {
                    assert!(
                        (a - b).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-15,
                        "{}: {a} vs {b}",
                        t.name()
                    );
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let model = random_model(&[20, 10, 5], TransferKind::sinh(3.0).unwrap(), 0.2, 9);
        let x = Matrix::from_fn(4, 20, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let a = model.forward(&x).unwrap().0;
        let b = model.forward(&x).unwrap().0;
        assert_eq!(
            a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn complex_cell_is_odd_in_weight() {
        let ct = match TransferKind::complex_default() {
            TransferKind::ComplexDevice(ct) => ct,
            _ => unreachable!(),
        };
        for &(w, x) in &[(0.01, 0.3), (0.1, 1.0), (0.003, 0.9)] {
            assert_eq!(ct.cell(-w, x), -ct.cell(w, x));
        }
        assert_eq!(ct.cell(0.0, 0.5), 0.0);
        assert_relative_eq!(ct.gain, 1424732625.8236136, max_relative = 1e-12);
    }

    #[test]
    fn complex_weights_are_projected() {
        let w = Matrix::from_vec(1, 2, vec![0.5, -0.3]).unwrap();
        let m = MlpModel::new(vec![1, 2], vec![w], TransferKind::complex_default()).unwrap();
        let bound = 0.15 - COMPLEX_STATE_MARGIN;
        assert_eq!(m.weights()[0].as_slice(), &[bound, -bound]);
    }

    #[test]
    fn accuracy_examples() {
        use crate::data::Dataset;
        // Bias toward class 0 by a single positive weight on output 0.
        let w = Matrix::from_fn(2, 3, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let m = MlpModel::new(vec![2, 3], vec![w], TransferKind::LinearWeightedSum).unwrap();
        let data = Dataset::new(vec![0.5; 8], vec![0; 4], (1, 2, 1), 3).unwrap();
        assert_eq!(accuracy(&m, &data).unwrap(), 1.0);

        let flat = MlpModel::zeros(vec![2, 10], TransferKind::LinearWeightedSum).unwrap();
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let data = Dataset::new(vec![0.3; 200], labels, (1, 2, 1), 10).unwrap();
        assert_relative_eq!(accuracy(&flat, &data).unwrap(), 0.1);

        let empty = Dataset::new(vec![], vec![], (1, 2, 1), 10).unwrap();
        assert!(matches!(accuracy(&flat, &empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn checkpoint_round_trip_and_rejection() {
        let dir = tempfile::tempdir().unwrap();
        for t in [
            TransferKind::LinearWeightedSum,
            TransferKind::sinh(4.0).unwrap(),
            TransferKind::complex_default(),
        ] {
            let m = random_model(&[5, 4, 3], t, 0.01, 2);
            let path = dir.path().join(format!("{}.ckpt", t.name()));
            m.save(&path).unwrap();
            assert_eq!(MlpModel::load(&path).unwrap(), m);
        }
        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, b"RRAMNET\0\x01\x00").unwrap();
        assert!(matches!(MlpModel::load(&bad), Err(Error::Format { .. })));
        std::fs::write(&bad, b"GARBAGE!").unwrap();
        assert!(matches!(MlpModel::load(&bad), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn softmax_ce_is_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 10),
            shift in -100.0f64..100.0,
            label in 0usize..10,
        ) {
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let a = softmax_ce(&logits, label).0;
            let b = softmax_ce(&shifted, label).0;
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-3));
        }

        #[test]
        fn hidden_activations_stay_in_read_range(seed in 0u64..500) {
            let model = random_model(&[6, 8, 8, 3], TransferKind::sinh(4.0).unwrap(), 1.0, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Matrix::from_fn(2, 6, |_, _| rng.random_range(0.0..=1.0));
            let (_, trace) = model.forward(&x).unwrap();
            for y in &trace.inputs[1..] {
                prop_assert!(y.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
