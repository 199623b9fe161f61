//! Minibatch SGD with hand-derived gradients for every transfer kind, plus a
//! central-difference gradient checker.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{accuracy, clip_grad, softmax_ce, ForwardTrace, MlpModel, TransferKind};

/// How the uniform initialization range is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScale {
    /// `±√(6 / (fan_in + fan_out))`
    Glorot,
    /// Glorot, further divided by the transfer's input magnification
    /// (`sinh(b)/b` for sinh, the zero-state slope for the complex device).
    DeviceAdjusted,
    /// Glorot divided by the transfer's full-scale output, `sinh(b·v_max)`
    /// for sinh, so that `W·sinh(b·x)` starts out as large as a Glorot
    /// weighted sum of inputs in `[0, 1]`. Identical to `DeviceAdjusted` for
    /// the other transfers.
    OutputNormalized,
    /// `±value` for every layer.
    Fixed(f64),
    /// Starts from `DeviceAdjusted`, then [`calibrate_init`] rescales each
    /// layer on a training batch until its pre-activations have this standard
    /// deviation. Without a batch it behaves like `DeviceAdjusted`.
    Calibrated(f64),
}

/// Batch size used to calibrate [`InitScale::Calibrated`].
pub const CALIBRATION_SAMPLES: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after_drop: f64,
    /// First epoch (0-based) trained at `lr_after_drop`.
    pub drop_epoch: usize,
    pub seed: u64,
    pub init: InitScale,
    /// Write `epoch_<n>.ckpt` into `checkpoint_dir` every this many epochs.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 100,
            lr_initial: 0.1,
            lr_after_drop: 0.02,
            drop_epoch: 16,
            seed: 1,
            init: InitScale::DeviceAdjusted,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, lr) in [("lr", self.lr_initial), ("lr_after", self.lr_after_drop)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {lr}")));
            }
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint interval must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if epoch < self.drop_epoch {
            self.lr_initial
        } else {
            self.lr_after_drop
        }
    }
}

/// Half-width of the uniform init range for a `fan_in × fan_out` layer.
pub fn init_scale(rule: InitScale, transfer: &TransferKind, fan_in: usize, fan_out: usize) -> f64 {
    let glorot = (6.0 / (fan_in + fan_out) as f64).sqrt();
    match rule {
        InitScale::Fixed(v) => v,
        InitScale::Glorot => glorot,
        InitScale::DeviceAdjusted | InitScale::Calibrated(_) => match transfer {
            TransferKind::LinearWeightedSum => glorot,
            TransferKind::SinhDevice { b } => glorot * b / b.sinh(),
            TransferKind::ComplexDevice(ct) => glorot / ct.sensitivity(),
        },
        InitScale::OutputNormalized => match transfer {
            TransferKind::SinhDevice { b } => glorot / b.sinh(),
            _ => init_scale(InitScale::DeviceAdjusted, transfer, fan_in, fan_out),
        },
    }
}

/// A model with seeded uniform weights.
pub fn init_model(
    dims: &[usize],
    transfer: TransferKind,
    rule: InitScale,
    seed: u64,
) -> Result<MlpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = dims
        .windows(2)
        .map(|p| {
            let a = init_scale(rule, &transfer, p[0], p[1]);
            Matrix::from_fn(p[0], p[1], |_, _| rng.random_range(-a..=a))
        })
        .collect();
    MlpModel::new(dims.to_vec(), weights, transfer)
}

/// Rescales the layers of `model` front to back so the pre-activations of
/// every layer on `x` have standard deviation `target_sd`. Returns the factor
/// applied to each layer (1 where the layer output was constant).
pub fn calibrate_init(model: &mut MlpModel, x: &Matrix, target_sd: f64) -> Result<Vec<f64>> {
    if !(target_sd > 0.0 && target_sd.is_finite()) {
        return Err(Error::domain("target_sd", target_sd, "finite and > 0"));
    }
    let mut factors = Vec::with_capacity(model.layer_count());
    for k in 0..model.layer_count() {
        let y = model.layer_input(x, k)?;
        let s = model.transfer().apply(&y, &model.weights()[k])?;
        let sd = std_dev(s.as_slice());
        let f = if sd > 0.0 && sd.is_finite() { target_sd / sd } else { 1.0 };
        for v in model.weights_mut()[k].as_mut_slice() {
            *v *= f;
        }
        factors.push(f);
    }
    model.project_weights();
    Ok(factors)
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Mean loss over the batch and its gradient for every weight matrix.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub weights: Vec<Matrix>,
}

/// Batch-mean cross-entropy for a trace's logits.
pub fn batch_loss(logits: &Matrix, labels: &[usize]) -> f64 {
    let total: f64 = (0..logits.rows())
        .map(|n| softmax_ce(logits.row(n), labels[n]).0)
        .sum();
    total / logits.rows() as f64
}

/// Backpropagates the batch-mean softmax cross-entropy through `trace`.
pub fn backward(model: &MlpModel, trace: &ForwardTrace, labels: &[usize]) -> Result<Gradients> {
    if !trace.belongs_to(model) {
        return Err(Error::StaleTrace);
    }
    let logits = trace.logits();
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::domain("label", l as f64, format!("< {}", logits.cols())));
    }
    let batch = logits.rows() as f64;
    let mut delta = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (n, &label) in labels.iter().enumerate() {
        let (l, g) = softmax_ce(logits.row(n), label);
        loss += l;
        for (d, v) in delta.row_mut(n).iter_mut().zip(g) {
            *d = v / batch;
        }
    }
    let vmax = model.v_read_max();
    let mut grads = vec![Matrix::zeros(0, 0); model.layer_count()];
    for k in (0..model.layer_count()).rev() {
        let w = &model.weights()[k];
        let y = &trace.inputs[k];
        let need_prev = k > 0;
        let (dw, dy) = match model.transfer() {
            TransferKind::LinearWeightedSum => {
                let dw = y.t_matmul(&delta)?;
                let dy = need_prev.then(|| delta.matmul_t(w)).transpose()?;
                (dw, dy)
            }
            TransferKind::SinhDevice { b } => {
                let b = *b;
                let dw = y.map(|v| (b * v).sinh()).t_matmul(&delta)?;
                let dy = if need_prev {
                    let mut dy = delta.matmul_t(w)?;
                    for (d, &v) in dy.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *d *= b * (b * v).cosh();
                    }
                    Some(dy)
                } else {
                    None
                };
                (dw, dy)
            }
            TransferKind::ComplexDevice(ct) => {
                let mut dw = Matrix::zeros(w.rows(), w.cols());
                let mut dy = Matrix::zeros(y.rows(), y.cols());
                for n in 0..y.rows() {
                    let dn = delta.row(n);
                    for i in 0..w.rows() {
                        let xi = y.get(n, i);
                        if xi == 0.0 {
                            // Both partials vanish at zero volts.
                            continue;
                        }
                        let mut acc = 0.0;
                        let dw_row = dw.row_mut(i);
                        for j in 0..w.cols() {
                            let (pw, px) = ct.cell_partials(w.get(i, j), xi);
                            dw_row[j] += dn[j] * pw;
                            acc += dn[j] * px;
                        }
                        dy.set(n, i, acc);
                    }
                }
                (dw, need_prev.then_some(dy))
            }
        };
        grads[k] = dw;
        if let Some(mut dy) = dy {
            let pre = &trace.pre[k - 1];
            for (d, &s) in dy.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *d *= clip_grad(s, vmax);
            }
            delta = dy;
        }
    }
    Ok(Gradients {
        loss: loss / batch,
        weights: grads,
    })
}

/// `W ← W − lr·∇W`, then projection onto the device range where applicable.
pub fn sgd_step(model: &mut MlpModel, grads: &[Matrix], lr: f64) -> Result<()> {
    if grads.len() != model.layer_count()
        || grads
            .iter()
            .zip(model.weights())
            .any(|(g, w)| g.shape() != w.shape())
    {
        return Err(Error::Shape("gradient shapes do not match weights".into()));
    }
    for (w, g) in model.weights_mut().iter_mut().zip(grads) {
        for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *wv -= lr * gv;
        }
    }
    model.project_weights();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV with `epoch,train_loss,test_accuracy`, preceded by `# key=value` lines.
    pub fn write_csv(&self, out: &mut impl Write, meta: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "epoch,train_loss,test_accuracy")?;
        for r in &self.records {
            writeln!(out, "{},{:.9},{:.6}", r.epoch, r.train_loss, r.test_accuracy)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, meta: &[(&str, String)]) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, meta).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

pub fn train(
    model: &mut MlpModel,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<History> {
    train_with(model, |_| Ok(Cow::Borrowed(train_set)), test_set, cfg)
}

/// Like [`train`], but asks `epoch_data` for the training set of each epoch
/// (for example a freshly augmented copy).
pub fn train_with<'a>(
    model: &mut MlpModel,
    mut epoch_data: impl FnMut(usize) -> Result<Cow<'a, Dataset>>,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let data = epoch_data(epoch)?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let lr = cfg.lr_for_epoch(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = data.batch(idx);
            let (_, trace) = model.forward(&x)?;
            let grads = backward(model, &trace, &labels)?;
            if !grads.loss.is_finite() {
                return Err(nan_diagnostic(&trace, grads.loss, epoch, bi));
            }
            if let Some(k) = grads.weights.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in layer {k} at epoch {epoch}, batch {bi}"
                )));
            }
            sgd_step(model, &grads.weights, lr)?;
            loss_sum += grads.loss;
            batches += 1;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / batches as f64,
            test_accuracy: accuracy(model, test_set)?,
        };
        log::info!(
            "epoch {:>3}  lr {lr:.3e}  loss {:.5}  test {:.4}",
            record.epoch,
            record.train_loss,
            record.test_accuracy
        );
        history.records.push(record);
        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, &cfg.checkpoint_dir) {
            if (epoch + 1) % every == 0 {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                model.save(&dir.join(format!("epoch_{}.ckpt", epoch + 1)))?;
            }
        }
    }
    Ok(history)
}

fn nan_diagnostic(trace: &ForwardTrace, loss: f64, epoch: usize, batch: usize) -> Error {
    let layer = trace
        .pre
        .iter()
        .position(|s| !s.is_finite())
        .map_or_else(|| "output".to_string(), |k| format!("layer {k}"));
    Error::Numerical(format!(
        "loss became {loss} at epoch {epoch}, batch {batch}; first non-finite pre-activation in {layer}"
    ))
}

/// Per-matrix comparison of analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub max_rel: f64,
    pub mean_rel: f64,
    pub checked: usize,
    /// `(row, col, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    /// Weights skipped because a perturbation crossed an activation kink or
    /// came too close to a device branch point.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub transfer: &'static str,
    pub eps: f64,
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel).fold(0.0, f64::max)
    }

    pub fn passes(&self, bound: f64) -> bool {
        self.layers.iter().all(|l| l.checked > 0) && self.max_rel() <= bound
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "transfer={} eps={:e}", self.transfer, self.eps)?;
        writeln!(f, "layer,checked,skipped,max_rel,mean_rel,worst_analytic,worst_numeric")?;
        for (k, l) in self.layers.iter().enumerate() {
            let (a, n) = l.worst.map_or((0.0, 0.0), |w| (w.2, w.3));
            writeln!(
                f,
                "{k},{},{},{:.3e},{:.3e},{a:.6e},{n:.6e}",
                l.checked, l.skipped, l.max_rel, l.mean_rel
            )?;
        }
        Ok(())
    }
}

/// Weights examined per matrix; smaller matrices are checked exhaustively.
pub const GRAD_CHECK_SAMPLES: usize = 200;

/// Hidden pre-activations closer than this to a clipped-ReLU kink mark the
/// weights they feed as near-boundary; those are resampled.
pub const KINK_MARGIN: f64 = 1e-3;

/// Which side of each clipped-ReLU kink every hidden pre-activation sits on.
fn kink_pattern(trace: &ForwardTrace, vmax: f64) -> Vec<u8> {
    let hidden = &trace.pre[..trace.pre.len() - 1];
    hidden
        .iter()
        .flat_map(|s| s.as_slice().iter())
        .map(|&v| {
            if v < 0.0 {
                0
            } else if v <= vmax {
                1
            } else {
                2
            }
        })
        .collect()
}

fn near_kink(pre: &Matrix, unit: usize, vmax: f64) -> bool {
    (0..pre.rows()).any(|n| {
        let s = pre.get(n, unit);
        (s > 0.0 && s < KINK_MARGIN) || (s > vmax - KINK_MARGIN && s <= vmax)
    })
}

/// Finite-difference step suited to each transfer's weight scale. Complex
/// device weights live around `1e-3`, where a `1e-5` step is already a
/// percent-level perturbation.
pub fn default_eps(transfer: &TransferKind) -> f64 {
    match transfer {
        TransferKind::ComplexDevice(_) => 1e-8,
        _ => 1e-5,
    }
}

/// Central differences `(E(w+ε) − E(w−ε)) / 2ε` against [`backward`].
pub fn grad_check(
    model: &MlpModel,
    x: &Matrix,
    labels: &[usize],
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::domain("eps", eps, "eps > 0"));
    }
    let (_, trace) = model.forward(x)?;
    let analytic = backward(model, &trace, labels)?;
    let vmax = model.v_read_max();
    let base_pattern = kink_pattern(&trace, vmax);
    let bound = match model.transfer() {
        TransferKind::ComplexDevice(ct) => Some(ct.weight_bound()),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut layers = Vec::with_capacity(model.layer_count());
    for k in 0..model.layer_count() {
        let (rows, cols) = model.weights()[k].shape();
        let mut order: Vec<usize> = (0..rows * cols).collect();
        order.shuffle(&mut rng);
        let mut rels = Vec::new();
        let mut skipped = 0;
        let mut worst: Option<(usize, usize, f64, f64)> = None;
        for flat in order {
            if rels.len() >= GRAD_CHECK_SAMPLES {
                break;
            }
            let (i, j) = (flat / cols, flat % cols);
            let w0 = model.weights()[k].get(i, j);
            if k > 0 && near_kink(&trace.pre[k - 1], i, vmax) {
                skipped += 1;
                continue;
            }
            if let Some(b) = bound {
                if w0.abs() <= 2.0 * eps || w0.abs() >= b - 2.0 * eps {
                    skipped += 1;
                    continue;
                }
            }
            let mut eval = |w: f64| -> Result<(f64, Vec<u8>)> {
                probe.weights_mut()[k].set(i, j, w);
                let (logits, t) = probe.forward(x)?;
                Ok((batch_loss(&logits, labels), kink_pattern(&t, vmax)))
            };
            let (up, pu) = eval(w0 + eps)?;
            let (dn, pd) = eval(w0 - eps)?;
            probe.weights_mut()[k].set(i, j, w0);
            if pu != base_pattern || pd != base_pattern {
                skipped += 1;
                continue;
            }
            let num = (up - dn) / (2.0 * eps);
            let a = analytic.weights[k].get(i, j);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-12);
            if rels.iter().all(|&r| rel > r) {
                worst = Some((i, j, a, num));
            }
            rels.push(rel);
        }
        layers.push(LayerCheck {
            max_rel: rels.iter().cloned().fold(0.0, f64::max),
            mean_rel: if rels.is_empty() {
                0.0
            } else {
                rels.iter().sum::<f64>() / rels.len() as f64
            },
            checked: rels.len(),
            worst,
            skipped,
        });
    }
    Ok(GradCheckReport {
        transfer: model.transfer().name(),
        eps,
        layers,
    })
}

/// Small random model, inputs and labels for gradient checks.
pub fn gradcheck_fixture(
    dims: &[usize],
    transfer: TransferKind,
    batch: usize,
    seed: u64,
) -> Result<(MlpModel, Matrix, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = match transfer {
        TransferKind::LinearWeightedSum => 0.6,
        TransferKind::SinhDevice { b } => 0.4 * b / b.sinh(),
        TransferKind::ComplexDevice(ct) => 2.0 / ct.sensitivity(),
    };
    let weights = dims
        .windows(2)
        .map(|p| Matrix::from_fn(p[0], p[1], |_, _| rng.random_range(-scale..scale)))
        .collect();
    let model = MlpModel::new(dims.to_vec(), weights, transfer)?;
    let x = Matrix::from_fn(batch, dims[0], |_, _| rng.random_range(0.05..1.0));
    let classes = *dims.last().unwrap();
    let labels = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    Ok((model, x, labels))
}
