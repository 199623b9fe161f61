//! Experiment drivers behind the CLI: training runs, naive-mapping and
//! device-aware k-sweeps, activation histograms, the three-network summary
//! table and gradient checks.
//!
//! Every command writes CSV with `# key=value` metadata lines (always
//! including the seed) followed by a header row. Output depends only on the
//! configuration, so reruns produce identical bytes.
//!
//! Learning rates are given in normalized units. A weighted-sum network uses
//! them as is; a sinh network divides them by `sinh(b·v_max)²` (and the
//! complex network by its zero-state slope squared), which is plain SGD on
//! weights rescaled so that every transfer has the same full-scale output.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_f64, ConfigFile, Section};
use crate::crossbar::{naive_layer_with, simulate_crossbar_inference, simulate_naive_inference_with, NaiveScheme};
use crate::data::{
    self, augment, center_crop, load_cifar10_dir, load_mnist, synth_distribution, AugmentSpec,
    Dataset, MnistSplit, SynthKind,
};
use crate::device::{b_of_k, NonlinearityK, SinhDevice};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{accuracy, accuracy_with, argmax, MlpModel, TransferKind};
use crate::trainer::{
    calibrate_init, default_eps, grad_check, gradcheck_fixture, init_model, train_with,
    GradCheckReport, History, InitScale, TrainConfig, CALIBRATION_SAMPLES,
};

/// Factor converting the published per-preset learning rates into the
/// normalized units used here (`5e-6 → 0.1`).
pub const LR_UNIT: f64 = 2e4;

/// Device used for `k = 2`, where the sinh law degenerates to a line.
pub const LINEAR_LIMIT_B: f64 = 1e-6;

pub const DEFAULT_K_GRID: [f64; 9] = [2.0, 3.0, 4.0, 5.0, 6.0, 7.5, 10.0, 15.0, 20.0];

/// Pre-activation standard deviation targeted by the `calibrated` init.
pub const CALIBRATION_SD: f64 = 0.3;

pub const HIST_BINS: usize = 50;

/// Training-set size of the desk-scale CIFAR run.
pub const CIFAR_DESK_SUBSET: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    ShallowMnist,
    DeepMnist,
    ShallowCifar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferChoice {
    Linear,
    Sinh,
    Complex,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shallow-mnist" => Ok(Self::ShallowMnist),
            "deep-mnist" => Ok(Self::DeepMnist),
            "shallow-cifar" => Ok(Self::ShallowCifar),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ShallowMnist => "shallow-mnist",
            Self::DeepMnist => "deep-mnist",
            Self::ShallowCifar => "shallow-cifar",
        }
    }

    pub fn dims(self, scale: Scale) -> Vec<usize> {
        match (self, scale) {
            (Self::ShallowMnist, _) => vec![784, 500, 250, 10],
            (Self::DeepMnist, Scale::Paper) => vec![784, 2500, 2000, 1500, 1000, 500, 10],
            (Self::DeepMnist, Scale::Desk) => vec![784, 512, 512, 512, 256, 128, 10],
            (Self::ShallowCifar, _) => vec![2352, 4000, 1000, 4000, 10],
        }
    }

    /// `(epochs, lr, lr_after, drop_epoch)` in normalized units.
    pub fn schedule(self, scale: Scale) -> (usize, f64, f64, usize) {
        match (self, scale) {
            (Self::ShallowMnist, _) => (30, 5e-6 * LR_UNIT, 1e-6 * LR_UNIT, 16),
            (Self::DeepMnist, Scale::Paper) => (65, 2e-6 * LR_UNIT, 7e-7 * LR_UNIT, 15),
            (Self::DeepMnist, Scale::Desk) => (10, 2e-6 * LR_UNIT, 7e-7 * LR_UNIT, 5),
            (Self::ShallowCifar, Scale::Paper) => (100, 1e-6 * LR_UNIT, 1e-6 * LR_UNIT, 100),
            (Self::ShallowCifar, Scale::Desk) => (10, 1e-6 * LR_UNIT, 1e-6 * LR_UNIT, 10),
        }
    }

    pub fn is_cifar(self) -> bool {
        self == Self::ShallowCifar
    }
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            _ => Err(Error::Config(format!("unknown scale {s:?} (desk|paper)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Desk => "desk",
            Self::Paper => "paper",
        }
    }
}

impl TransferChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" | "ideal" => Ok(Self::Linear),
            "sinh" | "proposed" => Ok(Self::Sinh),
            "complex" => Ok(Self::Complex),
            _ => Err(Error::Config(format!("unknown transfer {s:?} (linear|sinh|complex)"))),
        }
    }
}

/// `b` for a nonlinearity `k`; `k = 2` maps to the linear-limit device.
pub fn b_for_k(k: f64) -> Result<f64> {
    let k = NonlinearityK::new(k)?;
    Ok(b_of_k(k, 1e-13)?.max(LINEAR_LIMIT_B))
}

pub fn transfer_for(choice: TransferChoice, k: f64) -> Result<TransferKind> {
    match choice {
        TransferChoice::Linear => Ok(TransferKind::LinearWeightedSum),
        TransferChoice::Sinh => TransferKind::sinh(b_for_k(k)?),
        TransferChoice::Complex => Ok(TransferKind::complex_default()),
    }
}

/// Multiplier turning a normalized learning rate into one for raw weights.
pub fn lr_gain(transfer: &TransferKind, v_read_max: f64) -> f64 {
    match transfer {
        TransferKind::LinearWeightedSum => 1.0,
        TransferKind::SinhDevice { b } => (b * v_read_max).sinh().powi(-2),
        TransferKind::ComplexDevice(ct) => ct.sensitivity().powi(-2),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub scale: Scale,
    /// Overrides the preset's layer sizes.
    pub custom_dims: Option<Vec<usize>>,
    pub transfer: TransferChoice,
    pub k: f64,
    pub k_list: Vec<f64>,
    pub naive_scheme: NaiveScheme,
    pub epochs: usize,
    pub lr: f64,
    pub lr_after: f64,
    pub lr_drop_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init: InitScale,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Training samples used (all if `None`).
    pub train_subset: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(preset: Preset, scale: Scale) -> Self {
        let (epochs, lr, lr_after, drop) = preset.schedule(scale);
        Self {
            preset,
            scale,
            custom_dims: None,
            transfer: TransferChoice::Sinh,
            k: 7.5,
            k_list: DEFAULT_K_GRID.to_vec(),
            naive_scheme: NaiveScheme::Differential,
            epochs,
            lr,
            lr_after,
            lr_drop_epoch: drop,
            batch_size: 100,
            seed: 1,
            init: InitScale::Calibrated(CALIBRATION_SD),
            data_dir: data::default_data_dir(),
            out_dir: PathBuf::from("out"),
            train_subset: (preset.is_cifar() && scale == Scale::Desk).then_some(CIFAR_DESK_SUBSET),
        }
    }

    /// Switches preset and scale, resetting the schedule to their defaults.
    pub fn with_preset(mut self, preset: Preset, scale: Scale) -> Self {
        let base = Self::new(preset, scale);
        self.preset = preset;
        self.scale = scale;
        self.epochs = base.epochs;
        self.lr = base.lr;
        self.lr_after = base.lr_after;
        self.lr_drop_epoch = base.lr_drop_epoch;
        self.train_subset = base.train_subset;
        self
    }

    pub fn dims(&self) -> Vec<usize> {
        self.custom_dims.clone().unwrap_or_else(|| self.preset.dims(self.scale))
    }

    /// Applies `[experiment]` keys from a config file.
    pub fn apply_section(&mut self, s: &Section) -> Result<()> {
        if s.contains_key("preset") || s.contains_key("scale") {
            let preset = s.get("preset").map_or(Ok(self.preset), |v| Preset::parse(v))?;
            let scale = s.get("scale").map_or(Ok(self.scale), |v| Scale::parse(v))?;
            *self = self.clone().with_preset(preset, scale);
        }
        for (key, v) in s {
            let usize_of = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("{key}: expected a count, got {v:?}")))
            };
            match key.as_str() {
                "preset" | "scale" => {}
                "transfer" => self.transfer = TransferChoice::parse(v)?,
                "k" => self.k = parse_f64(key, v)?,
                "k_list" => self.k_list = parse_k_list(v)?,
                "naive_scheme" => self.naive_scheme = NaiveScheme::parse(v)?,
                "dims" => self.custom_dims = Some(parse_dims(v)?),
                "epochs" => self.epochs = usize_of(v)?,
                "lr" => self.lr = parse_f64(key, v)?,
                "lr_after" => self.lr_after = parse_f64(key, v)?,
                "lr_drop_epoch" => self.lr_drop_epoch = usize_of(v)?,
                "batch_size" => self.batch_size = usize_of(v)?,
                "seed" => {
                    self.seed = v
                        .parse()
                        .map_err(|_| Error::Config(format!("seed: bad value {v:?}")))?
                }
                "init" => self.init = parse_init(v)?,
                "data_dir" => self.data_dir = PathBuf::from(v),
                "out" => self.out_dir = PathBuf::from(v),
                "train_subset" => self.train_subset = Some(usize_of(v)?),
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let file = ConfigFile::load(path)?;
        if let Some(s) = file.section("experiment") {
            self.apply_section(s)?;
        }
        Ok(())
    }

    /// Trainer settings for a model with the given transfer.
    pub fn train_config(&self, transfer: &TransferKind, v_read_max: f64) -> TrainConfig {
        let g = lr_gain(transfer, v_read_max);
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_initial: self.lr * g,
            lr_after_drop: self.lr_after * g,
            drop_epoch: self.lr_drop_epoch,
            seed: self.seed,
            init: self.init,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }

    fn meta(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("preset", self.preset.name().to_string()),
            ("scale", self.scale.name().to_string()),
            ("dims", dims_string(&self.dims())),
            ("epochs", self.epochs.to_string()),
            ("lr", format!("{:e}", self.lr)),
            ("lr_after", format!("{:e}", self.lr_after)),
            ("lr_drop_epoch", self.lr_drop_epoch.to_string()),
            ("batch_size", self.batch_size.to_string()),
        ]
    }
}

pub fn parse_k_list(v: &str) -> Result<Vec<f64>> {
    let ks = v
        .split(',')
        .map(|t| parse_f64("k_list", t.trim()))
        .collect::<Result<Vec<_>>>()?;
    if ks.is_empty() {
        return Err(Error::Config("k_list is empty".into()));
    }
    for &k in &ks {
        NonlinearityK::new(k)?;
    }
    Ok(ks)
}

/// Layer sizes such as `784-100-10`.
pub fn parse_dims(v: &str) -> Result<Vec<usize>> {
    let dims = v
        .split(['-', ','])
        .map(|t| t.trim().parse::<usize>().ok().filter(|&d| d > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config(format!("dims: expected sizes like 784-100-10, got {v:?}")))?;
    if dims.len() < 2 {
        return Err(Error::Config("dims: need at least input and output sizes".into()));
    }
    Ok(dims)
}

pub fn parse_init(v: &str) -> Result<InitScale> {
    match v {
        "glorot" => Ok(InitScale::Glorot),
        "device" => Ok(InitScale::DeviceAdjusted),
        "normalized" => Ok(InitScale::OutputNormalized),
        "calibrated" => Ok(InitScale::Calibrated(CALIBRATION_SD)),
        _ => v
            .parse::<f64>()
            .ok()
            .filter(|a| *a > 0.0)
            .map(InitScale::Fixed)
            .ok_or_else(|| Error::Config(format!("init: expected glorot|device|normalized|calibrated|<scale>, got {v:?}"))),
    }
}

fn dims_string(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("-")
}

/// Train and test sets for a preset. CIFAR test images are center-cropped;
/// training images are re-augmented every epoch by [`train_model`].
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub train: Dataset,
    pub test: Dataset,
    pub augment: bool,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<DataBundle> {
    let (train, test, augment) = if cfg.preset.is_cifar() {
        let (train, test) = load_cifar10_dir(&cfg.data_dir.join("cifar-10-batches-bin"))?;
        (train, center_crop(&test)?, true)
    } else {
        let dir = cfg.data_dir.join("mnist");
        (
            load_mnist(&dir, MnistSplit::Train)?,
            load_mnist(&dir, MnistSplit::Test)?,
            false,
        )
    };
    let train = match cfg.train_subset {
        Some(n) if n < train.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            train.subset(n, &mut rng)
        }
        _ => train,
    };
    Ok(DataBundle {
        train,
        test,
        augment,
    })
}

/// The seeded starting point of [`train_model`], calibrated on the first
/// training samples when the init rule asks for it.
pub fn initial_model(cfg: &ExperimentConfig, transfer: TransferKind, data: &DataBundle) -> Result<MlpModel> {
    let mut model = init_model(&cfg.dims(), transfer, cfg.init, cfg.seed)?;
    if let InitScale::Calibrated(sd) = cfg.init {
        let n = CALIBRATION_SAMPLES.min(data.train.len());
        let first: Vec<usize> = (0..n).collect();
        let x = if data.augment {
            // Training images are cropped on the fly; calibrate on crops.
            center_crop(&data.train.subset(n, &mut ChaCha8Rng::seed_from_u64(cfg.seed)))?.batch(&first).0
        } else {
            data.train.batch(&first).0
        };
        let f = calibrate_init(&mut model, &x, sd)?;
        log::debug!("init calibration factors {f:?}");
    }
    Ok(model)
}

/// Initializes and trains a model of the configured preset.
pub fn train_model(
    cfg: &ExperimentConfig,
    transfer: TransferKind,
    data: &DataBundle,
) -> Result<(MlpModel, History)> {
    let dims = cfg.dims();
    let mut model = initial_model(cfg, transfer, data)?;
    let tc = cfg.train_config(&transfer, model.v_read_max());
    log::info!(
        "training {} {} ({}), {} epochs, lr {:e}",
        cfg.preset.name(),
        transfer.name(),
        dims_string(&dims),
        tc.epochs,
        tc.lr_initial
    );
    let history = if data.augment {
        let seed = cfg.seed;
        train_with(
            &mut model,
            |epoch| augment(&data.train, &AugmentSpec::training(seed.wrapping_add(epoch as u64))).map(Cow::Owned),
            &data.test,
            &tc,
        )?
    } else {
        train_with(&mut model, |_| Ok(Cow::Borrowed(&data.train)), &data.test, &tc)?
    };
    Ok((model, history))
}

fn predictions(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows()).map(|n| argmax(logits.row(n))).collect()
}

/// Accuracy of a weighted-sum model run on a nonlinear crossbar of
/// nonlinearity `k` with the naive linear mapping.
pub fn naive_accuracy(model: &MlpModel, k: f64, test: &Dataset) -> Result<f64> {
    naive_accuracy_with(model, k, test, NaiveScheme::Differential)
}

pub fn naive_accuracy_with(model: &MlpModel, k: f64, test: &Dataset, scheme: NaiveScheme) -> Result<f64> {
    let device = SinhDevice::with_b(b_for_k(k)?)?;
    accuracy_with(test, |x| Ok(predictions(&simulate_naive_inference_with(model, &device, x, scheme)?)))
}

/// Accuracy of a sinh model evaluated through the crossbar path.
pub fn crossbar_accuracy(model: &MlpModel, test: &Dataset) -> Result<f64> {
    accuracy_with(test, |x| Ok(predictions(&simulate_crossbar_inference(model, x)?)))
}

struct Csv {
    buf: Vec<u8>,
}

impl Csv {
    fn new(meta: &[(&str, String)], header: &str) -> Self {
        let mut buf = Vec::new();
        for (k, v) in meta {
            writeln!(buf, "# {k}={v}").unwrap();
        }
        writeln!(buf, "{header}").unwrap();
        Self { buf }
    }

    fn row(&mut self, fields: &[String]) {
        writeln!(self.buf, "{}", fields.join(",")).unwrap();
    }

    fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, &self.buf).map_err(|e| Error::io(path, e))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history_csv: PathBuf,
    pub test_accuracy: f64,
}

/// Trains the configured network; writes `model.ckpt` and `history.csv`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let transfer = transfer_for(cfg.transfer, cfg.k)?;
    let data = load_data(cfg)?;
    let (model, history) = train_model(cfg, transfer, &data)?;
    ensure_dir(&cfg.out_dir)?;
    let checkpoint = cfg.out_dir.join("model.ckpt");
    model.save(&checkpoint)?;
    let mut meta = cfg.meta();
    meta.push(("transfer", transfer.name().to_string()));
    if let TransferKind::SinhDevice { b } = transfer {
        meta.push(("b", format!("{b:.12}")));
    }
    let history_csv = cfg.out_dir.join("history.csv");
    history.save_csv(&history_csv, &meta)?;
    let test_accuracy = match history.last() {
        Some(r) => r.test_accuracy,
        None => accuracy(&model, &data.test)?,
    };
    Ok(TrainOutcome {
        checkpoint,
        history_csv,
        test_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub b: f64,
    pub accuracy: f64,
    /// Naive sweep: `(ideal − accuracy) / ideal`. Proposed sweep: accuracy
    /// through the simulated crossbar.
    pub extra: f64,
}

/// Naive mapping of a trained weighted-sum checkpoint across `k`; writes
/// `sweep_naive.csv` with `k,b,accuracy,normalized_loss`.
pub fn cmd_sweep_naive(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Vec<SweepRow>> {
    let model = MlpModel::load(checkpoint)?;
    if !matches!(model.transfer(), TransferKind::LinearWeightedSum) {
        return Err(Error::Unsupported(
            "naive sweep needs a checkpoint trained with the linear transfer".into(),
        ));
    }
    let data = load_data(cfg)?;
    let rows = sweep_naive(&model, &cfg.k_list, &data.test, cfg.naive_scheme)?;
    let mut meta = cfg.meta();
    meta.push(("naive_scheme", cfg.naive_scheme.name().to_string()));
    meta.push(("checkpoint", checkpoint.display().to_string()));
    let mut csv = Csv::new(&meta, "k,b,accuracy,normalized_loss");
    for r in &rows {
        csv.row(&[fmt_k(r.k), format!("{:.9}", r.b), format!("{:.6}", r.accuracy), format!("{:.6}", r.extra)]);
    }
    csv.save(&cfg.out_dir.join("sweep_naive.csv"))?;
    Ok(rows)
}

pub fn sweep_naive(model: &MlpModel, ks: &[f64], test: &Dataset, scheme: NaiveScheme) -> Result<Vec<SweepRow>> {
    let ideal = accuracy(model, test)?;
    ks.iter()
        .map(|&k| {
            let acc = naive_accuracy_with(model, k, test, scheme)?;
            log::info!("naive k={k}: {acc:.4}");
            Ok(SweepRow {
                k,
                b: b_for_k(k)?,
                accuracy: acc,
                extra: (ideal - acc) / ideal,
            })
        })
        .collect()
}

fn fmt_k(k: f64) -> String {
    format!("{k}")
}

/// Trains one sinh network per `k`; writes `sweep_proposed.csv` with
/// `k,b,accuracy,crossbar_accuracy` and a checkpoint per point.
pub fn cmd_sweep_proposed(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let data = load_data(cfg)?;
    let mut rows = Vec::new();
    let mut csv = Csv::new(&cfg.meta(), "k,b,accuracy,crossbar_accuracy");
    ensure_dir(&cfg.out_dir)?;
    for &k in &cfg.k_list {
        let b = b_for_k(k)?;
        let (model, history) = train_model(cfg, TransferKind::sinh(b)?, &data)?;
        model.save(&cfg.out_dir.join(format!("proposed_k{k}.ckpt")))?;
        let acc = match history.last() {
            Some(r) => r.test_accuracy,
            None => accuracy(&model, &data.test)?,
        };
        let xbar = crossbar_accuracy(&model, &data.test)?;
        csv.row(&[fmt_k(k), format!("{b:.9}"), format!("{acc:.6}"), format!("{xbar:.6}")]);
        rows.push(SweepRow {
            k,
            b,
            accuracy: acc,
            extra: xbar,
        });
    }
    csv.save(&cfg.out_dir.join("sweep_proposed.csv"))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistSource {
    /// Real activations: the dataset's test images propagated to the layer.
    Dataset,
    SynthA,
    SynthB,
}

impl HistSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dataset" => Ok(Self::Dataset),
            "a" | "A" | "synth-a" => Ok(Self::SynthA),
            "b" | "B" | "synth-b" => Ok(Self::SynthB),
            _ => Err(Error::Config(format!("unknown input source {s:?} (dataset|a|b)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Dataset => "dataset",
            Self::SynthA => "synth-a",
            Self::SynthB => "synth-b",
        }
    }
}

/// Fixed-width histogram over the observed range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal bins spanning `[min, max]`; a single bin if all values
    /// are equal.
    pub fn new(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || !(hi > lo) {
            return Self {
                lo: if values.is_empty() { 0.0 } else { lo },
                hi: if values.is_empty() { 0.0 } else { hi },
                counts: vec![values.len()],
            };
        }
        let mut counts = vec![0; bins.max(1)];
        let width = (hi - lo) / counts.len() as f64;
        for &v in values {
            let i = (((v - lo) / width) as usize).min(counts.len() - 1);
            counts[i] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct HistReport {
    pub inputs: Histogram,
    pub ideal: Histogram,
    pub device: Histogram,
    /// Mean absolute deviation between device and ideal outputs.
    pub mad: f64,
    pub ideal_out: Matrix,
    pub device_out: Matrix,
}

/// Feeds `x` to one layer and compares the ideal weighted sum with the
/// naive crossbar output under nonlinearity `k`.
pub fn layer_response(model: &MlpModel, layer: usize, x: &Matrix, k: f64) -> Result<HistReport> {
    layer_response_with(model, layer, x, k, NaiveScheme::Differential)
}

pub fn layer_response_with(
    model: &MlpModel,
    layer: usize,
    x: &Matrix,
    k: f64,
    scheme: NaiveScheme,
) -> Result<HistReport> {
    let w = model
        .weights()
        .get(layer)
        .ok_or_else(|| Error::Shape(format!("layer {layer} out of range for {} layers", model.layer_count())))?;
    if x.cols() != w.rows() {
        return Err(Error::Shape(format!("inputs of width {} for layer with {} rows", x.cols(), w.rows())));
    }
    let ideal = x.matmul(w)?;
    let device = SinhDevice::with_b(b_for_k(k)?)?;
    let dev = naive_layer_with(w, &device, x, scheme)?;
    let n = ideal.as_slice().len().max(1) as f64;
    let mad = ideal
        .as_slice()
        .iter()
        .zip(dev.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n;
    Ok(HistReport {
        inputs: Histogram::new(x.as_slice(), HIST_BINS),
        ideal: Histogram::new(ideal.as_slice(), HIST_BINS),
        device: Histogram::new(dev.as_slice(), HIST_BINS),
        mad,
        ideal_out: ideal,
        device_out: dev,
    })
}

/// Layer inputs for a histogram run.
pub fn hist_inputs(
    model: &MlpModel,
    layer: usize,
    source: HistSource,
    count: usize,
    seed: u64,
    test: Option<&Dataset>,
) -> Result<Matrix> {
    if layer >= model.layer_count() {
        return Err(Error::Shape(format!(
            "layer {layer} out of range for {} layers",
            model.layer_count()
        )));
    }
    let width = model.dims()[layer];
    match source {
        HistSource::SynthA => synth_distribution(SynthKind::A, count, width, seed),
        HistSource::SynthB => synth_distribution(SynthKind::B, count, width, seed),
        HistSource::Dataset => {
            let test = test.ok_or(Error::EmptyDataset)?;
            let idx: Vec<usize> = (0..count.min(test.len())).collect();
            let (x, _) = test.batch(&idx);
            model.layer_input(&x, layer)
        }
    }
}

/// Writes `hist_<source>_layer<L>.csv` (`series,bin,lo,hi,count`) and
/// `outputs_<source>_layer<L>.csv` (`sample,unit,ideal,device`).
pub fn cmd_hist(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    layer: usize,
    source: HistSource,
    count: usize,
) -> Result<HistReport> {
    let model = MlpModel::load(checkpoint)?;
    let test = match source {
        HistSource::Dataset => Some(load_data(cfg)?.test),
        _ => None,
    };
    let x = hist_inputs(&model, layer, source, count, cfg.seed, test.as_ref())?;
    let report = layer_response_with(&model, layer, &x, cfg.k, cfg.naive_scheme)?;
    let mut meta = vec![
        ("seed", cfg.seed.to_string()),
        ("checkpoint", checkpoint.display().to_string()),
        ("layer", layer.to_string()),
        ("source", source.name().to_string()),
        ("k", fmt_k(cfg.k)),
        ("naive_scheme", cfg.naive_scheme.name().to_string()),
        ("samples", x.rows().to_string()),
    ];
    meta.push(("mad", format!("{:.9e}", report.mad)));
    let mut csv = Csv::new(&meta, "series,bin,lo,hi,count");
    for (name, h) in [("input", &report.inputs), ("ideal", &report.ideal), ("device", &report.device)] {
        for (i, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.edges(i);
            csv.row(&[name.to_string(), i.to_string(), format!("{lo:.9e}"), format!("{hi:.9e}"), c.to_string()]);
        }
    }
    let stem = format!("{}_layer{layer}", source.name());
    csv.save(&cfg.out_dir.join(format!("hist_{stem}.csv")))?;
    let mut out = Csv::new(&meta, "sample,unit,ideal,device");
    for n in 0..report.ideal_out.rows() {
        for j in 0..report.ideal_out.cols() {
            out.row(&[
                n.to_string(),
                j.to_string(),
                format!("{:.9e}", report.ideal_out.get(n, j)),
                format!("{:.9e}", report.device_out.get(n, j)),
            ]);
        }
    }
    out.save(&cfg.out_dir.join(format!("outputs_{stem}.csv")))?;
    Ok(report)
}

/// One row of the summary table: accuracies in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub preset: Preset,
    pub dims: Vec<usize>,
    pub ideal: f64,
    pub naive: f64,
    pub proposed: f64,
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<14} ideal {:6.2}  naive {:6.2}  proposed {:6.2}",
            self.preset.name(),
            self.ideal,
            self.naive,
            self.proposed
        )
    }
}

/// Ideal, naive-mapped and device-aware accuracy for one preset at `cfg.k`.
pub fn table_row(cfg: &ExperimentConfig) -> Result<TableRow> {
    let data = load_data(cfg)?;
    let (ideal_model, _) = train_model(cfg, TransferKind::LinearWeightedSum, &data)?;
    let ideal = accuracy(&ideal_model, &data.test)?;
    let naive = naive_accuracy_with(&ideal_model, cfg.k, &data.test, cfg.naive_scheme)?;
    let (proposed_model, _) = train_model(cfg, TransferKind::sinh(b_for_k(cfg.k)?)?, &data)?;
    let proposed = crossbar_accuracy(&proposed_model, &data.test)?;
    Ok(TableRow {
        preset: cfg.preset,
        dims: cfg.dims(),
        ideal: 100.0 * ideal,
        naive: 100.0 * naive,
        proposed: 100.0 * proposed,
    })
}

/// Writes `table1.csv` with `network,dims,scale,ideal,naive,proposed`.
pub fn cmd_table1(cfg: &ExperimentConfig) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    let mut meta = vec![
        ("seed", cfg.seed.to_string()),
        ("scale", cfg.scale.name().to_string()),
        ("k", fmt_k(cfg.k)),
        ("naive_scheme", cfg.naive_scheme.name().to_string()),
    ];
    if cfg.scale == Scale::Desk {
        meta.push(("note", "desk-scale substitutes for deep-mnist and shallow-cifar".to_string()));
    }
    let mut csv = Csv::new(&meta, "network,dims,scale,ideal,naive,proposed");
    for preset in [Preset::ShallowMnist, Preset::DeepMnist, Preset::ShallowCifar] {
        let mut pc = cfg.clone().with_preset(preset, cfg.scale);
        pc.custom_dims = None;
        let row = table_row(&pc)?;
        log::info!("{row}");
        let scale = if preset == Preset::ShallowMnist { "paper" } else { cfg.scale.name() };
        csv.row(&[
            preset.name().to_string(),
            dims_string(&row.dims),
            scale.to_string(),
            format!("{:.2}", row.ideal),
            format!("{:.2}", row.naive),
            format!("{:.2}", row.proposed),
        ]);
        rows.push(row);
    }
    csv.save(&cfg.out_dir.join("table1.csv"))?;
    Ok(rows)
}

/// Pass bound for each transfer's gradient check.
pub fn gradcheck_bound(transfer: &TransferKind) -> f64 {
    match transfer {
        TransferKind::LinearWeightedSum => 1e-6,
        _ => 1e-4,
    }
}

/// Gradient check on a random 10-8-4 model; returns the report and whether
/// it is within bounds.
pub fn cmd_gradcheck(transfer: TransferKind, seed: u64) -> Result<(GradCheckReport, bool)> {
    let (model, x, labels) = gradcheck_fixture(&[10, 8, 4], transfer, 8, seed)?;
    let report = grad_check(&model, &x, &labels, default_eps(&transfer), seed)?;
    let ok = report.passes(gradcheck_bound(&transfer));
    Ok((report, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_expand_to_published_dims() {
        assert_eq!(Preset::ShallowMnist.dims(Scale::Paper), vec![784, 500, 250, 10]);
        assert_eq!(
            Preset::DeepMnist.dims(Scale::Paper),
            vec![784, 2500, 2000, 1500, 1000, 500, 10]
        );
        assert_eq!(Preset::ShallowCifar.dims(Scale::Desk), vec![2352, 4000, 1000, 4000, 10]);
        assert_eq!(Preset::DeepMnist.dims(Scale::Desk), vec![784, 512, 512, 512, 256, 128, 10]);
        assert_eq!(Preset::parse("deep-mnist").unwrap(), Preset::DeepMnist);
        assert!(Preset::parse("vgg").is_err());
    }

    #[test]
    fn schedule_in_normalized_units() {
        let c = ExperimentConfig::new(Preset::ShallowMnist, Scale::Paper);
        assert_eq!((c.epochs, c.lr_drop_epoch), (30, 16));
        assert!((c.lr - 0.1).abs() < 1e-15 && (c.lr_after - 0.02).abs() < 1e-15);
        let t = c.train_config(&TransferKind::sinh(4.0).unwrap(), 1.0);
        assert!((t.lr_initial * 4f64.sinh().powi(2) - 0.1).abs() < 1e-12);
        let c = ExperimentConfig::new(Preset::ShallowCifar, Scale::Desk);
        assert_eq!(c.train_subset, Some(CIFAR_DESK_SUBSET));
        assert_eq!(c.epochs, 10);
    }

    #[test]
    fn k_mapping() {
        assert_eq!(b_for_k(2.0).unwrap(), LINEAR_LIMIT_B);
        assert!((b_for_k(7.524391382167263).unwrap() - 4.0).abs() < 1e-9);
        assert!(b_for_k(1.5).is_err());
        assert_eq!(parse_k_list("2, 7.5,15").unwrap(), vec![2.0, 7.5, 15.0]);
        assert!(parse_k_list("2,x").is_err());
        assert_eq!(parse_dims("784-100-10").unwrap(), vec![784, 100, 10]);
        assert!(parse_dims("784").is_err() && parse_dims("784-0-10").is_err());
    }

    #[test]
    fn config_section_overrides() {
        let file = ConfigFile::parse(
            "[experiment]\npreset = deep-mnist\nscale = desk\nseed = 9\nlr = 0.05\nk_list = 2,4\ninit = glorot\n",
        )
        .unwrap();
        let mut c = ExperimentConfig::new(Preset::ShallowMnist, Scale::Paper);
        c.apply_section(file.section("experiment").unwrap()).unwrap();
        assert_eq!(c.preset, Preset::DeepMnist);
        assert_eq!(c.seed, 9);
        assert_eq!(c.lr, 0.05);
        assert_eq!(c.epochs, 10);
        assert_eq!(c.k_list, vec![2.0, 4.0]);
        assert_eq!(c.init, InitScale::Glorot);
        assert_eq!(parse_init("calibrated").unwrap(), InitScale::Calibrated(CALIBRATION_SD));
        let bad = ConfigFile::parse("[experiment]\nbogus = 1\n").unwrap();
        assert!(c.apply_section(bad.section("experiment").unwrap()).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = Histogram::new(&[0.0, 0.0, 0.0], HIST_BINS);
        assert_eq!(h.counts, vec![3]);
        let h = Histogram::new(&[0.0, 0.5, 1.0, 1.0], 2);
        assert_eq!(h.counts, vec![1, 3]);
        assert_eq!(h.edges(1), (0.5, 1.0));
    }

    #[test]
    fn zero_input_gives_zero_outputs() {
        let model = init_model(&[6, 5, 3], TransferKind::LinearWeightedSum, InitScale::Glorot, 1).unwrap();
        let r = layer_response(&model, 1, &Matrix::zeros(4, 5), 7.5).unwrap();
        assert!(r.ideal_out.as_slice().iter().all(|&v| v == 0.0));
        assert!(r.device_out.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(r.device.counts.len(), 1);
        assert_eq!(r.mad, 0.0);
        assert!(layer_response(&model, 2, &Matrix::zeros(4, 3), 7.5).is_err());
    }

    #[test]
    fn synthetic_a_tracks_ideal_better_than_b() {
        let model = init_model(&[64, 64, 10], TransferKind::LinearWeightedSum, InitScale::Glorot, 3).unwrap();
        let a = hist_inputs(&model, 1, HistSource::SynthA, 500, 1, None).unwrap();
        let b = hist_inputs(&model, 1, HistSource::SynthB, 500, 1, None).unwrap();
        let ra = layer_response(&model, 1, &a, 7.5).unwrap();
        let rb = layer_response(&model, 1, &b, 7.5).unwrap();
        assert!(rb.mad > ra.mad, "{} vs {}", rb.mad, ra.mad);
    }

    #[test]
    fn gradcheck_command_passes() {
        for t in [
            TransferKind::LinearWeightedSum,
            TransferKind::sinh(4.0).unwrap(),
            TransferKind::complex_default(),
        ] {
            let (report, ok) = cmd_gradcheck(t, 1).unwrap();
            assert!(ok, "{report}");
        }
    }

    #[test]
    fn train_writes_outputs_and_zero_epochs_keeps_init() {
        let dir = tempfile::tempdir().unwrap();
        let mnist = dir.path().join("mnist");
        std::fs::create_dir_all(&mnist).unwrap();
        // Ten 28x28 images, one per class.
        let write_idx = |name: &str, magic: u32, dims: &[u32], payload: Vec<u8>| {
            let mut v = magic.to_be_bytes().to_vec();
            for d in dims {
                v.extend_from_slice(&d.to_be_bytes());
            }
            v.extend(payload);
            std::fs::write(mnist.join(name), v).unwrap();
        };
        let pixels: Vec<u8> = (0..10 * 784).map(|i| ((i * 37) % 256) as u8).collect();
        let labels: Vec<u8> = (0..10).collect();
        for split in ["train", "t10k"] {
            write_idx(&format!("{split}-images-idx3-ubyte"), 2051, &[10, 28, 28], pixels.clone());
            write_idx(&format!("{split}-labels-idx1-ubyte"), 2049, &[10], labels.clone());
        }
        let mut cfg = ExperimentConfig::new(Preset::ShallowMnist, Scale::Paper);
        cfg.data_dir = dir.path().to_path_buf();
        cfg.out_dir = dir.path().join("out");
        cfg.epochs = 0;
        cfg.transfer = TransferChoice::Linear;
        let out = cmd_train(&cfg).unwrap();
        let saved = MlpModel::load(&out.checkpoint).unwrap();
        let data = load_data(&cfg).unwrap();
        let init = initial_model(&cfg, TransferKind::LinearWeightedSum, &data).unwrap();
        assert_eq!(saved, init);
        let csv = std::fs::read_to_string(&out.history_csv).unwrap();
        assert!(csv.starts_with("# seed=1\n"));
        assert!(csv.contains("epoch,train_loss,test_accuracy"));

        cfg.epochs = 1;
        cfg.k_list = vec![2.0, 7.5];
        let out = cmd_train(&cfg).unwrap();
        let rows = cmd_sweep_naive(&cfg, &out.checkpoint).unwrap();
        assert_eq!(rows[0].extra, 0.0);
        let first = std::fs::read(cfg.out_dir.join("sweep_naive.csv")).unwrap();
        cmd_sweep_naive(&cfg, &out.checkpoint).unwrap();
        assert_eq!(first, std::fs::read(cfg.out_dir.join("sweep_naive.csv")).unwrap());
        assert!(matches!(
            cmd_sweep_naive(&cfg, &dir.path().join("missing.ckpt")),
            Err(Error::Io { .. })
        ));
    }
}
