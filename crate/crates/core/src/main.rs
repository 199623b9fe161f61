use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rramnet::crossbar::NaiveScheme;
use rramnet::data::{fetch, DatasetName};
use rramnet::experiments::{
    self, cmd_gradcheck, parse_dims, parse_init, parse_k_list, transfer_for, ExperimentConfig,
    HistSource, Preset, Scale, TransferChoice,
};
use rramnet::{Result, TransferKind};

#[derive(Parser)]
#[command(name = "rramnet", version, about = "Crossbar inference simulation and device-aware MLP training")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Opts {
    /// Key=value config file with an [experiment] section; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// shallow-mnist | deep-mnist | shallow-cifar
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Custom layer sizes, e.g. 784-300-10.
    #[arg(long, global = true)]
    dims: Option<String>,
    /// desk | paper
    #[arg(long, global = true)]
    scale: Option<String>,
    /// linear | sinh | complex
    #[arg(long, global = true)]
    transfer: Option<String>,
    #[arg(long, global = true)]
    k: Option<f64>,
    /// differential | offset
    #[arg(long, global = true)]
    naive_scheme: Option<String>,
    /// Comma-separated nonlinearities for sweeps.
    #[arg(long, global = true)]
    k_list: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Learning rate in normalized units.
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    lr_drop_epoch: Option<usize>,
    #[arg(long, global = true)]
    lr_after: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// calibrated (default) | glorot | device | normalized | <scale>
    #[arg(long, global = true)]
    init: Option<String>,
    /// Train on a seeded random subset of this many samples.
    #[arg(long, global = true)]
    train_subset: Option<usize>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Download and verify a dataset (mnist | cifar10).
    Fetch { dataset: Vec<String> },
    /// Train one network; writes model.ckpt and history.csv.
    Train,
    /// Evaluate a linear checkpoint through naive crossbars over the k grid.
    SweepNaive {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and crossbar-evaluate a sinh network per k.
    SweepProposed,
    /// Input, ideal and device output histograms for one layer.
    Hist {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        layer: usize,
        /// dataset | a | b
        #[arg(long, default_value = "dataset")]
        source: String,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Ideal, naive and proposed accuracy for the three presets.
    Table1,
    /// Finite-difference gradient check on a random 10-8-4 model.
    Gradcheck,
}

fn build_config(o: &Opts) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(Preset::ShallowMnist, Scale::Desk);
    if let Some(path) = &o.config {
        cfg.load_file(path)?;
    }
    if o.preset.is_some() || o.scale.is_some() {
        let preset = o.preset.as_deref().map_or(Ok(cfg.preset), Preset::parse)?;
        let scale = o.scale.as_deref().map_or(Ok(cfg.scale), Scale::parse)?;
        cfg = cfg.with_preset(preset, scale);
    }
    if let Some(d) = &o.dims {
        cfg.custom_dims = Some(parse_dims(d)?);
    }
    if let Some(t) = &o.transfer {
        cfg.transfer = TransferChoice::parse(t)?;
    }
    if let Some(k) = o.k {
        cfg.k = k;
    }
    if let Some(ks) = &o.k_list {
        cfg.k_list = parse_k_list(ks)?;
    }
    if let Some(s) = &o.naive_scheme {
        cfg.naive_scheme = NaiveScheme::parse(s)?;
    }
    if let Some(i) = &o.init {
        cfg.init = parse_init(i)?;
    }
    macro_rules! set {
        ($($f:ident => $g:ident),*) => {$(if let Some(v) = o.$f.clone() { cfg.$g = v; })*};
    }
    set!(seed => seed, epochs => epochs, lr => lr, lr_after => lr_after,
         lr_drop_epoch => lr_drop_epoch, batch_size => batch_size,
         data_dir => data_dir, out => out_dir);
    if o.train_subset.is_some() {
        cfg.train_subset = o.train_subset;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = build_config(&cli.opts)?;
    match cli.cmd {
        Cmd::Fetch { dataset } => {
            let names = if dataset.is_empty() {
                vec![DatasetName::Mnist, DatasetName::Cifar10]
            } else {
                dataset.iter().map(|d| DatasetName::parse(d)).collect::<Result<_>>()?
            };
            for name in names {
                let r = fetch(name, &cfg.data_dir)?;
                println!("{name:?}: {} files verified, {} downloaded", r.paths.len(), r.downloaded.len());
            }
        }
        Cmd::Train => {
            let out = experiments::cmd_train(&cfg)?;
            println!("test accuracy {:.2}%", 100.0 * out.test_accuracy);
            println!("checkpoint {}", out.checkpoint.display());
            println!("history {}", out.history_csv.display());
        }
        Cmd::SweepNaive { checkpoint } => {
            for r in experiments::cmd_sweep_naive(&cfg, &checkpoint)? {
                println!("k={:<5} accuracy {:6.2}%  loss {:.4}", r.k, 100.0 * r.accuracy, r.extra);
            }
        }
        Cmd::SweepProposed => {
            for r in experiments::cmd_sweep_proposed(&cfg)? {
                println!("k={:<5} accuracy {:6.2}%  crossbar {:6.2}%", r.k, 100.0 * r.accuracy, 100.0 * r.extra);
            }
        }
        Cmd::Hist {
            checkpoint,
            layer,
            source,
            count,
        } => {
            let source = HistSource::parse(&source)?;
            let r = experiments::cmd_hist(&cfg, &checkpoint, layer, source, count)?;
            println!("mean absolute deviation {:.6e}", r.mad);
        }
        Cmd::Table1 => {
            if cfg.scale == Scale::Desk {
                println!("desk scale: deep-mnist and shallow-cifar rows use substitutes");
            }
            for row in experiments::cmd_table1(&cfg)? {
                println!("{row}");
            }
        }
        Cmd::Gradcheck => {
            let transfers: Vec<TransferKind> = match &cli.opts.transfer {
                Some(_) => vec![transfer_for(cfg.transfer, cfg.k)?],
                None => vec![
                    TransferKind::LinearWeightedSum,
                    TransferKind::sinh(4.0)?,
                    TransferKind::complex_default(),
                ],
            };
            let mut all_ok = true;
            for t in transfers {
                let (report, ok) = cmd_gradcheck(t, cfg.seed)?;
                println!("{report}");
                println!("{}: {}", t.name(), if ok { "pass" } else { "FAIL" });
                all_ok &= ok;
            }
            return Ok(all_ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

