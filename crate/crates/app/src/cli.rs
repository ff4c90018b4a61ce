//! `octx` subcommands.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use octx_core::data::{load_and_preprocess, scan_dataset, split_dataset, write_manifest, SampleRef, SplitOptions, Splits};
use octx_core::net::weights::{load_weights, save_weights, WeightError};
use octx_core::net::LossKind;
use octx_core::synthetic::{write_dataset, write_toy_splits, SyntheticSpec, ToySizes};
use octx_core::train::{evaluate, train_with, OptimizerKind};
use octx_core::OctNet;

use crate::config::{FileConfig, ServiceConfig};
use crate::panels::{render_panels, Method};

#[derive(Debug, Parser)]
#[command(name = "octx", version, about = "Retinal OCT classifier with LIME and Grad-CAM explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a CNV/DME/DRUSEN/NORMAL folder tree.
    Train(TrainArgs),
    /// Print the metrics report of a weights file on a folder tree.
    Evaluate(EvaluateArgs),
    /// Write the explanation panels for one image.
    Explain(ExplainArgs),
    /// Run the HTTP review service.
    Serve(ServeArgs),
    /// Generate a synthetic four-class image set.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Bce,
    Ce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Either class folders, split 60/20/20 per class, or
    /// `train/`, `validation/` and `test/` folders of class folders.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Start from these weights instead of a fresh initialisation.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Keep each patient's images inside one split.
    #[arg(long)]
    pub group_by_patient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    /// Split seed; must match training to recover its test set.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub group_by_patient: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub method: Method,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub top_labels: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub posneg_features: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "explanation")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub storage: Option<PathBuf>,
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_upload_bytes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 224)]
    pub side: u32,
    /// Write `train/`, `validation/` and `test/` at 100/20/20 per class.
    #[arg(long)]
    pub toy: bool,
}

/// Exit status by failure class.
pub mod exit {
    pub const DATA: u8 = 2;
    pub const NUMERIC: u8 = 3;
    pub const IO: u8 = 4;
    pub const OTHER: u8 = 1;
}

fn core_code(e: &octx_core::Error) -> u8 {
    use octx_core::Error as E;
    match e {
        E::NonFiniteLoss { .. } | E::Numeric(_) => exit::NUMERIC,
        E::Io { .. } | E::Weights(_) => exit::IO,
        E::Stage { source, .. } => core_code(source),
        E::Dimension { .. } | E::Parameter(_) | E::Decode { .. } | E::EmptyDataset(_) | E::Split { .. } => exit::DATA,
    }
}

/// Maps an error chain to `exit::*`. The first recognised cause decides.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<octx_core::Error>() {
            return core_code(e);
        }
        if cause.is::<WeightError>() || cause.is::<std::io::Error>() {
            return exit::IO;
        }
        if cause.is::<toml::de::Error>() {
            return exit::DATA;
        }
    }
    exit::OTHER
}

fn load_splits(data: &Path, options: SplitOptions) -> anyhow::Result<Splits> {
    if data.join("train").is_dir() {
        let part = |name: &str| -> anyhow::Result<Vec<SampleRef>> {
            let dir = data.join(name);
            if dir.is_dir() {
                Ok(scan_dataset(&dir)?.samples)
            } else {
                Ok(Vec::new())
            }
        };
        return Ok(Splits {
            train: part("train")?,
            validation: part("validation")?,
            test: part("test")?,
            seed: options.seed,
        });
    }
    Ok(split_dataset(&scan_dataset(data)?, options)?)
}

fn sidecar(weights: &Path, suffix: &str) -> PathBuf {
    let mut name = weights.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    weights.with_file_name(name)
}

fn run_train(args: TrainArgs, file: FileConfig) -> anyhow::Result<()> {
    let mut config = file.train;
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.batch {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.loss {
        config.loss = match v {
            LossArg::Bce => LossKind::BceSigmoid,
            LossArg::Ce => LossKind::SoftmaxCe,
        };
    }
    if let Some(v) = args.optimizer {
        config.optimizer = match v {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Sgd => OptimizerKind::SgdMomentum,
        };
    }
    config.validate()?;
    let splits = load_splits(
        &args.data,
        SplitOptions {
            seed: config.seed,
            group_by_patient: args.group_by_patient,
        },
    )?;
    let net = match &args.init {
        Some(p) => load_weights(p)?,
        None => OctNet::build(config.seed),
    };
    let (net, history) = train_with(net, &splits, &config, |r| {
        eprintln!(
            "epoch {:>3}  train loss {:.4} acc {:.4}{}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            match (r.val_loss, r.val_acc) {
                (Some(l), Some(a)) => format!("  val loss {l:.4} acc {a:.4}"),
                _ => String::new(),
            }
        );
    })?;
    save_weights(&net, &args.out)?;
    history.write_csv(sidecar(&args.out, ".history.csv"))?;
    write_manifest(&splits, sidecar(&args.out, ".split.tsv"))?;
    let (name, held_out) = if splits.test.is_empty() {
        ("validation", &splits.validation)
    } else {
        ("test", &splits.test)
    };
    if held_out.is_empty() {
        log::warn!("no held-out images; skipping the metrics report");
        return Ok(());
    }
    let report = format!("{name} split, {} images\n{}", held_out.len(), evaluate(&net, held_out)?.report());
    let path = sidecar(&args.out, ".report.txt");
    std::fs::write(&path, &report).with_context(|| format!("writing {}", path.display()))?;
    print!("{report}");
    Ok(())
}

fn run_evaluate(args: EvaluateArgs, file: FileConfig) -> anyhow::Result<()> {
    let net = load_weights(&args.weights)?;
    let samples = if args.split == SplitArg::All {
        scan_dataset(&args.data)?.samples
    } else {
        let splits = load_splits(
            &args.data,
            SplitOptions {
                seed: args.seed.unwrap_or(file.train.seed),
                group_by_patient: args.group_by_patient,
            },
        )?;
        match args.split {
            SplitArg::Train => splits.train,
            SplitArg::Validation => splits.validation,
            _ => splits.test,
        }
    };
    print!("{}", evaluate(&net, &samples)?.report());
    Ok(())
}

fn run_explain(args: ExplainArgs, file: FileConfig) -> anyhow::Result<()> {
    let mut params = file.explain;
    if let Some(v) = args.samples {
        params.samples = v;
    }
    if let Some(v) = args.top_labels {
        params.top_labels = v;
    }
    if let Some(v) = args.features {
        params.features = v;
    }
    if let Some(v) = args.posneg_features {
        params.posneg_features = v;
    }
    if let Some(v) = args.seed {
        params.seed = v;
    }
    file.serve
        .bounds
        .check(&params)
        .map_err(octx_core::Error::Parameter)?;
    let net = load_weights(&args.weights)?;
    let image = load_and_preprocess(&args.image)?;
    let set = render_panels(&net, &image, args.method, &params)?;
    for path in set
        .write_to(&args.out)
        .with_context(|| format!("writing panels to {}", args.out.display()))?
    {
        println!("{}", path.display());
    }
    Ok(())
}

fn run_serve(args: ServeArgs, file: FileConfig) -> anyhow::Result<()> {
    let mut config: ServiceConfig = file.serve;
    if let Some(v) = args.weights {
        config.weights = v;
    }
    if let Some(v) = args.listen {
        config.listen = v;
    }
    if let Some(v) = args.storage {
        config.storage = v;
    }
    if let Some(v) = args.ui_dir {
        config.ui_dir = Some(v);
    }
    if let Some(v) = args.max_upload_bytes {
        config.max_upload_bytes = v;
    }
    tokio::runtime::Runtime::new()?.block_on(crate::server::serve(config))
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    if args.toy {
        let splits = write_toy_splits(&args.out, ToySizes::default(), args.seed)?;
        println!(
            "{} train, {} validation, {} test images under {}",
            splits.train.len(),
            splits.validation.len(),
            splits.test.len(),
            args.out.display()
        );
    } else {
        let spec = SyntheticSpec {
            side: args.side,
            ..SyntheticSpec::default()
        };
        let idx = write_dataset(&args.out, args.per_class, args.seed, spec)?;
        println!("{} images under {}", idx.len(), args.out.display());
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::from_env()?;
    match cli.command {
        Command::Train(a) => run_train(a, file),
        Command::Evaluate(a) => run_evaluate(a, file),
        Command::Explain(a) => run_explain(a, file),
        Command::Serve(a) => run_serve(a, file),
        Command::Synth(a) => run_synth(a),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The cause chain joined by ": ", skipping causes the previous message
/// already ends with.
pub fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}
