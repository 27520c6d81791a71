//! The `hammock` command line: fit bins, train and evaluate models,
//! compile ensembles to step networks, and verify equivalence.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numeric failure
//! during training. Final stdout lines are machine-readable
//! (`accuracy=<float>`, or a JSON report for `verify`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binning::fit_binning;
use crate::dataio::{self, CsvOptions, Dataset, LabelColumn};
use crate::model_file::{self, LoadedModel, ModelMetadata};
use crate::netconvert::{convert_ensemble, verify_equivalence};
use crate::nn::{self, ArchConfig, MlpModel, NnError, OutputLink, TrainConfig};
use crate::trees::parse_ensemble;

#[derive(Parser)]
#[command(
    name = "hammock",
    about = "Tree-ensemble compilation to step networks and quantized one-hot MLP training",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-feature quantile bin boundaries from a CSV
    Bins(BinsArgs),
    /// Train a model and report test accuracy
    Train(TrainArgs),
    /// Evaluate a saved model on a CSV
    Eval(EvalArgs),
    /// Compile an ensemble JSON into a step-network model file
    Convert(ConvertArgs),
    /// Check a compiled network against its source ensemble
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CsvArgs {
    /// Field delimiter
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Treat the first CSV row as a header
    #[arg(long)]
    header: bool,
    /// Label column: a 0-based index, a header name, or "last"
    #[arg(long = "label-col", default_value = "last")]
    label_col: String,
}

impl CsvArgs {
    fn to_options(&self) -> Result<CsvOptions, CliError> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::usage(
                "--delimiter must be a single ASCII character",
            ));
        }
        let label_column = if self.label_col == "last" {
            LabelColumn::Last
        } else if let Ok(index) = self.label_col.parse::<usize>() {
            LabelColumn::Index(index)
        } else {
            LabelColumn::Name(self.label_col.clone())
        };
        Ok(CsvOptions {
            delimiter: self.delimiter as u8,
            has_header: self.header,
            label_column,
        })
    }
}

#[derive(Args)]
struct BinsArgs {
    /// Training CSV
    #[arg(long)]
    data: PathBuf,
    /// Requested bins per feature
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Where to write the binning JSON (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Arch {
    #[value(name = "hammock")]
    Hammock,
    #[value(name = "lr-nn")]
    LrNn,
    #[value(name = "nn-1l")]
    Nn1l,
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV
    #[arg(long)]
    data: PathBuf,
    /// Test CSV sharing the training label set
    #[arg(long)]
    test: Option<PathBuf>,
    /// Model family
    #[arg(long, value_enum)]
    arch: Arch,
    /// Hidden-layer width (ignored by lr-nn)
    #[arg(long, default_value_t = 1000)]
    hidden: usize,
    /// Quantile bins per feature (hammock only)
    #[arg(long)]
    bins: Option<usize>,
    /// Dropout rate on hidden outputs
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Master seed; init, shuffling, and dropout masks derive from it
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// L1 penalty on weights
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
    /// L2 penalty on weights
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    /// Fraction of training rows held out for early stopping (0 disables)
    #[arg(long = "val-fraction", default_value_t = 0.0)]
    val_fraction: f64,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 20)]
    patience: usize,
    /// Worker threads per batch (HAMMOCK_THREADS as fallback, default 1)
    #[arg(long)]
    threads: Option<usize>,
    /// Where to write the trained model
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Model file written by train
    #[arg(long)]
    model: PathBuf,
    /// CSV to score
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args)]
struct ConvertArgs {
    /// Ensemble JSON document
    #[arg(long)]
    ensemble: PathBuf,
    /// Firing margin for hidden-node biases
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Where to write the step-network model file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Ensemble JSON document
    #[arg(long)]
    ensemble: PathBuf,
    /// Step-network model file produced by convert
    #[arg(long)]
    network: PathBuf,
    /// Number of uniform random inputs to check
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampling range per feature, "lo:hi"
    #[arg(long, default_value = "0:1", allow_hyphen_values = true)]
    range: String,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

macro_rules! impl_usage_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::usage(e.to_string())
            }
        }
    )*};
}

impl_usage_error!(
    crate::dataio::DataError,
    crate::trees::EnsembleError,
    crate::trees::EvalError,
    crate::binning::BinError,
    crate::netconvert::ConvertError,
    crate::model_file::ModelFileError
);

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NumericOverflow => CliError::numeric(e.to_string()),
            other => CliError::usage(other.to_string()),
        }
    }
}

/// Parse arguments from the process environment and run one subcommand.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bins(args) => cmd_bins(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Convert(args) => cmd_convert(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_bins(args: BinsArgs) -> Result<(), CliError> {
    let ds = dataio::load_csv(&args.data, &args.csv.to_options()?)?;
    let spec = fit_binning(ds.features(), ds.num_features(), args.bins)?;
    for f in 0..spec.num_features() {
        eprintln!(
            "feature {f}: {} boundaries, {} bins",
            spec.boundaries(f).len(),
            spec.num_bins(f)
        );
    }
    let json = serde_json::to_string_pretty(&spec).expect("binning serialization cannot fail");
    match &args.out {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    eprintln!("total one-hot width: {}", spec.total_onehot_width());
    Ok(())
}

fn output_link_for(ds: &Dataset) -> Result<OutputLink, CliError> {
    match ds.num_classes() {
        0 | 1 => Err(CliError::usage(
            "training data must contain at least two classes",
        )),
        2 => Ok(OutputLink::Sigmoid),
        k => Ok(OutputLink::Softmax(k)),
    }
}

fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("HAMMOCK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
    .max(1)
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let options = args.csv.to_options()?;
    let train_ds = dataio::load_csv(&args.data, &options)?;
    let test_ds = match &args.test {
        Some(path) => Some(dataio::load_csv_with_classes(
            path,
            &options,
            train_ds.class_names(),
        )?),
        None => None,
    };
    let link = output_link_for(&train_ds)?;

    let (arch_name, arch) = match args.arch {
        Arch::Hammock => {
            let bins = args.bins.unwrap_or(50);
            let spec = fit_binning(train_ds.features(), train_ds.num_features(), bins)?;
            ("hammock", ArchConfig::hammock(spec, args.hidden, link))
        }
        raw_arch => {
            if args.bins.is_some() {
                return Err(CliError::usage("--bins only applies to --arch hammock"));
            }
            let (mean, std) = train_ds.mean_std();
            match raw_arch {
                Arch::LrNn => ("lr-nn", ArchConfig::lr_nn(mean, std, link)),
                _ => ("nn-1l", ArchConfig::nn_1l(mean, std, args.hidden, link)),
            }
        }
    };

    let mut model = nn::init_model(&arch, args.seed)?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        dropout_rate: args.dropout,
        l1_weight: args.l1,
        l2_weight: args.l2,
        shuffle_seed: args.seed.wrapping_add(1),
        validation_fraction: args.val_fraction,
        patience: Some(args.patience),
        threads: resolve_threads(args.threads),
        ..TrainConfig::default()
    };
    let report = nn::train(&mut model, &train_ds.view(), &config)?;
    for e in 0..report.epochs_run {
        let val = report
            .val_accuracy
            .get(e)
            .map(|v| format!(" val_acc={v:.4}"))
            .unwrap_or_default();
        eprintln!(
            "epoch {}/{}: loss={:.6} train_acc={:.4}{} ({:.2}s)",
            e + 1,
            report.epochs_run,
            report.train_loss[e],
            report.train_accuracy[e],
            val,
            report.epoch_seconds[e],
        );
    }

    if let Some(path) = &args.out {
        let metadata = ModelMetadata {
            arch: Some(arch_name.to_string()),
            seed: Some(args.seed),
            train_config: Some(config.clone()),
            class_names: Some(train_ds.class_names().to_vec()),
            ..ModelMetadata::default()
        };
        model_file::save_model(path, &model, &metadata)?;
        eprintln!("model written to {}", path.display());
    }

    let metrics = match &test_ds {
        Some(test) => nn::evaluate(&model, &test.view())?,
        None => nn::evaluate(&model, &train_ds.view())?,
    };
    println!("loss={}", metrics.mean_loss);
    println!("accuracy={}", metrics.accuracy);
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let (model, metadata) = match model_file::load_model(&args.model)? {
        LoadedModel::Mlp(model, metadata) => (model, metadata),
        LoadedModel::Step(..) => {
            return Err(CliError::usage(
                "step-network files carry raw ensemble scores; use `hammock verify`",
            ));
        }
    };
    let classes = metadata
        .class_names
        .ok_or_else(|| CliError::usage("model file lacks class names in metadata"))?;
    let ds = dataio::load_csv_with_classes(&args.data, &args.csv.to_options()?, &classes)?;
    check_feature_width(&model, &ds)?;
    let metrics = nn::evaluate(&model, &ds.view())?;
    println!("loss={}", metrics.mean_loss);
    println!("accuracy={}", metrics.accuracy);
    Ok(())
}

fn check_feature_width(model: &MlpModel, ds: &Dataset) -> Result<(), CliError> {
    let expected = model.encoding.num_features();
    if ds.num_features() != expected {
        return Err(CliError::usage(format!(
            "model expects {expected} features, data has {}",
            ds.num_features()
        )));
    }
    Ok(())
}

fn read_ensemble(path: &PathBuf) -> Result<crate::trees::TreeEnsemble, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_ensemble(&text)?)
}

fn cmd_convert(args: ConvertArgs) -> Result<(), CliError> {
    let ens = read_ensemble(&args.ensemble)?;
    let net = convert_ensemble(&ens, args.epsilon)?;
    eprintln!(
        "compiled {} trees / {} leaves into {} indicator columns and {} hidden nodes",
        ens.trees().len(),
        ens.total_leaves(),
        net.transform.width(),
        net.hidden_count(),
    );
    let metadata = ModelMetadata {
        epsilon: Some(args.epsilon),
        ..ModelMetadata::default()
    };
    model_file::save_step_network(&args.out, &net, &metadata)?;
    eprintln!("network written to {}", args.out.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let ens = read_ensemble(&args.ensemble)?;
    let net = match model_file::load_model(&args.network)? {
        LoadedModel::Step(net, _) => net,
        LoadedModel::Mlp(..) => {
            return Err(CliError::usage(
                "--network must be a step-network model file",
            ));
        }
    };
    if net.num_features() != ens.num_features() {
        return Err(CliError::usage(format!(
            "feature count mismatch: ensemble has {}, network has {}",
            ens.num_features(),
            net.num_features()
        )));
    }
    if net.hidden_count() != ens.total_leaves() || net.num_trees() != ens.trees().len() {
        return Err(CliError::usage(
            "network structure does not match the ensemble's trees and leaves",
        ));
    }

    let (lo, hi) = parse_range(&args.range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let inputs: Vec<Vec<f64>> = (0..args.samples)
        .map(|_| {
            (0..ens.num_features())
                .map(|_| rng.random_range(lo..hi))
                .collect()
        })
        .collect();
    let report = verify_equivalence(&ens, &net, &inputs, 0.0)?;
    println!(
        "{}",
        serde_json::to_string(&report).expect("report serialization cannot fail")
    );
    Ok(())
}

fn parse_range(range: &str) -> Result<(f64, f64), CliError> {
    let err = || {
        CliError::usage(format!(
            "--range expects \"lo:hi\" with lo < hi, got {range:?}"
        ))
    };
    let (lo, hi) = range.split_once(':').ok_or_else(err)?;
    let lo: f64 = lo.trim().parse().map_err(|_| err())?;
    let hi: f64 = hi.trim().parse().map_err(|_| err())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(err());
    }
    Ok((lo, hi))
}
