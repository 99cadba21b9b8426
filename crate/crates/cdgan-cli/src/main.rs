//! Command-line entry points wiring configs to the trainer, metrics, and
//! the ablation sweep. The config file is the source of truth; flags are
//! overrides on top of it.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cdgan::ablate::ablate;
use cdgan::data::{load_and_preprocess, load_dataset_sized, make_toy_dataset, DatasetManifest};
use cdgan::error::Error;
use cdgan::image::PairedSample;
use cdgan::metrics::{backbone_from_spec, evaluate};
use cdgan::networks::NetworkProfile;
use cdgan::presets::PresetName;
use cdgan::trainer::{
    infer, resume, train, Direction, TrainConfig, TrainState,
};
use cdgan::verify;

#[derive(Parser)]
#[command(name = "cdgan", version, about = "Cyclic-discriminative GAN toolkit for paired image-to-image transformation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset under a loss preset
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split
    Eval(EvalArgs),
    /// Translate one image through a checkpoint
    Infer(InferArgs),
    /// Train and evaluate the nine-configuration loss-ablation sweep
    Ablate(AblateArgs),
    /// Run the built-in verification suite
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct CommonTrainArgs {
    /// TOML config file (single source of truth; flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Loss preset (gan|pix2pix|dualgan|cyclegan|ps2gan|csgan|cdgan|dualgan+|cyclegan+|ps2gan+|csgan+)
    #[arg(long)]
    preset: Option<String>,
    /// Dataset: `toy` or a dataset-manifest TOML path
    #[arg(long)]
    dataset: Option<String>,
    /// Network profile (full|test)
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total epochs to train
    #[arg(long)]
    epochs: Option<usize>,
    /// Output run directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generic overrides of documented config keys, e.g. --set train.base_lr=1e-4
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// Resume from a checkpoint instead of starting fresh
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset: `toy` or a dataset-manifest TOML path
    #[arg(long)]
    dataset: String,
    /// Translation direction (a2b|b2a)
    #[arg(long, default_value = "a2b")]
    direction: String,
    /// LPIPS backbone (random | random:<seed> | archive:<path>)
    #[arg(long, default_value = "random")]
    lpips: String,
    /// Where to write report.tsv (defaults next to the checkpoint)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset overrides, e.g. --set dataset.size=32
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input image file
    #[arg(long)]
    input: PathBuf,
    /// Output image file (PNG)
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "a2b")]
    direction: String,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: CommonTrainArgs,
    /// Run the sweep's sub-experiments on separate threads
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Restrict to one check group (losses, gradients, architecture,
    /// schedule, metric-consistency, metric-axioms, presets, convergence,
    /// determinism, ablation)
    #[arg(long)]
    only: Option<String>,
}

/// Dataset half of the run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DatasetConfig {
    Toy {
        #[serde(default = "default_toy_count")]
        count: usize,
        #[serde(default = "default_toy_size")]
        size: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_toy_holdout")]
        holdout: usize,
    },
    Manifest {
        path: PathBuf,
        #[serde(default = "default_image_size")]
        image_size: usize,
    },
}

fn default_toy_count() -> usize {
    64
}
fn default_toy_size() -> usize {
    64
}
fn default_toy_holdout() -> usize {
    16
}
fn default_image_size() -> usize {
    256
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Toy {
            count: default_toy_count(),
            size: default_toy_size(),
            seed: 0,
            holdout: default_toy_holdout(),
        }
    }
}

/// The full run configuration: training settings plus the dataset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    train: TrainConfig,
    dataset: DatasetConfig,
}

/// Loads the config file (or defaults), applies the `--dataset` flag and
/// `--set key=value` overrides onto the TOML tree, then the dedicated
/// flags.
fn resolve_config(common: &CommonTrainArgs) -> anyhow::Result<RunConfig> {
    let mut tree: toml::Value = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            text.parse()?
        }
        None => toml::Value::Table(Default::default()),
    };
    if let Some(dataset) = &common.dataset {
        apply_dataset_flag(&mut tree, dataset)?;
    }
    for set in &common.sets {
        apply_set(&mut tree, set)?;
    }
    let mut cfg: RunConfig = tree.try_into().map_err(|e| Error::Config(e.to_string()))?;

    if let Some(preset) = &common.preset {
        cfg.train.preset = PresetName::parse(preset)?;
    }
    if let Some(profile) = &common.profile {
        cfg.train.profile = NetworkProfile::parse(profile)?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = common.epochs {
        cfg.train.epochs_total = epochs;
        cfg.train.epochs_constant_lr = cfg.train.epochs_constant_lr.min(epochs);
    }
    cfg.train.validate()?;
    Ok(cfg)
}

/// Interprets an override value with TOML scalar syntax, falling back to
/// a bare string (`cdgan` needs no quotes).
fn parse_toml_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    if let Ok(parsed) = doc.parse::<toml::Value>() {
        if let Some(v) = parsed.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

/// `--dataset toy` keeps any existing toy settings; a path switches the
/// dataset to that manifest.
fn apply_dataset_flag(tree: &mut toml::Value, flag: &str) -> anyhow::Result<()> {
    let table = tree
        .as_table_mut()
        .ok_or_else(|| Error::Config("config root is not a table".into()))?;
    let dataset = table
        .entry("dataset".to_string())
        .or_insert(toml::Value::Table(Default::default()));
    let dataset = dataset
        .as_table_mut()
        .ok_or_else(|| Error::Config("dataset config is not a table".into()))?;
    if flag == "toy" {
        if dataset.get("kind").and_then(|k| k.as_str()) != Some("toy") {
            dataset.clear();
        }
        dataset.insert("kind".into(), toml::Value::String("toy".into()));
    } else {
        dataset.clear();
        dataset.insert("kind".into(), toml::Value::String("manifest".into()));
        dataset.insert("path".into(), toml::Value::String(flag.to_string()));
    }
    Ok(())
}

/// Applies one `a.b.c=value` override onto a TOML tree.
fn apply_set(tree: &mut toml::Value, set: &str) -> anyhow::Result<()> {
    let (key, raw_value) = set
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{set}` is not KEY=VALUE")))?;
    let value = parse_toml_scalar(raw_value);
    let mut cursor = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            break;
        }
        cursor = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}

/// (train split, test split)
fn load_splits(cfg: &DatasetConfig) -> anyhow::Result<(Vec<PairedSample>, Vec<PairedSample>)> {
    match cfg {
        DatasetConfig::Toy {
            count,
            size,
            seed,
            holdout,
        } => {
            let train = make_toy_dataset(*count, *size, *seed)?;
            let test = make_toy_dataset(*holdout, *size, seed.wrapping_add(1))?;
            Ok((train, test))
        }
        DatasetConfig::Manifest { path, image_size } => {
            let manifest = DatasetManifest::from_file(path)?;
            Ok(load_dataset_sized(&manifest, *image_size)?)
        }
    }
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = resolve_config(&args.common)?;
    let (train_set, _) = load_splits(&cfg.dataset)?;
    let out = args.common.out.as_deref();
    let (_, log) = match &args.resume {
        Some(ckpt) => {
            let (state, log, _) = resume(ckpt, &train_set, out)?;
            (state, log)
        }
        None => train(&cfg.train, &train_set, out)?,
    };
    if let Some(last) = log.last() {
        println!(
            "trained {} steps to epoch {}; final total_g {:.4}, total_d_a {:.4}, total_d_b {:.4}",
            log.len(),
            last.epoch + 1,
            last.report.total_generator,
            last.report.total_discriminator_a,
            last.report.total_discriminator_b,
        );
    }
    if let Some(dir) = out {
        println!("run directory: {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let (state, _cfg) = TrainState::load(&args.checkpoint)?;
    let mut tree = toml::Value::Table(Default::default());
    apply_dataset_flag(&mut tree, &args.dataset)?;
    for set in &args.sets {
        apply_set(&mut tree, set)?;
    }
    let run_cfg: RunConfig = tree.try_into().map_err(|e| Error::Config(e.to_string()))?;
    let (_, test_set) = load_splits(&run_cfg.dataset)?;
    let direction = Direction::parse(&args.direction)?;
    let backbone = backbone_from_spec(&args.lpips)?;
    let report = evaluate(&state, &test_set, direction, backbone.as_ref())?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.checkpoint.with_extension("report.tsv"));
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&out, report.to_tsv())?;
    println!(
        "{} images: ssim {:.4}, mse {:.4}, psnr {:.4}, lpips {:.4} (report: {})",
        report.rows.len(),
        report.mean_ssim,
        report.mean_mse,
        report.mean_psnr,
        report.mean_lpips,
        out.display()
    );
    Ok(())
}

fn cmd_infer(args: &InferArgs) -> anyhow::Result<()> {
    let (state, _) = TrainState::load(&args.checkpoint)?;
    let input = load_and_preprocess(&args.input)?;
    let direction = Direction::parse(&args.direction)?;
    let output = infer(&state, &input, direction)?;
    let (bytes, clamped) = output.denormalized();
    if clamped > 0 {
        eprintln!("warning: {clamped} output values clamped to [0, 255]");
    }
    save_byte_image(&bytes, &args.output)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn save_byte_image(img: &cdgan::ImageTensor, path: &Path) -> anyhow::Result<()> {
    let (c, h, w) = img.shape();
    anyhow::ensure!(c == 3, "expected a 3-channel image");
    let data = img.data();
    let mut canvas = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            canvas.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([
                    data[(0, y, x)].round() as u8,
                    data[(1, y, x)].round() as u8,
                    data[(2, y, x)].round() as u8,
                ]),
            );
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    canvas.save(path)?;
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> anyhow::Result<()> {
    let cfg = resolve_config(&args.common)?;
    let (train_set, test_set) = load_splits(&cfg.dataset)?;
    let table = ablate(
        &cfg.train,
        &train_set,
        &test_set,
        args.common.out.as_deref(),
        args.parallel,
    )?;
    print!("{}", table.to_tsv());
    if let Some(dir) = &args.common.out {
        println!("artifacts under {}", dir.display());
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<bool> {
    let results = verify::run(args.only.as_deref())?;
    let mut all_ok = true;
    for r in &results {
        println!("{}", r.line());
        all_ok &= r.passed;
    }
    println!(
        "{}: {} of {} checks passed",
        if all_ok { "OK" } else { "FAILED" },
        results.iter().filter(|r| r.passed).count(),
        results.len()
    );
    Ok(all_ok)
}

/// Usage-level problems (bad config, missing dataset) exit with 2;
/// runtime failures with 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_))
        | Some(Error::Dataset(_))
        | Some(Error::UnknownPreset(_))
        | Some(Error::Io(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(args) => cmd_train(args).map(|_| true),
        Command::Eval(args) => cmd_eval(args).map(|_| true),
        Command::Infer(args) => cmd_infer(args).map(|_| true),
        Command::Ablate(args) => cmd_ablate(args).map(|_| true),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
