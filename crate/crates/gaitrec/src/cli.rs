//! Command-line surface: one binary with `synth`, `train`, `eval`,
//! `export`, and `stream` subcommands. Option precedence is flags, then
//! the `--config` JSON file, then built-in defaults.

use crate::dataset::{
    load_manifest, load_recording, read_recording_csv, save_dataset, ActivityLabel, SynthConfig,
};
use crate::deploy::{export_c_header, format_event, load_bundle, save_bundle, StreamEngine};
use crate::metrics::EvalReport;
use crate::pipeline::{evaluate_bundle, run_training, synth_dataset, TrainOptions};
use crate::windowing::WindowConfig;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

const DEFAULT_SEED: u64 = 42;
const DEFAULT_RATE_HZ: u32 = 100;
const DEFAULT_RECORDINGS_PER_CLASS: usize = 10;
const DEFAULT_DURATION_S: f64 = 10.0;

#[derive(Parser, Debug)]
#[command(
    name = "gaitrec",
    version,
    about = "IMU activity recognition: synthesize data, train, evaluate, export, and stream"
)]
struct Cli {
    /// JSON file supplying default option values (explicit flags win).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labelled dataset plus manifest.
    Synth(SynthArgs),
    /// Train a model bundle from a dataset manifest.
    Train(TrainArgs),
    /// Evaluate a bundle against a dataset manifest.
    Eval(EvalArgs),
    /// Export a quantized bundle as a self-contained C header.
    Export(ExportArgs),
    /// Replay a recording (file or stdin) through a bundle, printing one
    /// block per classification event.
    Stream(StreamArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for the CSV files and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rate_hz: Option<u32>,
    #[arg(long)]
    recordings_per_class: Option<usize>,
    #[arg(long)]
    duration_s: Option<f64>,
    /// Also generate gyroscope channels (6-axis recordings).
    #[arg(long)]
    gyro: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest to train on.
    #[arg(long)]
    manifest: PathBuf,
    /// Bundle output path; sibling artifacts get derived names.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window_ms: Option<u32>,
    #[arg(long)]
    stride_ms: Option<u32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    k_clusters: Option<usize>,
    /// Store int8 quantized weights instead of floats.
    #[arg(long)]
    quantize: bool,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the report JSON; stdout gets the text summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Header output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StreamArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Recording CSV to replay; omit to read the CSV from stdin.
    #[arg(long)]
    input: Option<PathBuf>,
}

/// Optional defaults file; every field may be omitted.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    window_ms: Option<u32>,
    stride_ms: Option<u32>,
    rate_hz: Option<u32>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    k_clusters: Option<usize>,
    quantize: Option<bool>,
    recordings_per_class: Option<usize>,
    duration_s: Option<f64>,
    train_fraction: Option<f64>,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Box<dyn std::error::Error>> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            Ok(serde_json::from_str(&text)
                .map_err(|e| format!("invalid config {}: {e}", p.display()))?)
        }
    }
}

/// Parses and runs; returns the process exit code (0 success, 1 runtime
/// error, 2 usage error).
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args, &config),
        Command::Train(args) => cmd_train(args, &config),
        Command::Eval(args) => cmd_eval(args),
        Command::Export(args) => cmd_export(args),
        Command::Stream(args) => cmd_stream(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn cmd_synth(args: SynthArgs, cfg: &ConfigFile) -> CliResult {
    let seed = args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let rate_hz = args.rate_hz.or(cfg.rate_hz).unwrap_or(DEFAULT_RATE_HZ);
    let n_per_class = args
        .recordings_per_class
        .or(cfg.recordings_per_class)
        .unwrap_or(DEFAULT_RECORDINGS_PER_CLASS);
    let duration_s = args.duration_s.or(cfg.duration_s).unwrap_or(DEFAULT_DURATION_S);
    let ds = synth_dataset(
        &SynthConfig::default(),
        n_per_class,
        duration_s,
        rate_hz,
        seed,
        args.gyro,
    )?;
    let manifest = save_dataset(&ds, &args.out)?;
    println!(
        "wrote {} recordings ({} per class) to {}",
        ds.len(),
        n_per_class,
        manifest.display()
    );
    Ok(())
}

/// Serialized exactly once here so `train` and `eval` emit byte-identical
/// report files.
fn write_report_json(path: &Path, report: &EvalReport) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// `model.bin` → `model.bin.history.csv` and friends.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_train(args: TrainArgs, cfg: &ConfigFile) -> CliResult {
    let defaults = TrainOptions::default();
    let opts = TrainOptions {
        seed: args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        window: WindowConfig {
            window_ms: args
                .window_ms
                .or(cfg.window_ms)
                .unwrap_or(defaults.window.window_ms),
            stride_ms: args
                .stride_ms
                .or(cfg.stride_ms)
                .unwrap_or(defaults.window.stride_ms),
        },
        features: None,
        train_fraction: args
            .train_fraction
            .or(cfg.train_fraction)
            .unwrap_or(defaults.train_fraction),
        epochs: args.epochs.or(cfg.epochs).unwrap_or(defaults.epochs),
        batch_size: args
            .batch_size
            .or(cfg.batch_size)
            .unwrap_or(defaults.batch_size),
        learning_rate: args.lr.or(cfg.lr).unwrap_or(defaults.learning_rate),
        k_clusters: args
            .k_clusters
            .or(cfg.k_clusters)
            .unwrap_or(defaults.k_clusters),
        quantize: args.quantize || cfg.quantize.unwrap_or(false),
    };
    let ds = load_manifest(&args.manifest)?;
    let outcome = run_training(&ds, &opts)?;

    save_bundle(&outcome.bundle, &args.out)?;
    std::fs::write(sibling(&args.out, ".history.csv"), outcome.history.to_csv())?;
    write_report_json(&sibling(&args.out, ".eval.json"), &outcome.report)?;
    let test_manifest = save_dataset(&outcome.test, sibling(&args.out, ".test"))?;

    println!(
        "trained on {} recordings, held out {} (manifest: {})",
        outcome.train_ids.len(),
        outcome.test.len(),
        test_manifest.display()
    );
    println!("bundle: {}", args.out.display());
    print!("{}", outcome.report.render_text());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let bundle = load_bundle(&args.bundle)?;
    let ds = load_manifest(&args.manifest)?;
    let report = evaluate_bundle(&bundle, &ds)?;
    if let Some(out) = &args.out {
        write_report_json(out, &report)?;
    }
    print!("{}", report.render_text());
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CliResult {
    let bundle = load_bundle(&args.bundle)?;
    let header = export_c_header(&bundle)?;
    std::fs::write(&args.out, header)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_stream(args: StreamArgs) -> CliResult {
    let bundle = load_bundle(&args.bundle)?;
    let rate_hz = bundle.rate_hz;
    // The label is irrelevant for replay; inference never reads it.
    let rec = match &args.input {
        Some(path) => load_recording(path, rate_hz, ActivityLabel::Stationary)?,
        None => read_recording_csv(
            std::io::stdin().lock(),
            "stdin",
            rate_hz,
            ActivityLabel::Stationary,
        )?,
    };
    let mut engine = StreamEngine::new(bundle)?;
    let mut stdout = std::io::stdout().lock();
    use std::io::Write;
    for sample in &rec.samples {
        if let Some(event) = engine.push(sample.clone())? {
            write!(stdout, "{}", format_event(&event))?;
        }
    }
    Ok(())
}
