//! Command-line surface: ingestion, synthesis, training, evaluation,
//! prediction export, the benchmark grid, gradient verification, and FGSM
//! probing.
//!
//! Exit codes: 0 on success (including `--help`/`--version`), 1 for usage
//! and configuration errors, 2 for data, numeric, and I/O failures. All
//! diagnostic text goes to stderr; stdout carries only the requested
//! machine- or human-readable report.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::benchmark::{
    export_predictions, render_table, run_benchmark, BenchmarkTable, DEFAULT_TRAIN_FRACTION,
};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    chrono_split, counters_to_bps, fit_scaler, forward_fill, make_windows, parse_telemetry_json,
    rates_to_series, read_series_csv, transform, write_series_csv, BpsOptions, CounterBits,
    RawTelemetry, ScalerParams, TimeSeries, WindowedDataset, DEFAULT_SAMPLES_PER_DAY,
};
use crate::data::{synth_generate, DEFAULT_CAPACITY_BPS, DEFAULT_INTERVAL_SECONDS};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradient_suite, suite_passed, DEFAULT_SHAPES_PER_CASE};
use crate::layers::Padding;
use crate::model::{
    build_model, fgsm_perturb, input_gradient, Architecture, ModelConfig, DEFAULT_SEED,
};
use crate::training::{evaluate_both, loss_history_csv, mse_loss, train, DualReport, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Parser)]
#[command(
    name = "netforecast",
    version,
    about = "Internet traffic forecasting: ConvLSTMTransNet and recurrent baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert raw telemetry JSON (counter or rate records) to a bps CSV.
    Ingest(IngestArgs),
    /// Generate a seeded synthetic traffic series as CSV.
    Synth(SynthArgs),
    /// Train one model on the chronological training split; save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the held-out test split.
    Evaluate(EvaluateArgs),
    /// Export actual-versus-predicted CSV over the test split.
    Predict(PredictArgs),
    /// Train and evaluate every model at every window length.
    Benchmark(BenchmarkArgs),
    /// Verify all analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Measure sensitivity to FGSM input perturbations.
    Fgsm(FgsmArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Telemetry JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Destination CSV path.
    #[arg(long)]
    output: PathBuf,
    /// Expected sampling interval in seconds.
    #[arg(long, default_value_t = DEFAULT_INTERVAL_SECONDS)]
    interval: i64,
    /// Counter register width for wrap arithmetic.
    #[arg(long, value_parser = ["32", "64"], default_value = "64")]
    counter_bits: String,
    /// Emit literal per-interval bit counts instead of dividing down to
    /// a per-second rate.
    #[arg(long)]
    no_interval_divide: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of days to generate.
    #[arg(long, default_value_t = 29)]
    days: usize,
    /// Samples per day (288 keeps the 5-minute cadence).
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_DAY)]
    samples_per_day: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Link capacity ceiling in bps.
    #[arg(long, default_value_t = DEFAULT_CAPACITY_BPS)]
    capacity: f64,
    /// Destination CSV path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Input series CSV.
    #[arg(long)]
    data: PathBuf,
    /// Architecture: rnn, lstm, gru, or convlstmtransnet.
    #[arg(long, default_value = "convlstmtransnet")]
    model: String,
    /// Sliding window length.
    #[arg(long, default_value_t = 6)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Chronological share of the series used for training.
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    /// Epoch count; overrides the config file.
    #[arg(long)]
    epochs: Option<usize>,
    /// JSON file with partial hyperparameter overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint destination.
    #[arg(long)]
    output: PathBuf,
    /// Optional per-epoch loss history CSV destination.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    /// Destination CSV path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated window lengths.
    #[arg(long, default_value = "6,12")]
    windows: String,
    /// Comma-separated architectures; defaults to all four.
    #[arg(long)]
    models: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the report here as well as stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Random shapes probed per layer.
    #[arg(long, default_value_t = DEFAULT_SHAPES_PER_CASE)]
    shapes: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Args)]
struct FgsmArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Perturbation magnitude.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

/// Flat partial-override file: any subset of these keys applies on top of
/// the built-in defaults; explicit command-line flags win over the file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigOverrides {
    conv_filters: Option<usize>,
    conv_kernel: Option<usize>,
    recurrent_units: Option<usize>,
    heads: Option<usize>,
    d_ff: Option<usize>,
    dropout_rate: Option<f64>,
    padding: Option<Padding>,
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps_adam: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    shuffle_each_epoch: Option<bool>,
    patience: Option<usize>,
    train_fraction: Option<f64>,
}

impl ConfigOverrides {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config file {}: {e}", path.display())))
    }

    fn apply_model(&self, cfg: &mut ModelConfig) {
        if let Some(v) = self.conv_filters {
            cfg.conv_filters = v;
        }
        if let Some(v) = self.conv_kernel {
            cfg.conv_kernel = v;
        }
        if let Some(v) = self.recurrent_units {
            cfg.recurrent_units = v;
        }
        if let Some(v) = self.heads {
            cfg.heads = v;
        }
        if let Some(v) = self.d_ff {
            cfg.d_ff = v;
        }
        if let Some(v) = self.dropout_rate {
            cfg.dropout_rate = v;
        }
        if let Some(v) = self.padding {
            cfg.padding = v;
        }
    }

    fn apply_train(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.beta1 {
            cfg.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            cfg.beta2 = v;
        }
        if let Some(v) = self.eps_adam {
            cfg.eps_adam = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.shuffle_each_epoch {
            cfg.shuffle_each_epoch = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = Some(v);
        }
    }

    fn train_fraction(&self, flag: f64) -> f64 {
        if flag != DEFAULT_TRAIN_FRACTION {
            flag
        } else {
            self.train_fraction.unwrap_or(flag)
        }
    }
}

/// Entry point for the binary: parses the real argv and maps every outcome
/// onto the exit-code contract.
pub fn run() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    dispatch(&args)
}

/// Parses and executes one invocation. Never panics on user input.
pub fn dispatch(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                // Help and version are requested output, not failures.
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Fgsm(args) => cmd_fgsm(args),
    }
}

fn read_series(path: &Path) -> Result<TimeSeries> {
    read_series_csv(BufReader::new(File::open(path)?))
}

/// Shared held-out preparation: fill, split, window the test side with the
/// checkpoint's scaler. Returns the test dataset and the raw test segment.
fn prepare_test_split(
    series: &TimeSeries,
    train_fraction: f64,
    window: usize,
    scaler: &ScalerParams,
) -> Result<(WindowedDataset, TimeSeries)> {
    let filled = forward_fill(series)?;
    let (_, test_part) = chrono_split(&filled, train_fraction, window)?;
    let dataset = make_windows(
        test_part.timestamps(),
        &transform(&test_part.dense_values()?, scaler),
        window,
    )?;
    Ok((dataset, test_part))
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let mut document = String::new();
    File::open(&args.input)?.read_to_string(&mut document)?;
    let raw = parse_telemetry_json(&document)?;
    let series = match &raw {
        RawTelemetry::Counters { .. } => {
            let opts = BpsOptions {
                interval_seconds: args.interval,
                counter_bits: if args.counter_bits == "32" {
                    CounterBits::B32
                } else {
                    CounterBits::B64
                },
                divide_by_interval: !args.no_interval_divide,
            };
            counters_to_bps(&raw, &opts)?
        }
        RawTelemetry::Rates { .. } => rates_to_series(&raw)?,
    };
    let mut out = File::create(&args.output)?;
    write_series_csv(&series, &mut out)?;
    eprintln!(
        "wrote {} points ({} missing) to {}",
        series.len(),
        series.missing_count(),
        args.output.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let series = synth_generate(args.days, args.samples_per_day, args.seed, args.capacity)?;
    let mut out = File::create(&args.output)?;
    write_series_csv(&series, &mut out)?;
    eprintln!("wrote {} points to {}", series.len(), args.output.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct TrainSummary {
    architecture: Architecture,
    window: usize,
    epochs_run: usize,
    final_loss: Option<f64>,
    checkpoint: String,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let overrides = ConfigOverrides::load(args.config.as_deref())?;
    let architecture: Architecture = args.model.parse()?;
    let mut model_cfg = ModelConfig {
        architecture,
        window_length: args.window,
        seed: args.seed,
        ..ModelConfig::default()
    };
    overrides.apply_model(&mut model_cfg);
    let mut train_cfg = TrainConfig { seed: args.seed, ..TrainConfig::default() };
    overrides.apply_train(&mut train_cfg);
    if let Some(epochs) = args.epochs {
        train_cfg.epochs = epochs;
    }
    let train_fraction = overrides.train_fraction(args.train_fraction);

    let series = read_series(&args.data)?;
    let filled = forward_fill(&series)?;
    let (train_part, _) = chrono_split(&filled, train_fraction, args.window)?;
    let scaler = fit_scaler(&train_part.dense_values()?)?;
    let dataset = make_windows(
        train_part.timestamps(),
        &transform(&train_part.dense_values()?, &scaler),
        args.window,
    )?;

    let mut model = build_model(&model_cfg)?;
    let history = train(&mut model, &dataset, &train_cfg)?;
    save_checkpoint(&model, &scaler, &args.output)?;
    if let Some(path) = &args.history {
        std::fs::write(path, loss_history_csv(&history))?;
    }

    let summary = TrainSummary {
        architecture,
        window: args.window,
        epochs_run: history.len(),
        final_loss: history.last().copied(),
        checkpoint: args.output.display().to_string(),
    };
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).unwrap()),
        Format::Csv => {
            println!("architecture,window,epochs_run,final_loss,checkpoint");
            println!(
                "{},{},{},{},{}",
                summary.architecture,
                summary.window,
                summary.epochs_run,
                summary.final_loss.map_or(String::new(), |l| l.to_string()),
                summary.checkpoint
            );
        }
        Format::Table => {
            println!(
                "trained {} (window {}) for {} epochs, final loss {}",
                summary.architecture,
                summary.window,
                summary.epochs_run,
                summary.final_loss.map_or("n/a".to_string(), |l| format!("{l:.6e}")),
            );
            println!("checkpoint: {}", summary.checkpoint);
        }
    }
    Ok(())
}

fn print_dual_report(report: &DualReport, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report).unwrap()),
        Format::Csv => {
            println!("space,mae,rmse,wape,n");
            for (space, m) in [("bps", report.bps), ("normalized", report.normalized)] {
                println!("{space},{},{},{},{}", m.mae, m.rmse, m.wape, m.n);
            }
        }
        Format::Table => {
            println!(
                "original units (bps):    MAE {:.6e}  RMSE {:.6e}  WAPE {:.2}%  (n = {})",
                report.bps.mae, report.bps.rmse, report.bps.wape, report.bps.n
            );
            println!(
                "normalized [0,1] space:  MAE {:.6e}  RMSE {:.6e}  WAPE {:.2}%  (n = {})",
                report.normalized.mae,
                report.normalized.rmse,
                report.normalized.wape,
                report.normalized.n
            );
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (model, scaler) = load_checkpoint(&args.checkpoint)?;
    let series = read_series(&args.data)?;
    let (dataset, _) = prepare_test_split(
        &series,
        args.train_fraction,
        model.config().window_length,
        &scaler,
    )?;
    let report = evaluate_both(&model, &dataset, &scaler)?;
    print_dual_report(&report, args.format);
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let (model, scaler) = load_checkpoint(&args.checkpoint)?;
    let series = read_series(&args.data)?;
    let (_, test_part) = prepare_test_split(
        &series,
        args.train_fraction,
        model.config().window_length,
        &scaler,
    )?;
    export_predictions(&model, &test_part, &scaler, &args.output)?;
    eprintln!(
        "wrote {} prediction rows to {}",
        test_part.len() - model.config().window_length,
        args.output.display()
    );
    Ok(())
}

fn parse_windows(text: &str) -> Result<Vec<usize>> {
    let mut windows = Vec::new();
    for part in text.split(',') {
        let window: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad window length {part:?}")))?;
        windows.push(window);
    }
    Ok(windows)
}

fn parse_models(text: Option<&str>) -> Result<Vec<Architecture>> {
    match text {
        None => Ok(Architecture::ALL.to_vec()),
        Some(list) => list.split(',').map(|part| part.trim().parse()).collect(),
    }
}

fn benchmark_csv(table: &BenchmarkTable) -> String {
    let mut out = String::from("model,window,space,mae,rmse,wape,n,status\n");
    for cell in &table.cells {
        match &cell.report {
            Some(report) => {
                for (space, m) in [("bps", report.bps), ("normalized", report.normalized)] {
                    out.push_str(&format!(
                        "{},{},{space},{},{},{},{},ok\n",
                        cell.architecture, cell.window, m.mae, m.rmse, m.wape, m.n
                    ));
                }
            }
            None => {
                out.push_str(&format!(
                    "{},{},,,,,,failed\n",
                    cell.architecture, cell.window
                ));
            }
        }
    }
    out
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let overrides = ConfigOverrides::load(args.config.as_deref())?;
    let windows = parse_windows(&args.windows)?;
    let models = parse_models(args.models.as_deref())?;
    let mut model_cfg = ModelConfig { seed: args.seed, ..ModelConfig::default() };
    overrides.apply_model(&mut model_cfg);
    let mut train_cfg = TrainConfig { seed: args.seed, ..TrainConfig::default() };
    overrides.apply_train(&mut train_cfg);
    if let Some(epochs) = args.epochs {
        train_cfg.epochs = epochs;
    }
    let train_fraction = overrides.train_fraction(args.train_fraction);

    let series = read_series(&args.data)?;
    let table = run_benchmark(&series, &windows, &models, &model_cfg, &train_cfg, train_fraction)?;
    let rendered = match args.format {
        Format::Table => render_table(&table),
        Format::Json => table.to_json(),
        Format::Csv => benchmark_csv(&table),
    };
    print!("{rendered}");
    if let Some(path) = &args.output {
        std::fs::write(path, &rendered)?;
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let entries = run_gradient_suite(args.seed, args.shapes)?;
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&entries).unwrap()),
        Format::Csv => {
            println!("case,max_rel_error,max_abs_error,tolerance,passed");
            for e in &entries {
                println!(
                    "{},{},{},{},{}",
                    e.label,
                    e.report.max_rel_error,
                    e.report.max_abs_error,
                    e.report.tolerance,
                    e.report.passed
                );
            }
        }
        Format::Table => {
            for e in &entries {
                println!(
                    "{:22} max rel {:10.3e}  (tolerance {:.0e})  {}",
                    e.label,
                    e.report.max_rel_error,
                    e.report.tolerance,
                    if e.report.passed { "pass" } else { "FAIL" }
                );
            }
        }
    }
    if suite_passed(&entries) {
        Ok(())
    } else {
        Err(Error::Numeric("gradient check failed".into()))
    }
}

#[derive(serde::Serialize)]
struct FgsmSummary {
    epsilon: f64,
    loss_before: f64,
    loss_after: f64,
    delta: f64,
    /// First-order prediction of the loss change: eps * sum |dL/dx|.
    first_order: f64,
    /// |delta - first_order|, which shrinks quadratically in epsilon.
    residual: f64,
    n: usize,
}

fn cmd_fgsm(args: FgsmArgs) -> Result<()> {
    let (model, scaler) = load_checkpoint(&args.checkpoint)?;
    let series = read_series(&args.data)?;
    let (dataset, _) = prepare_test_split(
        &series,
        args.train_fraction,
        model.config().window_length,
        &scaler,
    )?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (windows, targets) = dataset.gather(&all)?;

    let (loss_before, _) = mse_loss(&model.predict(&windows)?, &targets)?;
    let grad = input_gradient(&model, &windows, &targets)?;
    let first_order = args.epsilon * grad.data().iter().map(|g| g.abs()).sum::<f64>();
    let adversarial = fgsm_perturb(&model, &windows, &targets, args.epsilon)?;
    let (loss_after, _) = mse_loss(&model.predict(&adversarial)?, &targets)?;
    let delta = loss_after - loss_before;

    let summary = FgsmSummary {
        epsilon: args.epsilon,
        loss_before,
        loss_after,
        delta,
        first_order,
        residual: (delta - first_order).abs(),
        n: dataset.len(),
    };
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).unwrap()),
        Format::Csv => {
            println!("epsilon,loss_before,loss_after,delta,first_order,residual,n");
            println!(
                "{},{},{},{},{},{},{}",
                summary.epsilon,
                summary.loss_before,
                summary.loss_after,
                summary.delta,
                summary.first_order,
                summary.residual,
                summary.n
            );
        }
        Format::Table => {
            println!("epsilon:      {:.3e}", summary.epsilon);
            println!("loss before:  {:.6e}", summary.loss_before);
            println!("loss after:   {:.6e}", summary.loss_after);
            println!("delta:        {:.6e}", summary.delta);
            println!("first order:  {:.6e}", summary.first_order);
            println!("residual:     {:.6e}", summary.residual);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("netforecast")
            .chain(list.iter().copied())
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(dispatch(&args(&["--help"])), 0);
        assert_eq!(dispatch(&args(&["--version"])), 0);
        assert_eq!(dispatch(&args(&["synth", "--help"])), 0);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(dispatch(&args(&[])), 1);
        assert_eq!(dispatch(&args(&["frobnicate"])), 1);
        assert_eq!(dispatch(&args(&["synth", "--bogus-flag"])), 1);
        assert_eq!(dispatch(&args(&["gradcheck", "--format", "yaml"])), 1);
    }

    #[test]
    fn missing_data_file_exits_two() {
        let code = dispatch(&args(&[
            "benchmark",
            "--data",
            "/nonexistent/series.csv",
        ]));
        assert_eq!(code, 2);
    }

    #[test]
    fn window_and_model_lists_parse() {
        assert_eq!(parse_windows("6,12").unwrap(), vec![6, 12]);
        assert_eq!(parse_windows(" 4 ").unwrap(), vec![4]);
        assert!(parse_windows("6,x").is_err());
        assert_eq!(parse_models(None).unwrap().len(), 4);
        assert_eq!(
            parse_models(Some("rnn,convlstmtransnet")).unwrap(),
            vec![Architecture::Rnn, Architecture::ConvLstmTransNet]
        );
        assert!(parse_models(Some("cnn")).is_err());
    }

    #[test]
    fn config_overrides_apply_with_flag_precedence() {
        let overrides: ConfigOverrides = serde_json::from_str(
            r#"{"recurrent_units": 16, "epochs": 7, "train_fraction": 0.7, "patience": 2}"#,
        )
        .unwrap();
        let mut model_cfg = ModelConfig::default();
        overrides.apply_model(&mut model_cfg);
        assert_eq!(model_cfg.recurrent_units, 16);
        let mut train_cfg = TrainConfig::default();
        overrides.apply_train(&mut train_cfg);
        assert_eq!(train_cfg.epochs, 7);
        assert_eq!(train_cfg.patience, Some(2));
        // The explicit flag beats the file; the file beats the default.
        assert_eq!(overrides.train_fraction(0.9), 0.9);
        assert_eq!(overrides.train_fraction(DEFAULT_TRAIN_FRACTION), 0.7);

        let bad: std::result::Result<ConfigOverrides, _> =
            serde_json::from_str(r#"{"unknown_key": 1}"#);
        assert!(bad.is_err());
    }
}
