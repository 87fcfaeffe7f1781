//! The comparative benchmark grid and prediction export.
//!
//! One benchmark run trains every requested architecture at every requested
//! window length on the same chronological split of one series, evaluates
//! each on the held-out tail, and renders the results in the standard
//! comparison layout: one row per model, one MAE/RMSE/WAPE block per window
//! length. Metrics are tabulated in both original traffic units and the
//! normalized working space, the latter clearly marked.
//!
//! Every cell gets its own seeds, derived from the base seed and the cell's
//! grid position, so the table is a pure function of the dataset bytes, the
//! base seed, and the configuration; a failing cell is recorded as failed
//! without voiding the rest of the grid.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{
    chrono_split, fit_scaler, forward_fill, inverse, make_windows, series_csv_string, transform,
    ScalerParams, TimeSeries,
};
use crate::error::{Error, Result};
use crate::model::{build_model, Architecture, Model, ModelConfig};
use crate::training::{evaluate_both, train, DualReport, TrainConfig};

pub const DEFAULT_WINDOWS: [usize; 2] = [6, 12];
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// One trained-and-evaluated grid position.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkCell {
    pub architecture: Architecture,
    pub window: usize,
    pub init_seed: u64,
    pub train_seed: u64,
    /// Present when the cell completed.
    pub report: Option<DualReport>,
    /// Present when the cell failed; the grid keeps going either way.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkMetadata {
    pub seed: u64,
    pub config: BenchmarkConfig,
    pub dataset_sha256: String,
}

/// The full configuration a run was performed under, embedded in the
/// output so a table is self-describing.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable {
    pub metadata: BenchmarkMetadata,
    pub windows: Vec<usize>,
    pub models: Vec<Architecture>,
    /// Window-major, then model order: all models at windows[0] first.
    pub cells: Vec<BenchmarkCell>,
}

impl BenchmarkTable {
    pub fn cell(&self, architecture: Architecture, window: usize) -> Option<&BenchmarkCell> {
        self.cells
            .iter()
            .find(|c| c.architecture == architecture && c.window == window)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("benchmark tables always serialize")
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent seed per (cell, stream): stream 0 initializes parameters,
/// stream 1 drives training.
fn derive_seed(base: u64, cell: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(cell.wrapping_mul(2).wrapping_add(stream.wrapping_add(1))))
}

/// Train-and-evaluate for one grid cell. Fails as a value, never a panic.
fn run_cell(
    series: &TimeSeries,
    architecture: Architecture,
    window: usize,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    train_fraction: f64,
    init_seed: u64,
    train_seed: u64,
) -> Result<DualReport> {
    let (train_part, test_part) = chrono_split(series, train_fraction, window)?;
    let scaler = fit_scaler(&train_part.dense_values()?)?;
    let train_set = make_windows(
        train_part.timestamps(),
        &transform(&train_part.dense_values()?, &scaler),
        window,
    )?;
    let test_set = make_windows(
        test_part.timestamps(),
        &transform(&test_part.dense_values()?, &scaler),
        window,
    )?;

    let model_cfg = ModelConfig {
        architecture,
        window_length: window,
        seed: init_seed,
        ..*base_model
    };
    let mut model = build_model(&model_cfg)?;
    let train_cfg = TrainConfig { seed: train_seed, ..*base_train };
    train(&mut model, &train_set, &train_cfg)?;
    evaluate_both(&model, &test_set, &scaler)
}

/// Runs the whole grid. Missing values are filled up front; the dataset
/// hash covers the series exactly as passed in.
pub fn run_benchmark(
    series: &TimeSeries,
    windows: &[usize],
    models: &[Architecture],
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    train_fraction: f64,
) -> Result<BenchmarkTable> {
    if windows.is_empty() || models.is_empty() {
        return Err(Error::Config("benchmark needs at least one window and one model".into()));
    }
    let dataset_sha256 = sha256_hex(&series_csv_string(series));
    let filled = forward_fill(series)?;

    let mut cells = Vec::with_capacity(windows.len() * models.len());
    for (wi, &window) in windows.iter().enumerate() {
        for (mi, &architecture) in models.iter().enumerate() {
            let index = (wi * models.len() + mi) as u64;
            let init_seed = derive_seed(base_train.seed, index, 0);
            let train_seed = derive_seed(base_train.seed, index, 1);
            let outcome = run_cell(
                &filled,
                architecture,
                window,
                base_model,
                base_train,
                train_fraction,
                init_seed,
                train_seed,
            );
            let (report, error) = match outcome {
                Ok(report) => (Some(report), None),
                Err(e) => (None, Some(e.to_string())),
            };
            cells.push(BenchmarkCell {
                architecture,
                window,
                init_seed,
                train_seed,
                report,
                error,
            });
        }
    }
    Ok(BenchmarkTable {
        metadata: BenchmarkMetadata {
            seed: base_train.seed,
            config: BenchmarkConfig {
                model: *base_model,
                train: *base_train,
                train_fraction,
            },
            dataset_sha256,
        },
        windows: windows.to_vec(),
        models: models.to_vec(),
        cells,
    })
}

pub fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Fixed-width metric cell: plain decimals in the human range, scientific
/// notation outside it, `failed` for absent values.
fn format_metric(v: Option<f64>) -> String {
    match v {
        None => "failed".to_string(),
        Some(v) if v == 0.0 => "0.00".to_string(),
        Some(v) if (0.01..100000.0).contains(&v.abs()) => format!("{v:.2}"),
        Some(v) => format!("{v:.3e}"),
    }
}

fn render_block(
    out: &mut String,
    table: &BenchmarkTable,
    title: &str,
    pick: impl Fn(&DualReport) -> crate::metrics::MetricsReport,
) {
    const COL: usize = 11;
    let label_width = table
        .models
        .iter()
        .map(|m| m.table_label().len())
        .max()
        .unwrap_or(0)
        .max(8);
    out.push_str(title);
    out.push('\n');

    let mut header = format!("{:label_width$}", "");
    let mut subheader = format!("{:label_width$}", "");
    for window in &table.windows {
        header.push_str(&format!("  {:^width$}", format!("{window} input"), width = 3 * COL));
        for metric in ["MAE", "RMSE", "WAPE"] {
            subheader.push_str(&format!("  {metric:>width$}", width = COL - 2));
        }
    }
    out.push_str(header.trim_end());
    out.push('\n');
    out.push_str(subheader.trim_end());
    out.push('\n');

    for &model in &table.models {
        let mut row = format!("{:label_width$}", model.table_label());
        for &window in &table.windows {
            let report = table
                .cell(model, window)
                .and_then(|c| c.report.as_ref())
                .map(&pick);
            let (mae, rmse, wape) = match report {
                Some(r) => (Some(r.mae), Some(r.rmse), Some(r.wape)),
                None => (None, None, None),
            };
            for v in [mae, rmse, wape] {
                row.push_str(&format!("  {:>width$}", format_metric(v), width = COL - 2));
            }
        }
        out.push_str(row.trim_end());
        out.push('\n');
    }
}

/// Human-readable rendering: the original-units block first, then the same
/// grid in normalized space, explicitly marked.
pub fn render_table(table: &BenchmarkTable) -> String {
    let mut out = String::new();
    render_block(&mut out, table, "Original units (bps)", |d| d.bps);
    out.push('\n');
    render_block(&mut out, table, "Normalized [0, 1] space", |d| d.normalized);
    out
}

pub const PREDICTIONS_CSV_HEADER: &str = "timestamp,actual_bps,predicted_bps";

/// Writes actual-versus-predicted rows for a test-span series.
///
/// `series` is the held-out segment in original units with no missing
/// values; the actual column repeats its values verbatim. Predictions are
/// computed in normalized space through `scaler` and inverse-scaled back.
/// One row per forecastable position: `series.len() - window` in total.
pub fn write_predictions<W: Write>(
    writer: &mut W,
    model: &Model,
    series: &TimeSeries,
    scaler: &ScalerParams,
) -> Result<()> {
    let window = model.config().window_length;
    let actual = series.dense_values()?;
    let dataset = make_windows(series.timestamps(), &transform(&actual, scaler), window)?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (x, _) = dataset.gather(&all)?;
    let predicted = inverse(model.predict(&x)?.data(), scaler);

    writeln!(writer, "{PREDICTIONS_CSV_HEADER}")?;
    for (i, &ts) in dataset.target_timestamps().iter().enumerate() {
        writeln!(writer, "{},{},{}", ts, actual[window + i], predicted[i])?;
    }
    Ok(())
}

pub fn export_predictions(
    model: &Model,
    series: &TimeSeries,
    scaler: &ScalerParams,
    path: &Path,
) -> Result<()> {
    let mut buffer = Vec::new();
    write_predictions(&mut buffer, model, series, scaler)?;
    std::fs::write(path, buffer)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;

    fn quick_train() -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 16, ..TrainConfig::default() }
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            conv_filters: 4,
            recurrent_units: 4,
            heads: 2,
            d_ff: 8,
            ..ModelConfig::default()
        }
    }

    fn short_series() -> TimeSeries {
        synth_generate(1, 96, 5, 1e9).unwrap()
    }

    #[test]
    fn grid_is_complete_and_window_major() {
        let table = run_benchmark(
            &short_series(),
            &[4, 6],
            &Architecture::ALL,
            &tiny_model(),
            &quick_train(),
            0.8,
        )
        .unwrap();
        assert_eq!(table.cells.len(), 8);
        assert_eq!(table.cells[0].window, 4);
        assert_eq!(table.cells[4].window, 6);
        for cell in &table.cells {
            assert!(cell.error.is_none(), "{:?}: {:?}", cell.architecture, cell.error);
            let report = cell.report.as_ref().unwrap();
            assert!(report.bps.rmse >= report.bps.mae);
        }
        assert_eq!(table.cell(Architecture::Gru, 6).unwrap().window, 6);
    }

    #[test]
    fn identical_inputs_render_identical_json() {
        let series = short_series();
        let run = || {
            run_benchmark(
                &series,
                &[4],
                &[Architecture::Rnn, Architecture::ConvLstmTransNet],
                &tiny_model(),
                &quick_train(),
                0.8,
            )
            .unwrap()
            .to_json()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn per_cell_failure_does_not_void_the_grid() {
        // Window 90 starves the 19-point test side of a 96-point series,
        // so that cell fails while window 4 completes.
        let table = run_benchmark(
            &short_series(),
            &[4, 90],
            &[Architecture::Rnn],
            &tiny_model(),
            &quick_train(),
            0.8,
        )
        .unwrap();
        assert_eq!(table.cells.len(), 2);
        assert!(table.cells[0].report.is_some());
        assert!(table.cells[1].report.is_none());
        assert!(table.cells[1].error.is_some());
    }

    #[test]
    fn cell_seeds_differ_across_the_grid() {
        let mut seen = std::collections::BTreeSet::new();
        for cell in 0..8u64 {
            for stream in 0..2 {
                assert!(seen.insert(derive_seed(42, cell, stream)));
            }
        }
        // A different base seed shifts the whole family.
        assert!(!seen.contains(&derive_seed(43, 0, 0)));
    }

    #[test]
    fn rendered_layout_has_window_blocks_and_model_rows() {
        let table = run_benchmark(
            &short_series(),
            &[4, 6],
            &Architecture::ALL,
            &tiny_model(),
            &quick_train(),
            0.8,
        )
        .unwrap();
        let text = render_table(&table);
        assert!(text.contains("4 input"));
        assert!(text.contains("6 input"));
        assert!(text.contains("Original units (bps)"));
        assert!(text.contains("Normalized [0, 1] space"));
        let lines: Vec<&str> = text.lines().collect();
        // Each block: title, window header, metric header, four model rows.
        assert!(lines[0].starts_with("Original units"));
        assert!(lines[2].contains("MAE") && lines[2].contains("RMSE") && lines[2].contains("WAPE"));
        assert!(lines[3].starts_with("RNN"));
        assert!(lines[4].starts_with("LSTM"));
        assert!(lines[5].starts_with("GRU"));
        assert!(lines[6].starts_with("Proposed"));
    }

    #[test]
    fn metadata_hash_tracks_the_dataset_bytes() {
        let a = run_benchmark(
            &short_series(),
            &[4],
            &[Architecture::Rnn],
            &tiny_model(),
            &quick_train(),
            0.8,
        )
        .unwrap();
        let other = synth_generate(1, 96, 6, 1e9).unwrap();
        let b = run_benchmark(&other, &[4], &[Architecture::Rnn], &tiny_model(), &quick_train(), 0.8)
            .unwrap();
        assert_eq!(a.metadata.dataset_sha256.len(), 64);
        assert_ne!(a.metadata.dataset_sha256, b.metadata.dataset_sha256);
        assert_eq!(a.metadata.seed, quick_train().seed);
    }

    #[test]
    fn sha256_matches_known_vector() {
        // SHA-256("abc"), the classic test vector.
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn prediction_export_layout_and_exact_actuals() {
        let series = short_series();
        let (train_part, test_part) = chrono_split(&series, 0.8, 4).unwrap();
        let scaler = fit_scaler(&train_part.dense_values().unwrap()).unwrap();
        let model = build_model(&ModelConfig {
            architecture: Architecture::Rnn,
            window_length: 4,
            recurrent_units: 4,
            ..ModelConfig::default()
        })
        .unwrap();

        let mut buffer = Vec::new();
        write_predictions(&mut buffer, &model, &test_part, &scaler).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], PREDICTIONS_CSV_HEADER);
        assert_eq!(lines.len() - 1, test_part.len() - 4);

        let actual = test_part.dense_values().unwrap();
        for (i, line) in lines[1..].iter().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 3);
            assert_eq!(fields[0].parse::<i64>().unwrap(), test_part.timestamps()[4 + i]);
            // The actual column must reproduce the input values exactly.
            assert_eq!(fields[1].parse::<f64>().unwrap(), actual[4 + i]);
            assert!(fields[2].parse::<f64>().unwrap().is_finite());
        }
    }
}
