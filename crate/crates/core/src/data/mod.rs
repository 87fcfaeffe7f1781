//! Telemetry ingestion and the dataset pipeline.
//!
//! The stages compose in a fixed order: parse raw telemetry, convert octet
//! counters to bit rates, forward-fill gaps, scale with parameters fitted on
//! the training split only, and cut sliding windows. Every stage is a pure
//! function, so the whole pipeline is deterministic given its inputs.

pub mod scaler;
pub mod series;
pub mod synth;
pub mod telemetry;
pub mod window;

pub use scaler::{fit_scaler, inverse, transform, ScalerParams};
pub use series::{forward_fill, read_series_csv, series_csv_string, write_series_csv, TimeSeries};
pub use synth::{synth_generate, DEFAULT_SAMPLES_PER_DAY};
pub use telemetry::{
    counters_to_bps, parse_telemetry_json, rates_to_series, BpsOptions, CounterBits, RawTelemetry,
    DEFAULT_CAPACITY_BPS, DEFAULT_INTERVAL_SECONDS,
};
pub use window::{chrono_split, make_windows, WindowedDataset};
