//! Forecasting engine for univariate internet-traffic telemetry.
//!
//! The crate covers the full path from raw SNMP counter samples to a
//! benchmark table: ingestion and counter-to-bps conversion, forward-fill
//! imputation, min-max scaling, sliding-window dataset construction,
//! four architectures (RNN, LSTM, GRU, and the ConvLSTMTransNet hybrid:
//! Conv1D -> LSTM -> Transformer encoder -> global average pooling -> linear
//! head), Adam training, MAE/RMSE/WAPE evaluation, and FGSM robustness
//! probing. Every layer's forward and backward pass is written out by hand
//! and verified against central finite differences.

pub mod benchmark;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::Tensor;
