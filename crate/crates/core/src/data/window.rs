//! Sliding-window dataset construction and the chronological split.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::series::TimeSeries;

/// Supervised one-step-ahead pairs cut from a series.
///
/// For window length L over n values there are exactly n − L pairs: input i
/// is values[i..i+L] as a [L, 1] slice and its target is values[i+L]. The
/// timestamp of each target is kept for export alongside predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    window: usize,
    /// [n_pairs, window, 1]
    inputs: Tensor,
    /// [n_pairs, 1]
    targets: Tensor,
    target_timestamps: Vec<i64>,
}

impl WindowedDataset {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.target_timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    pub fn target_timestamps(&self) -> &[i64] {
        &self.target_timestamps
    }

    /// Copies the selected pairs into batch tensors, in index order.
    /// Used by the training loop to materialize shuffled mini-batches.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(Error::Data("cannot gather an empty batch".into()));
        }
        let l = self.window;
        let mut inputs = Tensor::zeros(&[indices.len(), l, 1]);
        let mut targets = Tensor::zeros(&[indices.len(), 1]);
        {
            let src_in = self.inputs.data();
            let src_tg = self.targets.data();
            let dst_in = inputs.data_mut();
            let dst_tg = targets.data_mut();
            for (row, &idx) in indices.iter().enumerate() {
                if idx >= self.len() {
                    return Err(Error::Data(format!(
                        "pair index {idx} out of range for {} pairs",
                        self.len()
                    )));
                }
                dst_in[row * l..(row + 1) * l].copy_from_slice(&src_in[idx * l..(idx + 1) * l]);
                dst_tg[row] = src_tg[idx];
            }
        }
        Ok((inputs, targets))
    }
}

/// Cuts all length-L windows with their next-value targets.
///
/// `timestamps` and `values` run in series order and must have equal length
/// strictly greater than L.
pub fn make_windows(timestamps: &[i64], values: &[f64], window: usize) -> Result<WindowedDataset> {
    if window == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    if timestamps.len() != values.len() {
        return Err(Error::Data(format!(
            "{} timestamps for {} values",
            timestamps.len(),
            values.len()
        )));
    }
    if values.len() <= window {
        return Err(Error::Data(format!(
            "need more than {window} values to window, got {}",
            values.len()
        )));
    }
    let n = values.len() - window;
    let mut inputs = Tensor::zeros(&[n, window, 1]);
    let mut targets = Tensor::zeros(&[n, 1]);
    {
        let din = inputs.data_mut();
        let dtg = targets.data_mut();
        for i in 0..n {
            din[i * window..(i + 1) * window].copy_from_slice(&values[i..i + window]);
            dtg[i] = values[i + window];
        }
    }
    Ok(WindowedDataset {
        window,
        inputs,
        targets,
        target_timestamps: timestamps[window..].to_vec(),
    })
}

/// Splits a series into a train prefix and test suffix at
/// floor(n * train_fraction), preserving order on both sides.
///
/// `window` is the window length the splits will be cut with; a side left
/// with ≤ window points could not produce a single pair, so it is rejected
/// here rather than downstream.
pub fn chrono_split(
    series: &TimeSeries,
    train_fraction: f64,
    window: usize,
) -> Result<(TimeSeries, TimeSeries)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = series.len();
    let split = (n as f64 * train_fraction).floor() as usize;
    let (train_len, test_len) = (split, n - split);
    if train_len <= window || test_len <= window {
        return Err(Error::Data(format!(
            "split at {split} leaves {train_len} train and {test_len} test points; \
             both sides need more than the window length {window}"
        )));
    }
    Ok((series.slice(0, split)?, series.slice(split, n)?))
}
