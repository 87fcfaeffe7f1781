//! MSE loss, the Adam optimizer, the deterministic mini-batch training
//! loop, and held-out evaluation.
//!
//! Determinism contract: given the model seed, the training seed, and the
//! dataset bytes, training produces bit-identical parameters and loss
//! history on every run. The loop draws from two fixed generator streams,
//! one for epoch shuffles and one for dropout masks, and every reduction
//! has a fixed order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{inverse, ScalerParams, WindowedDataset};
use crate::error::{Error, Result};
use crate::layers::LayerParams;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{Model, ModelGrads, DEFAULT_SEED};
use crate::numerics::Tensor;

/// Rows per eval-mode forward pass. Purely a memory bound: predictions are
/// row-independent, so the chunking is unobservable in the output.
const EVAL_CHUNK: usize = 256;

/// Stream separator for the dropout generator so it never overlaps the
/// shuffle stream derived from the same seed.
const DROPOUT_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Early stopping: abort after this many epochs without a new best
    /// mean loss. Off by default.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch_size: 32,
            epochs: 50,
            seed: DEFAULT_SEED,
            shuffle_each_epoch: true,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.eps_adam.is_finite() && self.eps_adam > 0.0) {
            return Err(Error::Config(format!(
                "eps_adam must be positive, got {}",
                self.eps_adam
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1 when set".into()));
        }
        Ok(())
    }
}

/// Adam moment estimates, keyed by flat `"layer.parameter"` names. Entries
/// appear on first update and always mirror their parameter's shape.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Mean squared error over a batch of single-value predictions, with its
/// gradient `2 (pred - target) / batch` with respect to the predictions.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} does not match target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.len() == 0 {
        return Err(Error::Shape("cannot take the loss of an empty batch".into()));
    }
    let batch = pred.shape()[0] as f64;
    let mut loss = 0.0;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let diff = p - t;
        loss += diff * diff;
    }
    loss /= batch;
    let grad = pred.zip_map(target, |p, t| 2.0 * (p - t) / batch)?;
    Ok((loss, grad))
}

/// One Adam update over every parameter, in place.
///
/// Classic bias-corrected form: `m̂ = m/(1-β₁^t)`, `v̂ = v/(1-β₂^t)`,
/// `θ ← θ - lr·m̂/(√v̂ + ε)`. The step counter advances by exactly one.
/// A non-finite gradient anywhere aborts before any parameter or moment is
/// touched.
pub fn adam_step(
    params: &mut BTreeMap<String, LayerParams>,
    grads: &ModelGrads,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    // Validation pass first so failure leaves everything untouched.
    for (layer, layer_params) in params.iter() {
        let layer_grads = grads
            .get(layer)
            .ok_or_else(|| Error::Shape(format!("no gradients for layer {layer:?}")))?;
        if layer_grads.len() != layer_params.len() {
            return Err(Error::Shape(format!(
                "layer {layer:?} has {} parameters but {} gradients",
                layer_params.len(),
                layer_grads.len()
            )));
        }
        for (name, tensor) in layer_params.iter() {
            let grad = layer_grads.get(name)?;
            if grad.shape() != tensor.shape() {
                return Err(Error::Shape(format!(
                    "gradient shape {:?} for {layer}.{name} does not match parameter {:?}",
                    grad.shape(),
                    tensor.shape()
                )));
            }
            if grad.data().iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for {layer}.{name}"
                )));
            }
        }
    }
    if grads.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradients cover {} layers but the model has {}",
            grads.len(),
            params.len()
        )));
    }

    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (layer, layer_params) in params.iter_mut() {
        let layer_grads = &grads[layer];
        for (name, tensor) in layer_params.iter_mut() {
            let grad = layer_grads.get(name)?;
            let key = format!("{layer}.{name}");
            let m = state
                .m
                .entry(key.clone())
                .or_insert_with(|| Tensor::zeros(tensor.shape()));
            let v = state
                .v
                .entry(key)
                .or_insert_with(|| Tensor::zeros(tensor.shape()));
            let theta = tensor.data_mut();
            let m_data = m.data_mut();
            let v_data = v.data_mut();
            for i in 0..theta.len() {
                let g = grad.data()[i];
                m_data[i] = cfg.beta1 * m_data[i] + (1.0 - cfg.beta1) * g;
                v_data[i] = cfg.beta2 * v_data[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m_data[i] / bias1;
                let v_hat = v_data[i] / bias2;
                theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps_adam);
            }
        }
    }
    Ok(())
}

/// Trains the model in place and returns the mean training loss per epoch.
///
/// Each epoch visits every window once in mini-batches; shuffling permutes
/// whole (window, target) pairs only, never the order inside a window. With
/// `patience` set, training stops after that many epochs without a new best
/// mean loss, and the history ends at the last epoch run.
pub fn train(model: &mut Model, dataset: &WindowedDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if dataset.window() != model.config().window_length {
        return Err(Error::Shape(format!(
            "dataset window {} does not match the model's {}",
            dataset.window(),
            model.config().window_length
        )));
    }
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM_SALT);
    let mut state = AdamState::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for _ in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            indices.shuffle(&mut shuffle_rng);
        }
        let mut squared_error_sum = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            let (x, y) = dataset.gather(batch)?;
            let (pred, cache) = model.forward(&x, true, &mut dropout_rng)?;
            let (loss, loss_grad) = mse_loss(&pred, &y)?;
            let (_, grads) = model.backward(cache, &loss_grad)?;
            adam_step(model.params_mut(), &grads, &mut state, cfg)?;
            squared_error_sum += loss * batch.len() as f64;
        }
        let epoch_mean = squared_error_sum / n as f64;
        history.push(epoch_mean);
        if let Some(patience) = cfg.patience {
            if epoch_mean < best {
                best = epoch_mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    Ok(history)
}

/// Eval-mode predictions over the whole dataset, normalized space,
/// flattened to one value per window.
fn eval_predictions(model: &Model, dataset: &WindowedDataset) -> Result<Vec<f64>> {
    let n = dataset.len();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let chunk: Vec<usize> = (start..end).collect();
        let (x, _) = dataset.gather(&chunk)?;
        let pred = model.predict(&x)?;
        out.extend_from_slice(pred.data());
        start = end;
    }
    Ok(out)
}

/// Evaluates in original units: predictions and targets are inverse-scaled
/// to bps before the metrics are taken.
pub fn evaluate_model(
    model: &Model,
    dataset: &WindowedDataset,
    scaler: &ScalerParams,
) -> Result<MetricsReport> {
    let pred = eval_predictions(model, dataset)?;
    let actual = dataset.targets().data().to_vec();
    compute_metrics(&inverse(&pred, scaler), &inverse(&actual, scaler))
}

/// Reports in both spaces for consumers that present them side by side.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DualReport {
    /// Original traffic units after inverse scaling.
    pub bps: MetricsReport,
    /// The model's own [0, 1] working space.
    pub normalized: MetricsReport,
}

pub fn evaluate_both(
    model: &Model,
    dataset: &WindowedDataset,
    scaler: &ScalerParams,
) -> Result<DualReport> {
    let pred = eval_predictions(model, dataset)?;
    let actual = dataset.targets().data().to_vec();
    Ok(DualReport {
        bps: compute_metrics(&inverse(&pred, scaler), &inverse(&actual, scaler))?,
        normalized: compute_metrics(&pred, &actual)?,
    })
}

/// Loss history rendered as CSV, epochs numbered from 1.
pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_train_loss\n");
    for (i, loss) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    out
}
