//! Model assembly: the ConvLSTMTransNet forecaster and the three recurrent
//! baselines, with full backward passes for training and input-gradient
//! probes.
//!
//! All four models map a window [batch, L, 1] of normalized traffic to one
//! next-step prediction [batch, 1]:
//!
//! * `convlstmtransnet`: Conv1D (ReLU) → LSTM (sequences) → one transformer
//!   encoder block (post-norm residuals around attention and the
//!   feed-forward net, dropout on each sub-layer output) → global average
//!   pooling → linear head.
//! * `rnn`, `lstm`, `gru`: the recurrent layer's final state → linear head.
//!
//! Parameters live in per-layer [`LayerParams`] maps keyed by a stable layer
//! name; checkpoints and the optimizer address tensors as
//! `"layer.parameter"`. Initialization draws from one generator seeded by
//! the config, one layer at a time in pipeline order, so a seed fully
//! determines the starting parameters.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::attention::{AttentionCache, MultiHeadAttention};
use crate::layers::conv::{Conv1d, Conv1dCache};
use crate::layers::dense::{Dense, DenseCache};
use crate::layers::dropout::{Dropout, DropoutCache};
use crate::layers::ffn::{FfnCache, PositionWiseFfn};
use crate::layers::norm::{LayerNorm, LayerNormCache};
use crate::layers::pool::{GlobalAvgPool, GlobalAvgPoolCache};
use crate::layers::recurrent::{Gru, GruCache, Lstm, LstmCache, Rnn, RnnCache};
use crate::layers::{LayerParams, Padding};
use crate::numerics::Tensor;

/// Default seed used when none is supplied anywhere.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Rnn,
    Lstm,
    Gru,
    ConvLstmTransNet,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Rnn,
        Architecture::Lstm,
        Architecture::Gru,
        Architecture::ConvLstmTransNet,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Rnn => "rnn",
            Architecture::Lstm => "lstm",
            Architecture::Gru => "gru",
            Architecture::ConvLstmTransNet => "convlstmtransnet",
        }
    }

    /// Row label used when rendering the benchmark table.
    pub fn table_label(&self) -> &'static str {
        match self {
            Architecture::Rnn => "RNN",
            Architecture::Lstm => "LSTM",
            Architecture::Gru => "GRU",
            Architecture::ConvLstmTransNet => "Proposed",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(Architecture::Rnn),
            "lstm" => Ok(Architecture::Lstm),
            "gru" => Ok(Architecture::Gru),
            "convlstmtransnet" => Ok(Architecture::ConvLstmTransNet),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?}, expected rnn, lstm, gru, or convlstmtransnet"
            ))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Complete hyperparameter set for one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Input window length L.
    pub window_length: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub recurrent_units: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub dropout_rate: f64,
    pub padding: Padding,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::ConvLstmTransNet,
            window_length: 6,
            conv_filters: 64,
            conv_kernel: 3,
            recurrent_units: 64,
            heads: 4,
            d_ff: 128,
            dropout_rate: 0.1,
            padding: Padding::Same,
            seed: DEFAULT_SEED,
        }
    }
}

impl ModelConfig {
    /// Checks the fields the chosen architecture actually uses.
    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 {
            return Err(Error::Config("window length must be at least 1".into()));
        }
        if self.recurrent_units == 0 {
            return Err(Error::Config("recurrent_units must be positive".into()));
        }
        if self.architecture == Architecture::ConvLstmTransNet {
            if self.conv_filters == 0 || self.conv_kernel == 0 || self.heads == 0 || self.d_ff == 0
            {
                return Err(Error::Config(
                    "conv_filters, conv_kernel, heads, and d_ff must be positive".into(),
                ));
            }
            if self.recurrent_units % self.heads != 0 {
                return Err(Error::Config(format!(
                    "recurrent_units {} is not divisible by heads {}",
                    self.recurrent_units, self.heads
                )));
            }
            if !(0.0..1.0).contains(&self.dropout_rate) {
                return Err(Error::Config(format!(
                    "dropout_rate must lie in [0, 1), got {}",
                    self.dropout_rate
                )));
            }
            if self.padding == Padding::Valid && self.window_length < self.conv_kernel {
                return Err(Error::Config(format!(
                    "valid padding needs window_length >= conv_kernel, got {} < {}",
                    self.window_length, self.conv_kernel
                )));
            }
        }
        Ok(())
    }
}

/// Gradients mirror the parameter layout: layer name → named tensors.
pub type ModelGrads = BTreeMap<String, LayerParams>;

/// A built model: immutable wiring plus its parameter state.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: BTreeMap<String, LayerParams>,
}

/// Forward intermediates, consumed by exactly one backward call.
#[derive(Debug)]
pub struct ModelCache(CacheInner);

#[derive(Debug)]
enum CacheInner {
    Baseline {
        cell: BaselineCellCache,
        head: DenseCache,
    },
    Hybrid(Box<HybridCache>),
}

#[derive(Debug)]
enum BaselineCellCache {
    Rnn(RnnCache),
    Lstm(LstmCache),
    Gru(GruCache),
}

#[derive(Debug)]
struct HybridCache {
    conv: Conv1dCache,
    lstm: LstmCache,
    attn: AttentionCache,
    drop1: DropoutCache,
    norm1: LayerNormCache,
    ffn: FfnCache,
    drop2: DropoutCache,
    norm2: LayerNormCache,
    pool: GlobalAvgPoolCache,
    head: DenseCache,
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn params(&self) -> &BTreeMap<String, LayerParams> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, LayerParams> {
        &mut self.params
    }

    /// Total scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|p| p.scalar_count()).sum()
    }

    fn conv(&self) -> Result<Conv1d> {
        Ok(Conv1d::new(self.config.conv_kernel, 1, self.config.conv_filters)?
            .with_padding(self.config.padding)
            .with_relu(true))
    }

    fn hybrid_lstm(&self) -> Result<Lstm> {
        Ok(Lstm::new(self.config.conv_filters, self.config.recurrent_units)?.with_sequences(true))
    }

    fn attention(&self) -> Result<MultiHeadAttention> {
        MultiHeadAttention::new(self.config.recurrent_units, self.config.heads)
    }

    fn ffn(&self) -> Result<PositionWiseFfn> {
        PositionWiseFfn::new(self.config.recurrent_units, self.config.d_ff)
    }

    fn norm(&self) -> Result<LayerNorm> {
        LayerNorm::new(self.config.recurrent_units)
    }

    fn dropout(&self) -> Result<Dropout> {
        Dropout::new(self.config.dropout_rate)
    }

    fn head(&self) -> Result<Dense> {
        Dense::new(self.config.recurrent_units, 1)
    }

    fn layer_params(&self, name: &str) -> Result<&LayerParams> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("model has no layer {name:?}")))
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [_, time, d] = x.dims3()?;
        if d != 1 {
            return Err(Error::Shape(format!(
                "windows must be univariate [batch, L, 1], got {d} features"
            )));
        }
        if time != self.config.window_length {
            return Err(Error::Shape(format!(
                "window length {time} does not match the model's {}",
                self.config.window_length
            )));
        }
        Ok(())
    }

    /// Runs the pipeline. `rng` is only consumed by dropout, and only when
    /// `training` holds; eval-mode calls never touch it.
    pub fn forward(
        &self,
        x: &Tensor,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, ModelCache)> {
        self.check_input(x)?;
        match self.config.architecture {
            Architecture::ConvLstmTransNet => self.forward_hybrid(x, training, rng),
            Architecture::Rnn => {
                let cell = Rnn::new(1, self.config.recurrent_units)?;
                let (state, cache) = cell.forward(x, self.layer_params("rnn")?)?;
                let (y, head_cache) = self.head()?.forward(&state, self.layer_params("head")?)?;
                Ok((
                    y,
                    ModelCache(CacheInner::Baseline {
                        cell: BaselineCellCache::Rnn(cache),
                        head: head_cache,
                    }),
                ))
            }
            Architecture::Lstm => {
                let cell = Lstm::new(1, self.config.recurrent_units)?;
                let (state, cache) = cell.forward(x, self.layer_params("lstm")?)?;
                let (y, head_cache) = self.head()?.forward(&state, self.layer_params("head")?)?;
                Ok((
                    y,
                    ModelCache(CacheInner::Baseline {
                        cell: BaselineCellCache::Lstm(cache),
                        head: head_cache,
                    }),
                ))
            }
            Architecture::Gru => {
                let cell = Gru::new(1, self.config.recurrent_units)?;
                let (state, cache) = cell.forward(x, self.layer_params("gru")?)?;
                let (y, head_cache) = self.head()?.forward(&state, self.layer_params("head")?)?;
                Ok((
                    y,
                    ModelCache(CacheInner::Baseline {
                        cell: BaselineCellCache::Gru(cache),
                        head: head_cache,
                    }),
                ))
            }
        }
    }

    fn forward_hybrid(
        &self,
        x: &Tensor,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, ModelCache)> {
        let dropout = self.dropout()?;
        let (features, conv_cache) = self.conv()?.forward(x, self.layer_params("conv")?)?;
        let (seq, lstm_cache) = self.hybrid_lstm()?.forward(&features, self.layer_params("lstm")?)?;

        // Encoder block, post-norm: norm(x + dropout(sublayer(x))).
        let (attn_out, attn_cache) = self.attention()?.forward(&seq, self.layer_params("attn")?)?;
        let (attn_drop, drop1_cache) = dropout.forward(&attn_out, training, rng)?;
        let (block1, norm1_cache) = self
            .norm()?
            .forward(&seq.add(&attn_drop)?, self.layer_params("norm1")?)?;
        let (ffn_out, ffn_cache) = self.ffn()?.forward(&block1, self.layer_params("ffn")?)?;
        let (ffn_drop, drop2_cache) = dropout.forward(&ffn_out, training, rng)?;
        let (block2, norm2_cache) = self
            .norm()?
            .forward(&block1.add(&ffn_drop)?, self.layer_params("norm2")?)?;

        let (pooled, pool_cache) = GlobalAvgPool.forward(&block2)?;
        let (y, head_cache) = self.head()?.forward(&pooled, self.layer_params("head")?)?;
        Ok((
            y,
            ModelCache(CacheInner::Hybrid(Box::new(HybridCache {
                conv: conv_cache,
                lstm: lstm_cache,
                attn: attn_cache,
                drop1: drop1_cache,
                norm1: norm1_cache,
                ffn: ffn_cache,
                drop2: drop2_cache,
                norm2: norm2_cache,
                pool: pool_cache,
                head: head_cache,
            }))),
        ))
    }

    /// Backpropagates an upstream gradient [batch, 1] through the whole
    /// pipeline. Returns the gradient with respect to the input windows and
    /// all parameter gradients.
    pub fn backward(&self, cache: ModelCache, upstream: &Tensor) -> Result<(Tensor, ModelGrads)> {
        let mut grads = ModelGrads::new();
        match cache.0 {
            CacheInner::Baseline { cell, head } => {
                let (d_state, head_grads) =
                    self.head()?.backward(head, self.layer_params("head")?, upstream)?;
                grads.insert("head".into(), head_grads);
                let dx = match cell {
                    BaselineCellCache::Rnn(c) => {
                        let layer = Rnn::new(1, self.config.recurrent_units)?;
                        let (dx, g) = layer.backward(c, self.layer_params("rnn")?, &d_state)?;
                        grads.insert("rnn".into(), g);
                        dx
                    }
                    BaselineCellCache::Lstm(c) => {
                        let layer = Lstm::new(1, self.config.recurrent_units)?;
                        let (dx, g) = layer.backward(c, self.layer_params("lstm")?, &d_state)?;
                        grads.insert("lstm".into(), g);
                        dx
                    }
                    BaselineCellCache::Gru(c) => {
                        let layer = Gru::new(1, self.config.recurrent_units)?;
                        let (dx, g) = layer.backward(c, self.layer_params("gru")?, &d_state)?;
                        grads.insert("gru".into(), g);
                        dx
                    }
                };
                Ok((dx, grads))
            }
            CacheInner::Hybrid(hybrid) => {
                let h = *hybrid;
                let dropout = self.dropout()?;

                let (d_pooled, head_grads) =
                    self.head()?.backward(h.head, self.layer_params("head")?, upstream)?;
                grads.insert("head".into(), head_grads);
                let d_block2 = GlobalAvgPool.backward(h.pool, &d_pooled)?;

                // Second residual: block2 = norm2(block1 + drop2(ffn(block1))).
                let (d_sum2, norm2_grads) =
                    self.norm()?.backward(h.norm2, self.layer_params("norm2")?, &d_block2)?;
                grads.insert("norm2".into(), norm2_grads);
                let d_ffn_out = dropout.backward(h.drop2, &d_sum2)?;
                let (d_block1_ffn, ffn_grads) =
                    self.ffn()?.backward(h.ffn, self.layer_params("ffn")?, &d_ffn_out)?;
                grads.insert("ffn".into(), ffn_grads);
                let d_block1 = d_sum2.add(&d_block1_ffn)?;

                // First residual: block1 = norm1(seq + drop1(attn(seq))).
                let (d_sum1, norm1_grads) =
                    self.norm()?.backward(h.norm1, self.layer_params("norm1")?, &d_block1)?;
                grads.insert("norm1".into(), norm1_grads);
                let d_attn_out = dropout.backward(h.drop1, &d_sum1)?;
                let (d_seq_attn, attn_grads) =
                    self.attention()?.backward(h.attn, self.layer_params("attn")?, &d_attn_out)?;
                grads.insert("attn".into(), attn_grads);
                let d_seq = d_sum1.add(&d_seq_attn)?;

                let (d_features, lstm_grads) =
                    self.hybrid_lstm()?.backward(h.lstm, self.layer_params("lstm")?, &d_seq)?;
                grads.insert("lstm".into(), lstm_grads);
                let (dx, conv_grads) =
                    self.conv()?.backward(h.conv, self.layer_params("conv")?, &d_features)?;
                grads.insert("conv".into(), conv_grads);
                Ok((dx, grads))
            }
        }
    }

    /// Deterministic eval-mode prediction: dropout off, nothing drawn.
    pub fn predict(&self, windows: &Tensor) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, _) = self.forward(windows, false, &mut rng)?;
        Ok(y)
    }
}

/// Builds a model with freshly initialized parameters. Initialization is a
/// pure function of `config` (including its seed).
pub fn build_model(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = BTreeMap::new();
    let model = Model { config: *config, params: BTreeMap::new() };
    match config.architecture {
        Architecture::ConvLstmTransNet => {
            // Pipeline order fixes the draw sequence: conv, lstm, attention,
            // ffn, then the head; the norms draw nothing.
            params.insert("conv".to_string(), model.conv()?.init_params(&mut rng)?);
            params.insert("lstm".to_string(), model.hybrid_lstm()?.init_params(&mut rng)?);
            params.insert("attn".to_string(), model.attention()?.init_params(&mut rng)?);
            params.insert("ffn".to_string(), model.ffn()?.init_params(&mut rng)?);
            params.insert("norm1".to_string(), model.norm()?.init_params()?);
            params.insert("norm2".to_string(), model.norm()?.init_params()?);
            params.insert("head".to_string(), model.head()?.init_params(&mut rng)?);
        }
        Architecture::Rnn => {
            let cell = Rnn::new(1, config.recurrent_units)?;
            params.insert("rnn".to_string(), cell.init_params(&mut rng)?);
            params.insert("head".to_string(), model.head()?.init_params(&mut rng)?);
        }
        Architecture::Lstm => {
            let cell = Lstm::new(1, config.recurrent_units)?;
            params.insert("lstm".to_string(), cell.init_params(&mut rng)?);
            params.insert("head".to_string(), model.head()?.init_params(&mut rng)?);
        }
        Architecture::Gru => {
            let cell = Gru::new(1, config.recurrent_units)?;
            params.insert("gru".to_string(), cell.init_params(&mut rng)?);
            params.insert("head".to_string(), model.head()?.init_params(&mut rng)?);
        }
    }
    Ok(Model { config: *config, params })
}

/// One-step-ahead prediction in normalized space.
///
/// With `training` false this is the deterministic eval path. With it true
/// dropout is applied from a generator freshly seeded with the model seed;
/// the training loop does not use this entry point, it threads its own
/// generator through [`Model::forward`] so masks differ across steps.
pub fn forward_predict(model: &Model, windows: &Tensor, training: bool) -> Result<Tensor> {
    if !training {
        return model.predict(windows);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config().seed);
    let (y, _) = model.forward(windows, true, &mut rng)?;
    Ok(y)
}

/// Sign with a dead zero: FGSM leaves zero-gradient coordinates unperturbed.
fn grad_sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fast gradient sign perturbation of input windows:
/// `x' = x + epsilon * sign(d MSE / d x)`, computed in eval mode.
pub fn fgsm_perturb(
    model: &Model,
    windows: &Tensor,
    targets: &Tensor,
    epsilon: f64,
) -> Result<Tensor> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Config(format!(
            "epsilon must be non-negative and finite, got {epsilon}"
        )));
    }
    let grad = input_gradient(model, windows, targets)?;
    Ok(windows.zip_map(&grad, |x, g| x + epsilon * grad_sign(g))?)
}

/// Gradient of the MSE loss with respect to the input windows, eval mode.
pub fn input_gradient(model: &Model, windows: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (pred, cache) = model.forward(windows, false, &mut rng)?;
    if targets.shape() != pred.shape() {
        return Err(Error::Shape(format!(
            "targets shape {:?} does not match predictions {:?}",
            targets.shape(),
            pred.shape()
        )));
    }
    let batch = pred.shape()[0] as f64;
    let upstream = pred.zip_map(targets, |p, t| 2.0 * (p - t) / batch)?;
    let (dx, _) = model.backward(cache, &upstream)?;
    Ok(dx)
}
