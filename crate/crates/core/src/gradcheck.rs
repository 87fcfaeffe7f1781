//! The full gradient verification suite: every layer's analytic backward
//! pass, and the assembled models, checked against central finite
//! differences of a scalar MSE objective.
//!
//! Each suite entry covers one layer or model kind over several random
//! shapes, merged into a single report. The objective is the mean squared
//! difference between the forward output and a fixed random target; its
//! gradient with respect to the output seeds the backward pass, and the
//! resulting input and parameter gradients are compared coordinate-wise
//! against two-sided difference quotients of the forward pass alone.
//!
//! Dropout cannot be probed through a re-randomizing forward pass, so its
//! entry freezes one sampled mask and differentiates the resulting
//! deterministic map. The assembled hybrid is checked with dropout disabled
//! for the same reason.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::attention::MultiHeadAttention;
use crate::layers::conv::Conv1d;
use crate::layers::dense::Dense;
use crate::layers::dropout::Dropout;
use crate::layers::ffn::PositionWiseFfn;
use crate::layers::norm::LayerNorm;
use crate::layers::pool::GlobalAvgPool;
use crate::layers::recurrent::{Gru, Lstm, Rnn};
use crate::layers::{LayerParams, Padding};
use crate::model::{build_model, Architecture, ModelConfig};
use crate::numerics::{numeric_gradient, GradCheckReport, Tensor, DEFAULT_FD_STEP};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_ABS_FLOOR: f64 = 1e-7;
pub const DEFAULT_SHAPES_PER_CASE: usize = 3;

/// Step for whole-model difference quotients. The composite of ten layers
/// has much larger third derivatives than any single layer (normalization
/// terms contribute 1/sigma^3 factors at small widths), so the h^2
/// truncation error at the single-layer step can reach the tolerance while
/// the analytic gradient is correct. A finer step keeps truncation around
/// 1e-9 and stays two decades above the 1e-10 roundoff level of the loss.
const MODEL_FD_STEP: f64 = 1e-6;

/// One named line of the suite: a layer or model kind, merged over shapes.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SuiteEntry {
    pub label: &'static str,
    pub report: GradCheckReport,
}

pub fn suite_passed(entries: &[SuiteEntry]) -> bool {
    entries.iter().all(|e| e.report.passed)
}

fn mse_objective(out: &Tensor, target: &Tensor) -> Result<f64> {
    let diff = out.sub(target)?;
    Ok(diff.data().iter().map(|v| v * v).sum::<f64>() / out.len() as f64)
}

fn mse_upstream(out: &Tensor, target: &Tensor) -> Result<Tensor> {
    let n = out.len() as f64;
    out.zip_map(target, |o, t| 2.0 * (o - t) / n)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive dims")
}

/// Numeric parameter gradients share this pattern: rebuild the parameter
/// set with one tensor swapped and re-run the pure forward map.
fn check_params(
    report: &mut GradCheckReport,
    params: &LayerParams,
    grads: &LayerParams,
    forward_loss: impl Fn(&LayerParams) -> Result<f64>,
) -> Result<()> {
    for (name, tensor) in params.iter() {
        let numeric = numeric_gradient(
            |t| {
                let mut probe = params.clone();
                probe.replace(name, t.clone())?;
                forward_loss(&probe)
            },
            tensor,
            DEFAULT_FD_STEP,
        )?;
        report.record(name, grads.get(name)?, &numeric, DEFAULT_ABS_FLOOR);
    }
    Ok(())
}

fn check_conv(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for case in 0..shapes {
        let kernel = rng.gen_range(1..=3);
        let time = rng.gen_range(kernel.max(2)..=5);
        let batch = rng.gen_range(1..=3);
        let cin = rng.gen_range(1..=3);
        let filters = rng.gen_range(1..=4);
        let padding = if case % 2 == 0 { Padding::Same } else { Padding::Valid };
        let layer = Conv1d::new(kernel, cin, filters)?
            .with_padding(padding)
            .with_relu(true);
        let params = layer.init_params(rng)?;
        let x = random_tensor(&[batch, time, cin], rng);
        let (out, cache) = layer.forward(&x, &params)?;
        let target = random_tensor(out.shape(), rng);
        let upstream = mse_upstream(&out, &target)?;
        let (dx, grads) = layer.backward(cache, &params, &upstream)?;

        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&layer.forward(xt, &params)?.0, &target),
            &x,
            DEFAULT_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
        check_params(&mut report, &params, &grads, |p| {
            mse_objective(&layer.forward(&x, p)?.0, &target)
        })?;
    }
    Ok(report)
}

fn check_dense(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for _ in 0..shapes {
        let layer = Dense::new(rng.gen_range(1..=5), rng.gen_range(1..=4))?;
        let params = layer.init_params(rng)?;
        let x = random_tensor(&[rng.gen_range(1..=4), layer.in_dim], rng);
        let (out, cache) = layer.forward(&x, &params)?;
        let target = random_tensor(out.shape(), rng);
        let upstream = mse_upstream(&out, &target)?;
        let (dx, grads) = layer.backward(cache, &params, &upstream)?;

        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&layer.forward(xt, &params)?.0, &target),
            &x,
            DEFAULT_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
        check_params(&mut report, &params, &grads, |p| {
            mse_objective(&layer.forward(&x, p)?.0, &target)
        })?;
    }
    Ok(report)
}

/// The three recurrent layers share one probing pattern; a macro would hide
/// less than it saves, so each gets a thin wrapper over this body.
macro_rules! check_recurrent {
    ($fn_name:ident, $layer:ident) => {
        fn $fn_name(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
            let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
            for case in 0..shapes {
                let layer = $layer::new(rng.gen_range(1..=3), rng.gen_range(1..=4))?
                    .with_sequences(case % 2 == 1);
                let params = layer.init_params(rng)?;
                let x = random_tensor(
                    &[rng.gen_range(1..=3), rng.gen_range(2..=4), layer.in_dim],
                    rng,
                );
                let (out, cache) = layer.forward(&x, &params)?;
                let target = random_tensor(out.shape(), rng);
                let upstream = mse_upstream(&out, &target)?;
                let (dx, grads) = layer.backward(cache, &params, &upstream)?;

                let numeric_dx = numeric_gradient(
                    |xt| mse_objective(&layer.forward(xt, &params)?.0, &target),
                    &x,
                    DEFAULT_FD_STEP,
                )?;
                report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
                check_params(&mut report, &params, &grads, |p| {
                    mse_objective(&layer.forward(&x, p)?.0, &target)
                })?;
            }
            Ok(report)
        }
    };
}

check_recurrent!(check_rnn, Rnn);
check_recurrent!(check_lstm, Lstm);
check_recurrent!(check_gru, Gru);

fn check_attention(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for _ in 0..shapes {
        let heads = rng.gen_range(1..=2);
        let d_model = heads * rng.gen_range(2..=3);
        let layer = MultiHeadAttention::new(d_model, heads)?;
        let params = layer.init_params(rng)?;
        let x = random_tensor(&[rng.gen_range(1..=3), rng.gen_range(2..=4), d_model], rng);
        let (out, cache) = layer.forward(&x, &params)?;
        let target = random_tensor(out.shape(), rng);
        let upstream = mse_upstream(&out, &target)?;
        let (dx, grads) = layer.backward(cache, &params, &upstream)?;

        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&layer.forward(xt, &params)?.0, &target),
            &x,
            DEFAULT_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
        check_params(&mut report, &params, &grads, |p| {
            mse_objective(&layer.forward(&x, p)?.0, &target)
        })?;
    }
    Ok(report)
}

fn check_ffn(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for _ in 0..shapes {
        let layer = PositionWiseFfn::new(rng.gen_range(2..=4), rng.gen_range(2..=6))?;
        let params = layer.init_params(rng)?;
        let x = random_tensor(
            &[rng.gen_range(1..=3), rng.gen_range(2..=4), layer.d_model],
            rng,
        );
        let (out, cache) = layer.forward(&x, &params)?;
        let target = random_tensor(out.shape(), rng);
        let upstream = mse_upstream(&out, &target)?;
        let (dx, grads) = layer.backward(cache, &params, &upstream)?;

        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&layer.forward(xt, &params)?.0, &target),
            &x,
            DEFAULT_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
        check_params(&mut report, &params, &grads, |p| {
            mse_objective(&layer.forward(&x, p)?.0, &target)
        })?;
    }
    Ok(report)
}

fn check_layer_norm(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for _ in 0..shapes {
        let layer = LayerNorm::new(rng.gen_range(2..=5))?;
        let params = layer.init_params()?;
        let x = random_tensor(&[rng.gen_range(1..=3), rng.gen_range(2..=4), layer.d], rng);
        let (out, cache) = layer.forward(&x, &params)?;
        let target = random_tensor(out.shape(), rng);
        let upstream = mse_upstream(&out, &target)?;
        let (dx, grads) = layer.backward(cache, &params, &upstream)?;

        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&layer.forward(xt, &params)?.0, &target),
            &x,
            DEFAULT_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
        check_params(&mut report, &params, &grads, |p| {
            mse_objective(&layer.forward(&x, p)?.0, &target)
        })?;
    }
    Ok(report)
}

fn check_pool(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for _ in 0..shapes {
        let x = random_tensor(
            &[rng.gen_range(1..=3), rng.gen_range(2..=5), rng.gen_range(1..=4)],
            rng,
        );
        let (out, cache) = GlobalAvgPool.forward(&x)?;
        let target = random_tensor(out.shape(), rng);
        let upstream = mse_upstream(&out, &target)?;
        let dx = GlobalAvgPool.backward(cache, &upstream)?;
        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&GlobalAvgPool.forward(xt)?.0, &target),
            &x,
            DEFAULT_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
    }
    Ok(report)
}

/// One sampled mask, frozen, then differentiated as a fixed linear map.
fn check_dropout(rng: &mut ChaCha8Rng, shapes: usize) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for _ in 0..shapes {
        let layer = Dropout::new(0.3)?;
        let x = random_tensor(&[rng.gen_range(2..=3), rng.gen_range(2..=4)], rng);
        let mut mask_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let (out, cache) = layer.forward(&x, true, &mut mask_rng)?;
        let mask = cache.mask().cloned().unwrap_or_else(|| {
            Tensor::filled(x.shape(), 1.0)
        });
        let target = random_tensor(out.shape(), rng);
        let upstream = mse_upstream(&out, &target)?;
        let dx = layer.backward(cache, &upstream)?;
        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&xt.mul_elem(&mask)?, &target),
            &x,
            DEFAULT_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);
    }
    Ok(report)
}

/// Whole-model check through the public forward/backward surface,
/// eval mode so the map stays deterministic under probing.
fn check_model(
    architecture: Architecture,
    rng: &mut ChaCha8Rng,
    shapes: usize,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
    for case in 0..shapes {
        let heads = rng.gen_range(1..=2);
        let config = ModelConfig {
            architecture,
            window_length: rng.gen_range(3..=5),
            conv_filters: rng.gen_range(2..=3),
            conv_kernel: rng.gen_range(1..=3),
            recurrent_units: heads * rng.gen_range(2..=3),
            heads,
            d_ff: rng.gen_range(2..=5),
            dropout_rate: 0.0,
            padding: if case % 2 == 0 { Padding::Same } else { Padding::Valid },
            seed: rng.gen(),
        };
        let model = build_model(&config)?;
        let batch = rng.gen_range(1..=3);
        let x = random_tensor(&[batch, config.window_length, 1], rng);
        let target = random_tensor(&[batch, 1], rng);

        let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
        let (out, cache) = model.forward(&x, false, &mut eval_rng)?;
        let upstream = mse_upstream(&out, &target)?;
        let (dx, grads) = model.backward(cache, &upstream)?;

        let numeric_dx = numeric_gradient(
            |xt| mse_objective(&model.predict(xt)?, &target),
            &x,
            MODEL_FD_STEP,
        )?;
        report.record("input", &dx, &numeric_dx, DEFAULT_ABS_FLOOR);

        for (layer_name, layer_params) in model.params() {
            for (name, tensor) in layer_params.iter() {
                let numeric = numeric_gradient(
                    |t| {
                        let mut probe = model.clone();
                        probe
                            .params_mut()
                            .get_mut(layer_name)
                            .unwrap()
                            .replace(name, t.clone())?;
                        mse_objective(&probe.predict(&x)?, &target)
                    },
                    tensor,
                    MODEL_FD_STEP,
                )?;
                let flat = format!("{layer_name}.{name}");
                report.record(&flat, grads[layer_name].get(name)?, &numeric, DEFAULT_ABS_FLOOR);
            }
        }
    }
    Ok(report)
}

/// Runs the whole suite. Deterministic in `seed`; `shapes_per_case` random
/// shapes per entry.
pub fn run_gradient_suite(seed: u64, shapes_per_case: usize) -> Result<Vec<SuiteEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shapes_per_case;
    let entries = vec![
        SuiteEntry { label: "conv1d", report: check_conv(&mut rng, n)? },
        SuiteEntry { label: "dense", report: check_dense(&mut rng, n)? },
        SuiteEntry { label: "rnn", report: check_rnn(&mut rng, n)? },
        SuiteEntry { label: "lstm", report: check_lstm(&mut rng, n)? },
        SuiteEntry { label: "gru", report: check_gru(&mut rng, n)? },
        SuiteEntry {
            label: "multi_head_attention",
            report: check_attention(&mut rng, n)?,
        },
        SuiteEntry { label: "position_wise_ffn", report: check_ffn(&mut rng, n)? },
        SuiteEntry { label: "layer_norm", report: check_layer_norm(&mut rng, n)? },
        SuiteEntry { label: "global_avg_pool", report: check_pool(&mut rng, n)? },
        SuiteEntry { label: "dropout_frozen_mask", report: check_dropout(&mut rng, n)? },
        SuiteEntry {
            label: "convlstmtransnet",
            report: check_model(Architecture::ConvLstmTransNet, &mut rng, n)?,
        },
        SuiteEntry {
            label: "rnn_model",
            report: check_model(Architecture::Rnn, &mut rng, n)?,
        },
        SuiteEntry {
            label: "lstm_model",
            report: check_model(Architecture::Lstm, &mut rng, n)?,
        },
        SuiteEntry {
            label: "gru_model",
            report: check_model(Architecture::Gru, &mut rng, n)?,
        },
    ];
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes_at_default_settings() {
        let entries = run_gradient_suite(crate::model::DEFAULT_SEED, DEFAULT_SHAPES_PER_CASE).unwrap();
        assert_eq!(entries.len(), 14);
        for entry in &entries {
            assert!(
                entry.report.passed,
                "{}: max rel error {:.3e} (worst: {:?})",
                entry.label,
                entry.report.max_rel_error,
                entry
                    .report
                    .per_parameter_errors
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(b.1))
            );
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let a = run_gradient_suite(7, 1).unwrap();
        let b = run_gradient_suite(7, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.report.max_rel_error, y.report.max_rel_error);
            assert_eq!(x.report.max_abs_error, y.report.max_abs_error);
        }
    }

    #[test]
    fn a_broken_gradient_is_caught() {
        // Sanity of the harness itself: corrupt one analytic gradient and
        // the report must fail.
        let mut report = GradCheckReport::new(DEFAULT_TOLERANCE);
        let analytic = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let numeric = Tensor::new(vec![2], vec![1.0, 2.5]).unwrap();
        report.record("broken", &analytic, &numeric, DEFAULT_ABS_FLOOR);
        assert!(!report.passed);
    }
}
