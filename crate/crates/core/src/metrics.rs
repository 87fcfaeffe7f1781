//! Point-forecast error metrics: MAE, RMSE, and WAPE.
//!
//! All three reduce the same residuals p_i - o_i over n forecasts:
//!
//! * MAE  = (1/n) Σ |p_i - o_i|
//! * RMSE = sqrt((1/n) Σ (p_i - o_i)^2)
//! * WAPE = Σ |p_i - o_i| / Σ |o_i| × 100
//!
//! WAPE is reported in percent and is invariant under a shared positive
//! rescaling of both arguments; MAE and RMSE carry the data's units.

use serde::Serialize;

use crate::error::{Error, Result};

/// One evaluation summary. `rmse >= mae` always holds (power means).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    /// Percent, so 3.27 means 3.27%.
    pub wape: f64,
    /// Number of forecasts the report covers.
    pub n: usize,
}

/// Computes the three metrics over paired predictions and observations.
///
/// Inputs must be equally long, non-empty, and finite, and the observations
/// must not be all zero; a zero denominator would make WAPE undefined, and
/// that case is an explicit error rather than a NaN in the report.
pub fn compute_metrics(predicted: &[f64], actual: &[f64]) -> Result<MetricsReport> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!(
            "prediction count {} does not match observation count {}",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Data("cannot compute metrics over zero forecasts".into()));
    }
    let n = predicted.len();
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut actual_abs_sum = 0.0;
    for (&p, &o) in predicted.iter().zip(actual) {
        if !(p.is_finite() && o.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in metric input: predicted {p}, actual {o}"
            )));
        }
        let diff = p - o;
        abs_sum += diff.abs();
        sq_sum += diff * diff;
        actual_abs_sum += o.abs();
    }
    if actual_abs_sum == 0.0 {
        return Err(Error::Data(
            "WAPE is undefined when all observations are zero".into(),
        ));
    }
    Ok(MetricsReport {
        mae: abs_sum / n as f64,
        rmse: (sq_sum / n as f64).sqrt(),
        wape: abs_sum / actual_abs_sum * 100.0,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook re-computation with no shared code: index loops and
    /// elementary operations only.
    fn naive_metrics(pred: &[f64], act: &[f64]) -> (f64, f64, f64) {
        let n = pred.len();
        let mut mae = 0.0;
        for i in 0..n {
            mae += (pred[i] - act[i]).abs();
        }
        mae /= n as f64;
        let mut msq = 0.0;
        for i in 0..n {
            msq += (pred[i] - act[i]) * (pred[i] - act[i]);
        }
        let rmse = (msq / n as f64).sqrt();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (pred[i] - act[i]).abs();
            den += act[i].abs();
        }
        (mae, rmse, num / den * 100.0)
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let v = [3.5, 1.25, 9.0];
        let m = compute_metrics(&v, &v).unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.wape, 0.0);
        assert_eq!(m.n, 3);
    }

    #[test]
    fn hand_case_is_reproduced() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 4.0]).unwrap();
        assert!((m.mae - 0.6667).abs() < 1e-4);
        assert!((m.rmse - 0.8165).abs() < 1e-4);
        assert!((m.wape - 25.0).abs() < 1e-4);
    }

    #[test]
    fn agrees_with_naive_reimplementation_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..1000 {
            let n = rng.gen_range(1..40);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let act: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..100.0)).collect();
            let m = compute_metrics(&pred, &act).unwrap();
            let (mae, rmse, wape) = naive_metrics(&pred, &act);
            assert!((m.mae - mae).abs() < 1e-12, "case {case}");
            assert!((m.rmse - rmse).abs() < 1e-12, "case {case}");
            assert!((m.wape - wape).abs() < 1e-12, "case {case}");
            assert!(m.rmse >= m.mae - 1e-15, "case {case}: rmse below mae");
        }
    }

    #[test]
    fn wape_is_scale_invariant() {
        let pred = [1.0, 2.0, 3.0, 5.5];
        let act = [2.0, 2.0, 4.0, 5.0];
        let alpha = 7.3;
        let scaled_pred: Vec<f64> = pred.iter().map(|v| v * alpha).collect();
        let scaled_act: Vec<f64> = act.iter().map(|v| v * alpha).collect();
        let base = compute_metrics(&pred, &act).unwrap();
        let scaled = compute_metrics(&scaled_pred, &scaled_act).unwrap();
        assert!((base.wape - scaled.wape).abs() < 1e-12);
        // MAE and RMSE pick up the scale factor instead.
        assert!((scaled.mae - alpha * base.mae).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(compute_metrics(&[f64::NAN], &[1.0]).is_err());
        assert!(compute_metrics(&[1.0], &[f64::INFINITY]).is_err());
    }
}
