//! Min-max scaling to [0, 1], fitted on the training split only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted scaling bounds. `max >= min` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: f64,
    pub max: f64,
}

impl ScalerParams {
    /// The identity map: transform and inverse both leave values unchanged.
    pub fn identity() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::Data(format!(
                "scaler bounds must be finite, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.max < self.min {
            return Err(Error::Data(format!(
                "scaler max {} below min {}",
                self.max, self.min
            )));
        }
        Ok(())
    }

    fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Fits bounds on the given values. Empty input is an error.
pub fn fit_scaler(values: &[f64]) -> Result<ScalerParams> {
    if values.is_empty() {
        return Err(Error::Data("cannot fit a scaler on empty data".into()));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite value {v} in scaler fit")));
        }
        min = min.min(*v);
        max = max.max(*v);
    }
    Ok(ScalerParams { min, max })
}

/// Maps values through `(v - min) / (max - min)`. A degenerate fit
/// (max = min) maps everything to 0.
pub fn transform(values: &[f64], s: &ScalerParams) -> Vec<f64> {
    let range = s.range();
    if range == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - s.min) / range).collect()
}

/// Exact affine inverse of [`transform`]. Under a degenerate fit every
/// input returns the fitted constant.
pub fn inverse(normalized: &[f64], s: &ScalerParams) -> Vec<f64> {
    let range = s.range();
    if range == 0.0 {
        return vec![s.min; normalized.len()];
    }
    normalized.iter().map(|v| v * range + s.min).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// [2, 4, 6] maps to [0, 0.5, 1].
    #[test]
    fn affine_map_matches_hand_case() {
        let s = fit_scaler(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(s, ScalerParams { min: 2.0, max: 6.0 });
        assert_eq!(transform(&[2.0, 4.0, 6.0], &s), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_series_maps_to_zero_and_inverts_to_the_constant() {
        let s = fit_scaler(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(transform(&[5.0, 5.0], &s), vec![0.0, 0.0]);
        assert_eq!(inverse(&[0.0, 0.7], &s), vec![5.0, 5.0]);
    }

    #[test]
    fn round_trip_is_tight_on_random_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let values: Vec<f64> = (0..500).map(|_| rng.gen_range(-1e9..4e10)).collect();
        let s = fit_scaler(&values).unwrap();
        let back = inverse(&transform(&values, &s), &s);
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn values_outside_the_fit_range_are_not_clipped() {
        let s = fit_scaler(&[0.0, 10.0]).unwrap();
        assert_eq!(transform(&[-5.0, 15.0], &s), vec![-0.5, 1.5]);
    }

    #[test]
    fn empty_or_non_finite_fit_is_rejected() {
        assert!(fit_scaler(&[]).is_err());
        assert!(fit_scaler(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn identity_scaler_is_a_no_op() {
        let s = ScalerParams::identity();
        let v = [0.25, 1e9, -3.0];
        assert_eq!(transform(&v, &s), v.to_vec());
        assert_eq!(inverse(&v, &s), v.to_vec());
    }
}
