//! Synthetic traffic generator for benchmarks and tests.
//!
//! The shape mimics a loaded provider-edge port: a carried base load, a
//! diurnal sinusoid whose period is one day of samples, a slower weekly
//! swell, Gaussian measurement noise, and occasional short traffic bursts.
//! Everything is drawn from one seeded generator, so a seed fully determines
//! the series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::series::TimeSeries;

/// Timestamp of the first synthetic sample (2024-01-01T00:00:00Z).
pub const SYNTH_START_TS: i64 = 1_704_067_200;

pub const DEFAULT_SAMPLES_PER_DAY: usize = 288;

/// Relative component sizes, as fractions of capacity.
const BASE_LEVEL: f64 = 0.45;
const DIURNAL_AMPLITUDE: f64 = 0.25;
const WEEKLY_AMPLITUDE: f64 = 0.08;
const NOISE_SIGMA: f64 = 0.02;
/// Per-sample probability that a burst starts.
const BURST_PROBABILITY: f64 = 0.004;

/// Generates `days * samples_per_day` samples clipped to [0, capacity].
/// Sample spacing is `86400 / samples_per_day` seconds (300 s at the
/// default density).
pub fn synth_generate(
    days: usize,
    samples_per_day: usize,
    seed: u64,
    capacity_bps: f64,
) -> Result<TimeSeries> {
    if days == 0 {
        return Err(Error::Config("synthetic series needs at least one day".into()));
    }
    if samples_per_day == 0 || samples_per_day > 86_400 {
        return Err(Error::Config(format!(
            "samples_per_day must lie in [1, 86400], got {samples_per_day}"
        )));
    }
    if !(capacity_bps.is_finite() && capacity_bps > 0.0) {
        return Err(Error::Config(format!(
            "capacity must be positive and finite, got {capacity_bps}"
        )));
    }

    let n = days * samples_per_day;
    let spacing = (86_400 / samples_per_day).max(1) as i64;
    let period = samples_per_day as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_SIGMA * capacity_bps)
        .map_err(|e| Error::Numeric(format!("noise distribution: {e}")))?;

    // Bursts are added on top of the smooth components; each one decays
    // linearly over its duration.
    let mut burst = vec![0.0f64; n];
    let mut values = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    for i in 0..n {
        let phase = i as f64 / period;
        let diurnal = DIURNAL_AMPLITUDE * capacity_bps * (std::f64::consts::TAU * phase).sin();
        let weekly = WEEKLY_AMPLITUDE * capacity_bps * (std::f64::consts::TAU * phase / 7.0).sin();
        let eps: f64 = noise.sample(&mut rng);
        if rng.gen::<f64>() < BURST_PROBABILITY {
            let amplitude = rng.gen_range(0.05..0.20) * capacity_bps;
            let duration = rng.gen_range(3..=18usize);
            for (j, slot) in burst[i..(i + duration).min(n)].iter_mut().enumerate() {
                *slot += amplitude * (1.0 - j as f64 / duration as f64);
            }
        }
        let raw = BASE_LEVEL * capacity_bps + diurnal + weekly + eps + burst[i];
        values.push(Some(raw.clamp(0.0, capacity_bps)));
        timestamps.push(SYNTH_START_TS + i as i64 * spacing);
    }
    TimeSeries::new(timestamps, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::telemetry::DEFAULT_CAPACITY_BPS;

    #[test]
    fn length_is_days_times_density() {
        let s = synth_generate(29, 288, 1, DEFAULT_CAPACITY_BPS).unwrap();
        assert_eq!(s.len(), 8352);
        let s2 = synth_generate(2, 10, 1, DEFAULT_CAPACITY_BPS).unwrap();
        assert_eq!(s2.len(), 20);
    }

    #[test]
    fn same_seed_reproduces_the_series_exactly() {
        let a = synth_generate(3, 288, 7, DEFAULT_CAPACITY_BPS).unwrap();
        let b = synth_generate(3, 288, 7, DEFAULT_CAPACITY_BPS).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(3, 288, 8, DEFAULT_CAPACITY_BPS).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn values_stay_within_capacity() {
        let s = synth_generate(10, 288, 3, DEFAULT_CAPACITY_BPS).unwrap();
        for v in s.dense_values().unwrap() {
            assert!((0.0..=DEFAULT_CAPACITY_BPS).contains(&v));
        }
    }

    #[test]
    fn timestamps_advance_at_the_sample_spacing() {
        let s = synth_generate(1, 288, 0, DEFAULT_CAPACITY_BPS).unwrap();
        assert_eq!(s.timestamps()[0], SYNTH_START_TS);
        assert_eq!(s.timestamps()[1] - s.timestamps()[0], 300);
    }

    /// Mean-centered autocorrelation of the 29-day draw: the full-day lag
    /// must beat the half-day lag, which sits in the sinusoid's trough.
    #[test]
    fn diurnal_period_dominates_autocorrelation() {
        let s = synth_generate(29, 288, 11, DEFAULT_CAPACITY_BPS).unwrap();
        let v = s.dense_values().unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let acf = |lag: usize| -> f64 {
            (0..v.len() - lag)
                .map(|i| (v[i] - mean) * (v[i + lag] - mean))
                .sum::<f64>()
                / (v.len() - lag) as f64
        };
        assert!(acf(288) > acf(144), "acf(288)={} acf(144)={}", acf(288), acf(144));
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(synth_generate(0, 288, 1, DEFAULT_CAPACITY_BPS).is_err());
        assert!(synth_generate(1, 0, 1, DEFAULT_CAPACITY_BPS).is_err());
        assert!(synth_generate(1, 288, 1, -5.0).is_err());
    }
}
