//! Randomized invariants over the numeric kernels and the data pipeline.
//!
//! Each property states a contract the rest of the crate leans on; proptest
//! hunts for counterexamples over the stated input families.

use netforecast::data::{
    chrono_split, counters_to_bps, fit_scaler, forward_fill, inverse, make_windows,
    parse_telemetry_json, transform, BpsOptions, TimeSeries,
};
use netforecast::metrics::compute_metrics;
use netforecast::numerics::{matmul, numeric_gradient, softmax_last_axis, DEFAULT_FD_STEP};
use netforecast::Tensor;
use proptest::prelude::*;

fn tensor2(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, cols], data).unwrap()
}

proptest! {
    #[test]
    fn softmax_rows_are_probability_vectors(
        rows in 1usize..6,
        cols in 1usize..8,
        seedling in proptest::collection::vec(-30.0f64..30.0, 1..48),
    ) {
        let mut data = seedling;
        data.resize(rows * cols, 0.25);
        let y = softmax_last_axis(&tensor2(rows, cols, data));
        for row in y.data().chunks(cols) {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12, "row sums to {sum}");
            for &p in row {
                prop_assert!((0.0..=1.0).contains(&p), "entry {p} outside [0, 1]");
            }
        }
    }

    #[test]
    fn matmul_is_associative(
        m in 1usize..6,
        k in 1usize..6,
        l in 1usize..6,
        n in 1usize..6,
        fill in proptest::collection::vec(-2.0f64..2.0, 108),
    ) {
        let mut it = fill.into_iter().cycle();
        let a = tensor2(m, k, (&mut it).take(m * k).collect());
        let b = tensor2(k, l, (&mut it).take(k * l).collect());
        let c = tensor2(l, n, (&mut it).take(l * n).collect());
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            prop_assert!(
                (x - y).abs() / scale < 1e-9,
                "associativity violated: {x} vs {y}"
            );
        }
    }

    #[test]
    fn quadratic_form_numeric_gradient_matches_closed_form(
        a_fill in proptest::collection::vec(-1.5f64..1.5, 25),
        x_fill in proptest::collection::vec(-2.0f64..2.0, 5),
    ) {
        let a = tensor2(5, 5, a_fill);
        let x = Tensor::new(vec![1, 5], x_fill).unwrap();
        let f = |probe: &Tensor| {
            let ax = matmul(probe, &a.transpose2()?)?;
            Ok(probe.data().iter().zip(ax.data()).map(|(xi, axi)| xi * axi).sum())
        };
        let numeric = numeric_gradient(f, &x, DEFAULT_FD_STEP).unwrap();
        // d/dx of x A xT is x (A + AT).
        let closed = matmul(&x, &a.add(&a.transpose2().unwrap()).unwrap()).unwrap();
        for (g, c) in numeric.data().iter().zip(closed.data()) {
            let scale = g.abs().max(c.abs()).max(1e-3);
            prop_assert!((g - c).abs() / scale < 1e-6, "gradient {g} vs {c}");
        }
    }

    #[test]
    fn scaler_round_trip_recovers_values(
        values in proptest::collection::vec(-100.0f64..100.0, 2..64),
    ) {
        let scaler = fit_scaler(&values).unwrap();
        let back = inverse(&transform(&values, &scaler), &scaler);
        for (v, b) in values.iter().zip(&back) {
            prop_assert!((v - b).abs() < 1e-12, "{v} came back as {b}");
        }
    }

    #[test]
    fn window_overlap_is_consistent(
        values in proptest::collection::vec(-1e6f64..1e6, 3..120),
        window in 1usize..10,
    ) {
        prop_assume!(values.len() > window + 1);
        let timestamps: Vec<i64> = (0..values.len() as i64).map(|i| i * 300).collect();
        let ds = make_windows(&timestamps, &values, window).unwrap();
        prop_assert_eq!(ds.len(), values.len() - window);
        // Inputs are [n, window, 1] row-major; entry (i, j) sits at i*window+j.
        let inputs = ds.inputs().data();
        let targets = ds.targets().data();
        if window >= 2 {
            for i in 0..ds.len() - 1 {
                prop_assert_eq!(
                    inputs[i * window + window - 1],
                    inputs[(i + 1) * window + window - 2]
                );
            }
        }
        // Each window's successor value is the next window's newest input.
        for i in 0..ds.len() - 1 {
            prop_assert_eq!(targets[i], inputs[(i + 1) * window + window - 1]);
        }
    }

    #[test]
    fn wape_is_scale_invariant(
        pairs in proptest::collection::vec((0.5f64..2.0, 0.5f64..2.0), 1..32),
        alpha in 0.1f64..10.0,
    ) {
        let (pred, actual): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = compute_metrics(&pred, &actual).unwrap();
        let scaled = compute_metrics(
            &pred.iter().map(|p| alpha * p).collect::<Vec<_>>(),
            &actual.iter().map(|o| alpha * o).collect::<Vec<_>>(),
        )
        .unwrap();
        prop_assert!(
            (base.wape - scaled.wape).abs() < 1e-12,
            "wape {} became {} under scale {alpha}",
            base.wape,
            scaled.wape
        );
    }

    #[test]
    fn wape_is_exactly_invariant_under_dyadic_scaling(
        pairs in proptest::collection::vec((0.0f64..1e4, 0.01f64..1e4), 1..48),
        exponent in -12i32..12,
    ) {
        let alpha = (2.0f64).powi(exponent);
        let (pred, actual): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = compute_metrics(&pred, &actual).unwrap();
        let scaled = compute_metrics(
            &pred.iter().map(|p| alpha * p).collect::<Vec<_>>(),
            &actual.iter().map(|o| alpha * o).collect::<Vec<_>>(),
        )
        .unwrap();
        // Power-of-two scaling is exact in binary floating point, so the
        // ratio of sums is bit-identical.
        prop_assert_eq!(base.wape, scaled.wape);
    }

    #[test]
    fn rmse_dominates_mae(
        pairs in proptest::collection::vec((-1e5f64..1e5, 0.1f64..1e5), 1..64),
    ) {
        let (pred, actual): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let report = compute_metrics(&pred, &actual).unwrap();
        prop_assert!(report.rmse >= report.mae - 1e-12);
    }

    #[test]
    fn forward_fill_is_idempotent(
        raw in proptest::collection::vec(proptest::option::weighted(0.7, 0.0f64..1e9), 1..80),
    ) {
        prop_assume!(raw.iter().any(Option::is_some));
        let timestamps: Vec<i64> = (0..raw.len() as i64).map(|i| i * 300).collect();
        let series = TimeSeries::new(timestamps, raw).unwrap();
        let once = forward_fill(&series).unwrap();
        prop_assert_eq!(once.missing_count(), 0);
        let twice = forward_fill(&once).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn monotone_counters_yield_bounded_bps(
        deltas in proptest::collection::vec(0u64..1_500_000_000_000, 2..50),
        start in 0u64..1_000_000_000,
    ) {
        // Capacity 40e9 bps over 300 s allows at most 1.5e12 octets per
        // interval, so these counters never exceed the line rate.
        let mut counter = start;
        let mut records = String::from("[");
        for (i, d) in deltas.iter().enumerate() {
            if i > 0 {
                records.push(',');
            }
            records.push_str(&format!(r#"{{"ts":{},"octets":{}}}"#, 1704067200 + 300 * i as i64, counter));
            counter += d;
        }
        records.push(']');
        let raw = parse_telemetry_json(&records).unwrap();
        let series = counters_to_bps(&raw, &BpsOptions::default()).unwrap();
        prop_assert_eq!(series.len(), deltas.len() - 1);
        prop_assert_eq!(series.missing_count(), 0);
        for v in series.values().iter().flatten() {
            prop_assert!((0.0..=40e9).contains(v), "bps {v} out of range");
        }
    }

    #[test]
    fn pipeline_keeps_train_targets_in_unit_interval(
        values in proptest::collection::vec(0.0f64..4e10, 30..200),
        window in 1usize..5,
        fraction in 0.5f64..0.9,
    ) {
        let timestamps: Vec<i64> = (0..values.len() as i64).map(|i| i * 300).collect();
        let series = TimeSeries::new(timestamps, values.iter().copied().map(Some).collect()).unwrap();
        let filled = forward_fill(&series).unwrap();
        let split = chrono_split(&filled, fraction, window);
        prop_assume!(split.is_ok());
        let (train_part, test_part) = split.unwrap();

        prop_assert_eq!(train_part.len() + test_part.len(), filled.len());
        prop_assert_eq!(train_part.len(), (filled.len() as f64 * fraction).floor() as usize);

        let train_values = train_part.dense_values().unwrap();
        let scaler = fit_scaler(&train_values).unwrap();
        let train_ds =
            make_windows(train_part.timestamps(), &transform(&train_values, &scaler), window)
                .unwrap();
        for &t in train_ds.targets().data() {
            prop_assert!((0.0..=1.0).contains(&t), "train target {t} left [0, 1]");
        }

        // Test values pass through the same affine map with no clipping, so
        // values beyond the training range land outside [0, 1] untouched.
        let test_values = test_part.dense_values().unwrap();
        let test_scaled = transform(&test_values, &scaler);
        for (v, s) in test_values.iter().zip(&test_scaled) {
            let expected = (v - scaler.min) / (scaler.max - scaler.min);
            prop_assert!((s - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
    }
}
