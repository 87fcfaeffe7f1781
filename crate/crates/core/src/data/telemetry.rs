//! Raw telemetry parsing and counter-to-rate conversion.
//!
//! Input documents are JSON arrays of per-sample objects. Counter mode
//! carries the cumulative interface octet count (`{"ts": ..., "octets": ...}`);
//! rate mode carries an already-computed rate (`{"ts": ..., "bps": ...}`).
//! Unknown keys are ignored; mixing the two modes in one document is an
//! error because the units are incompatible.

use serde::Deserialize;

use crate::error::{Error, Result};

use super::series::TimeSeries;

/// Default interface capacity in bits per second.
pub const DEFAULT_CAPACITY_BPS: f64 = 40e9;

/// Nominal sample spacing in seconds.
pub const DEFAULT_INTERVAL_SECONDS: i64 = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterRecord {
    pub ts: i64,
    pub octets: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRecord {
    pub ts: i64,
    pub bps: f64,
}

/// Parsed telemetry with records sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub enum RawTelemetry {
    Counters { records: Vec<CounterRecord>, capacity_bps: f64 },
    Rates { records: Vec<RateRecord>, capacity_bps: f64 },
}

impl RawTelemetry {
    pub fn len(&self) -> usize {
        match self {
            RawTelemetry::Counters { records, .. } => records.len(),
            RawTelemetry::Rates { records, .. } => records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity_bps(&self) -> f64 {
        match self {
            RawTelemetry::Counters { capacity_bps, .. } => *capacity_bps,
            RawTelemetry::Rates { capacity_bps, .. } => *capacity_bps,
        }
    }
}

/// One sample as it appears on the wire; extra keys are dropped here.
#[derive(Deserialize)]
struct WireRecord {
    ts: i64,
    octets: Option<u64>,
    bps: Option<f64>,
}

/// Parses a telemetry document. Records are sorted by timestamp; duplicate
/// timestamps are rejected after sorting. An empty array parses as empty
/// counter-mode telemetry.
pub fn parse_telemetry_json(document: &str) -> Result<RawTelemetry> {
    parse_telemetry_json_with_capacity(document, DEFAULT_CAPACITY_BPS)
}

pub fn parse_telemetry_json_with_capacity(
    document: &str,
    capacity_bps: f64,
) -> Result<RawTelemetry> {
    if !(capacity_bps.is_finite() && capacity_bps > 0.0) {
        return Err(Error::Config(format!(
            "capacity must be positive and finite, got {capacity_bps}"
        )));
    }
    let mut wire: Vec<WireRecord> = serde_json::from_str(document)
        .map_err(|e| Error::Parse(format!("telemetry document: {e}")))?;
    wire.sort_by_key(|r| r.ts);
    for pair in wire.windows(2) {
        if pair[0].ts == pair[1].ts {
            return Err(Error::Parse(format!("duplicate timestamp {}", pair[0].ts)));
        }
    }

    let counters = wire.iter().filter(|r| r.octets.is_some()).count();
    let rates = wire.iter().filter(|r| r.bps.is_some()).count();
    if counters > 0 && rates > 0 {
        return Err(Error::Parse(
            "document mixes counter-mode and rate-mode records".into(),
        ));
    }
    if counters + rates < wire.len() {
        return Err(Error::Parse(
            "record carries neither \"octets\" nor \"bps\"".into(),
        ));
    }

    if rates > 0 {
        let records = wire
            .into_iter()
            .map(|r| {
                let bps = r.bps.unwrap();
                if !bps.is_finite() {
                    return Err(Error::Parse(format!("non-finite bps at ts {}", r.ts)));
                }
                Ok(RateRecord { ts: r.ts, bps })
            })
            .collect::<Result<_>>()?;
        Ok(RawTelemetry::Rates { records, capacity_bps })
    } else {
        let records = wire
            .into_iter()
            .map(|r| CounterRecord { ts: r.ts, octets: r.octets.unwrap() })
            .collect();
        Ok(RawTelemetry::Counters { records, capacity_bps })
    }
}

/// Counter register width for wrap arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterBits {
    B32,
    B64,
}

#[derive(Debug, Clone, Copy)]
pub struct BpsOptions {
    pub interval_seconds: i64,
    pub counter_bits: CounterBits,
    /// When false the values are the literal interval bit counts
    /// (delta_octets * 8) without the division to a per-second rate.
    pub divide_by_interval: bool,
}

impl Default for BpsOptions {
    fn default() -> Self {
        Self {
            interval_seconds: DEFAULT_INTERVAL_SECONDS,
            counter_bits: CounterBits::B64,
            divide_by_interval: true,
        }
    }
}

/// Converts cumulative octet counters to a rate series.
///
/// Each consecutive record pair yields one output point stamped at the later
/// record: `delta = (end - start) mod 2^bits`, `bits = delta * 8`, value
/// `bits / interval_seconds` (or the raw bit count, see [`BpsOptions`]).
/// Pairs whose timestamp gap differs from the nominal interval produce a
/// missing marker instead, so the output length is always records − 1.
pub fn counters_to_bps(raw: &RawTelemetry, opts: &BpsOptions) -> Result<TimeSeries> {
    if opts.interval_seconds <= 0 {
        return Err(Error::Config(format!(
            "interval must be positive, got {} s",
            opts.interval_seconds
        )));
    }
    let records = match raw {
        RawTelemetry::Counters { records, .. } => records,
        RawTelemetry::Rates { .. } => {
            return Err(Error::Data(
                "telemetry is rate-mode; counter conversion does not apply".into(),
            ))
        }
    };
    if records.len() < 2 {
        return Err(Error::Data(format!(
            "counter conversion needs at least 2 records, got {}",
            records.len()
        )));
    }

    let mut timestamps = Vec::with_capacity(records.len() - 1);
    let mut values = Vec::with_capacity(records.len() - 1);
    for pair in records.windows(2) {
        let (start, end) = (pair[0], pair[1]);
        timestamps.push(end.ts);
        if end.ts - start.ts != opts.interval_seconds {
            values.push(None);
            continue;
        }
        let delta_octets: u64 = match opts.counter_bits {
            CounterBits::B64 => end.octets.wrapping_sub(start.octets),
            CounterBits::B32 => {
                let narrow = |v: u64, ts: i64| -> Result<u32> {
                    u32::try_from(v).map_err(|_| {
                        Error::Data(format!(
                            "counter {v} at ts {ts} exceeds the 32-bit register"
                        ))
                    })
                };
                u64::from(narrow(end.octets, end.ts)?.wrapping_sub(narrow(start.octets, start.ts)?))
            }
        };
        // Widen before the ×8 so a near-full 64-bit delta cannot overflow.
        let bits = (delta_octets as u128 * 8) as f64;
        let value = if opts.divide_by_interval {
            bits / opts.interval_seconds as f64
        } else {
            bits
        };
        values.push(Some(value));
    }
    TimeSeries::new(timestamps, values)
}

/// Lifts rate-mode telemetry directly into a series.
pub fn rates_to_series(raw: &RawTelemetry) -> Result<TimeSeries> {
    let records = match raw {
        RawTelemetry::Rates { records, .. } => records,
        RawTelemetry::Counters { .. } => {
            return Err(Error::Data(
                "telemetry is counter-mode; convert with counters_to_bps".into(),
            ))
        }
    };
    TimeSeries::new(
        records.iter().map(|r| r.ts).collect(),
        records.iter().map(|r| Some(r.bps)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_array_parses_as_empty_telemetry() {
        let raw = parse_telemetry_json("[]").unwrap();
        assert!(raw.is_empty());
    }

    #[test]
    fn records_are_sorted_by_timestamp() {
        let raw = parse_telemetry_json(
            r#"[{"ts": 600, "octets": 20}, {"ts": 0, "octets": 5}, {"ts": 300, "octets": 10}]"#,
        )
        .unwrap();
        match raw {
            RawTelemetry::Counters { records, .. } => {
                assert_eq!(records.iter().map(|r| r.ts).collect::<Vec<_>>(), vec![0, 300, 600]);
                assert_eq!(records[0].octets, 5);
            }
            _ => panic!("expected counter mode"),
        }
    }

    #[test]
    fn extra_fields_are_dropped_and_values_preserved() {
        let raw = parse_telemetry_json(
            r#"[{"ts": 0, "octets": 7, "ifDescr": "xe-0/0/0", "ifSpeed": 40000000000}]"#,
        )
        .unwrap();
        match raw {
            RawTelemetry::Counters { records, .. } => {
                assert_eq!(records, vec![CounterRecord { ts: 0, octets: 7 }]);
            }
            _ => panic!("expected counter mode"),
        }
    }

    #[test]
    fn rejects_duplicates_mixed_modes_and_unitless_records() {
        assert!(parse_telemetry_json(r#"[{"ts": 0, "octets": 1}, {"ts": 0, "octets": 2}]"#).is_err());
        assert!(parse_telemetry_json(r#"[{"ts": 0, "octets": 1}, {"ts": 300, "bps": 8.0}]"#).is_err());
        assert!(parse_telemetry_json(r#"[{"ts": 0}]"#).is_err());
        assert!(parse_telemetry_json("{").is_err());
    }

    #[test]
    fn rate_mode_lifts_directly() {
        let raw = parse_telemetry_json(r#"[{"ts": 0, "bps": 1e8}, {"ts": 300, "bps": 2e8}]"#)
            .unwrap();
        let series = rates_to_series(&raw).unwrap();
        assert_eq!(series.dense_values().unwrap(), vec![1e8, 2e8]);
        assert!(counters_to_bps(&raw, &BpsOptions::default()).is_err());
    }

    fn counters(records: &[(i64, u64)]) -> RawTelemetry {
        RawTelemetry::Counters {
            records: records.iter().map(|&(ts, octets)| CounterRecord { ts, octets }).collect(),
            capacity_bps: DEFAULT_CAPACITY_BPS,
        }
    }

    #[test]
    fn equal_counters_give_zero_bps() {
        let raw = counters(&[(0, 1000), (300, 1000)]);
        let series = counters_to_bps(&raw, &BpsOptions::default()).unwrap();
        assert_eq!(series.timestamps(), &[300]);
        assert_eq!(series.dense_values().unwrap(), vec![0.0]);
    }

    /// 3.75e9 octets over 300 s is 3e10 bits / 300 = 1e8 bps exactly.
    #[test]
    fn five_minute_delta_matches_hand_arithmetic() {
        let raw = counters(&[(0, 0), (300, 3_750_000_000)]);
        let series = counters_to_bps(&raw, &BpsOptions::default()).unwrap();
        assert_eq!(series.dense_values().unwrap(), vec![1.0e8]);
    }

    /// A 64-bit wrap from 2^64−4 to 4 is a delta of 8 octets: 64 bits over
    /// 300 s.
    #[test]
    fn wrap_is_modular_in_the_register_width() {
        let raw = counters(&[(0, u64::MAX - 3), (300, 4)]);
        let series = counters_to_bps(&raw, &BpsOptions::default()).unwrap();
        assert_eq!(series.dense_values().unwrap(), vec![64.0 / 300.0]);
    }

    #[test]
    fn thirty_two_bit_mode_wraps_at_the_narrow_register() {
        let raw = counters(&[(0, u64::from(u32::MAX) - 3), (300, 4)]);
        let opts = BpsOptions { counter_bits: CounterBits::B32, ..Default::default() };
        let series = counters_to_bps(&raw, &opts).unwrap();
        assert_eq!(series.dense_values().unwrap(), vec![64.0 / 300.0]);
        // The same counters read as 64-bit registers see a huge backwards
        // jump instead.
        let wide = counters_to_bps(&raw, &BpsOptions::default()).unwrap();
        assert!(wide.dense_values().unwrap()[0] > 1e17);
    }

    #[test]
    fn thirty_two_bit_mode_rejects_oversized_counters() {
        let raw = counters(&[(0, u64::from(u32::MAX) + 1), (300, 5)]);
        let opts = BpsOptions { counter_bits: CounterBits::B32, ..Default::default() };
        assert!(counters_to_bps(&raw, &opts).is_err());
    }

    #[test]
    fn timestamp_gaps_become_missing_markers() {
        let raw = counters(&[(0, 0), (300, 300), (1200, 1200), (1500, 1500)]);
        let series = counters_to_bps(&raw, &BpsOptions::default()).unwrap();
        assert_eq!(series.timestamps(), &[300, 1200, 1500]);
        let values = series.values();
        assert!(values[0].is_some());
        assert!(values[1].is_none());
        assert!(values[2].is_some());
    }

    #[test]
    fn literal_mode_skips_the_interval_division() {
        let raw = counters(&[(0, 0), (300, 3_750_000_000)]);
        let opts = BpsOptions { divide_by_interval: false, ..Default::default() };
        let series = counters_to_bps(&raw, &opts).unwrap();
        assert_eq!(series.dense_values().unwrap(), vec![3.0e10]);
    }

    #[test]
    fn fewer_than_two_records_is_an_error() {
        assert!(counters_to_bps(&counters(&[(0, 1)]), &BpsOptions::default()).is_err());
        assert!(counters_to_bps(&counters(&[]), &BpsOptions::default()).is_err());
    }
}
