//! The bps time series, gap imputation, and the CSV exchange format.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// A univariate traffic series on a strictly increasing timestamp axis.
///
/// Values are bits per second; a `None` marks a missing sample that a later
/// [`forward_fill`] resolves. Timestamps are UTC epoch seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    timestamps: Vec<i64>,
    values: Vec<Option<f64>>,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<i64>, values: Vec<Option<f64>>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Data(format!(
                "series has {} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        for pair in timestamps.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Data(format!(
                    "timestamps must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        for v in values.iter().flatten() {
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite series value {v}")));
            }
        }
        Ok(Self { timestamps, values })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// The values as a dense slice; errors while any marker remains.
    pub fn dense_values(&self) -> Result<Vec<f64>> {
        let missing = self.missing_count();
        if missing > 0 {
            return Err(Error::Data(format!(
                "series still has {missing} missing values; forward_fill first"
            )));
        }
        Ok(self.values.iter().map(|v| v.unwrap()).collect())
    }

    /// Copies the half-open index range [start, end) out as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start > end || end > self.len() {
            return Err(Error::Data(format!(
                "slice {start}..{end} out of range for length {}",
                self.len()
            )));
        }
        Ok(TimeSeries {
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
        })
    }
}

/// Replaces each missing value with the nearest preceding observation.
/// Leading missing values are back-filled from the first observation, so the
/// result has no markers left. An all-missing series is an error.
pub fn forward_fill(series: &TimeSeries) -> Result<TimeSeries> {
    let first = series
        .values
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or_else(|| Error::Data("cannot forward-fill an all-missing series".into()))?;
    let mut last = first;
    let values = series
        .values
        .iter()
        .map(|v| match v {
            Some(x) => {
                last = *x;
                Some(*x)
            }
            None => Some(last),
        })
        .collect();
    Ok(TimeSeries { timestamps: series.timestamps.clone(), values })
}

const CSV_HEADER: &str = "timestamp,bps";

/// Renders the series in the exchange format: `timestamp,bps` header, LF
/// line endings, missing values as an empty field. Floats print in Rust's
/// shortest round-trip form, so write → read is lossless.
pub fn series_csv_string(series: &TimeSeries) -> String {
    let mut out = String::with_capacity(series.len() * 24 + 16);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (ts, v) in series.timestamps.iter().zip(&series.values) {
        out.push_str(&ts.to_string());
        out.push(',');
        if let Some(x) = v {
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_series_csv<W: Write>(series: &TimeSeries, writer: &mut W) -> Result<()> {
    writer.write_all(series_csv_string(series).as_bytes())?;
    Ok(())
}

pub fn read_series_csv<R: BufRead>(reader: R) -> Result<TimeSeries> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Parse("empty series file".into()))?;
    if header.trim_end_matches('\r') != CSV_HEADER {
        return Err(Error::Parse(format!(
            "series header {header:?} does not match {CSV_HEADER:?}"
        )));
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let row = idx + 2;
        let (ts_field, value_field) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {row}: expected timestamp,bps")))?;
        if value_field.contains(',') {
            return Err(Error::Parse(format!("line {row}: too many fields")));
        }
        let ts: i64 = ts_field
            .parse()
            .map_err(|_| Error::Parse(format!("line {row}: bad timestamp {ts_field:?}")))?;
        let value = if value_field.is_empty() {
            None
        } else {
            let v: f64 = value_field
                .parse()
                .map_err(|_| Error::Parse(format!("line {row}: bad value {value_field:?}")))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("line {row}: non-finite value")));
            }
            Some(v)
        };
        timestamps.push(ts);
        values.push(value);
    }
    TimeSeries::new(timestamps, values)
}
