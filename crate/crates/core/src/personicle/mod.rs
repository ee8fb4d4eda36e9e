//! The personicle: interval events, real-valued data streams and the
//! location stream of a single person.
//!
//! Timestamps are UTC seconds. Streams are kept strictly increasing in time
//! and share one unit per stream.

mod geo;
mod ingest;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geo::{
    attach_geo_context, haversine_m, pollutant_stream_id, GeoJoin, GeoMatchConfig, SensorReading,
};
pub use ingest::{
    export_activity_csv, ingest_activity_csv, parse_activity_csv, parse_locations_csv,
    parse_sensor_csv, parse_timestamp, ActivityImport, ACTIVITY_COLUMNS,
};
pub use store::{Personicle, Store};

/// UTC seconds since the Unix epoch.
pub type Timestamp = i64;

#[derive(Debug, Error)]
pub enum PersonicleError {
    #[error("header error: {0}")]
    Header(String),
    #[error("no valid rows in {0}")]
    NoRows(String),
    #[error("unknown stream `{0}`")]
    StreamNotFound(String),
    #[error("invalid window [{0}, {1}]")]
    InvalidWindow(Timestamp, Timestamp),
    #[error("unsupported resample rate {0} Hz (period must be a whole number of seconds)")]
    ResampleRate(f64),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PersonicleError>;

/// Event parameter value. The event schema stores untyped key/value pairs;
/// here values are restricted to numbers or text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(v) => write!(f, "{v}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Identity used for deduplication across queries.
    pub id: String,
    pub event_type: String,
    pub event_name: String,
    pub start: Timestamp,
    pub end: Timestamp,
    #[serde(default)]
    pub parameters: BTreeMap<String, ParamValue>,
    #[serde(default)]
    pub stream_refs: BTreeSet<String>,
}

impl Event {
    pub fn validate(&self) -> Result<()> {
        if self.event_type.trim().is_empty() {
            return Err(PersonicleError::Invalid(format!(
                "event `{}` has an empty type",
                self.id
            )));
        }
        if self.end < self.start {
            return Err(PersonicleError::Invalid(format!(
                "event `{}` ends before it starts",
                self.id
            )));
        }
        Ok(())
    }

    /// Closed-interval intersection with `[t0, t1]`.
    pub fn intersects(&self, t0: Timestamp, t1: Timestamp) -> bool {
        self.start <= t1 && self.end >= t0
    }

    pub fn covers(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn duration_s(&self) -> i64 {
        self.end - self.start
    }
}

/// A single observation of a real-valued stream. Unit and source live on
/// the owning [`StreamSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: Timestamp,
    pub value: f64,
}

impl Sample {
    pub fn new(t: Timestamp, value: f64) -> Self {
        Self { t, value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSeries {
    pub stream_id: String,
    pub unit: String,
    #[serde(default)]
    pub source: String,
    pub samples: Vec<Sample>,
}

impl StreamSeries {
    pub fn new(stream_id: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            stream_id: stream_id.into(),
            unit: unit.into(),
            source: String::new(),
            samples: Vec::new(),
        }
    }

    pub fn with_samples(mut self, samples: Vec<Sample>) -> Self {
        self.samples = samples;
        self
    }

    /// Builds a 1 Hz series starting at `start` from consecutive values.
    pub fn from_values(
        stream_id: impl Into<String>,
        unit: impl Into<String>,
        start: Timestamp,
        values: &[f64],
    ) -> Self {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample::new(start + i as Timestamp, v))
            .collect();
        Self::new(stream_id, unit).with_samples(samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    pub fn first_t(&self) -> Option<Timestamp> {
        self.samples.first().map(|s| s.t)
    }

    pub fn last_t(&self) -> Option<Timestamp> {
        self.samples.last().map(|s| s.t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.unit.trim().is_empty() {
            return Err(PersonicleError::Invalid(format!(
                "stream `{}` has an empty unit",
                self.stream_id
            )));
        }
        for pair in self.samples.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(PersonicleError::Invalid(format!(
                    "stream `{}` is not strictly increasing at t={}",
                    self.stream_id, pair[1].t
                )));
            }
        }
        if let Some(bad) = self.samples.iter().find(|s| !s.value.is_finite()) {
            return Err(PersonicleError::Invalid(format!(
                "stream `{}` has a non-finite value at t={}",
                self.stream_id, bad.t
            )));
        }
        Ok(())
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: Timestamp, t1: Timestamp) -> &[Sample] {
        let lo = self.samples.partition_point(|s| s.t < t0);
        let hi = self.samples.partition_point(|s| s.t <= t1);
        if lo >= hi {
            &[]
        } else {
            &self.samples[lo..hi]
        }
    }

    pub fn slice(&self, t0: Timestamp, t1: Timestamp) -> StreamSeries {
        StreamSeries {
            stream_id: self.stream_id.clone(),
            unit: self.unit.clone(),
            source: self.source.clone(),
            samples: self.window(t0, t1).to_vec(),
        }
    }

    /// Hold-forward grid over `[t0, t1]` using only samples inside the
    /// window. Grid points before the first in-window sample are `None`.
    pub fn hold_grid(&self, t0: Timestamp, t1: Timestamp, step_s: i64) -> Vec<Option<f64>> {
        debug_assert!(step_s > 0);
        if t1 < t0 {
            return Vec::new();
        }
        let inside = self.window(t0, t1);
        let n = ((t1 - t0) / step_s + 1) as usize;
        let mut grid = Vec::with_capacity(n);
        let mut idx = 0usize;
        let mut held = None;
        for k in 0..n {
            let t = t0 + k as i64 * step_s;
            while idx < inside.len() && inside[idx].t <= t {
                held = Some(inside[idx].value);
                idx += 1;
            }
            grid.push(held);
        }
        grid
    }

    /// Dense 1 Hz values from the first to the last sample by hold-forward.
    pub fn dense_1hz(&self) -> Vec<f64> {
        match (self.first_t(), self.last_t()) {
            (Some(a), Some(b)) => self.hold_grid(a, b, 1).into_iter().flatten().collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationSample {
    pub t: Timestamp,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub alt: f64,
}

impl LocationSample {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(PersonicleError::Invalid(format!(
                "location out of range at t={}: ({}, {})",
                self.t, self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Converts a resample rate in Hz to a whole-second grid step.
pub fn resample_step(hz: f64) -> Result<i64> {
    if !(hz.is_finite() && hz > 0.0 && hz <= 1.0) {
        return Err(PersonicleError::ResampleRate(hz));
    }
    let period = 1.0 / hz;
    let step = period.round();
    if (period - step).abs() > 1e-9 {
        return Err(PersonicleError::ResampleRate(hz));
    }
    Ok(step as i64)
}

/// Events of the given type (if any) intersecting `[t0, t1]`, ordered by
/// start then id.
pub fn query_events<'a, I>(
    events: I,
    event_type: Option<&str>,
    t0: Timestamp,
    t1: Timestamp,
) -> Result<Vec<Event>>
where
    I: IntoIterator<Item = &'a Event>,
{
    if t0 > t1 {
        return Err(PersonicleError::InvalidWindow(t0, t1));
    }
    let mut out: Vec<Event> = events
        .into_iter()
        .filter(|e| e.intersects(t0, t1))
        .filter(|e| event_type.is_none_or(|ty| e.event_type == ty))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}

/// Windowed view of a stream, optionally resampled onto a uniform grid by
/// hold-forward of the last in-window value.
pub fn query_stream(
    series: &StreamSeries,
    t0: Timestamp,
    t1: Timestamp,
    resample_hz: Option<f64>,
) -> Result<StreamSeries> {
    if t0 > t1 {
        return Err(PersonicleError::InvalidWindow(t0, t1));
    }
    let Some(hz) = resample_hz else {
        return Ok(series.slice(t0, t1));
    };
    let step = resample_step(hz)?;
    let samples = series
        .hold_grid(t0, t1, step)
        .into_iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| Sample::new(t0 + k as i64 * step, v)))
        .collect();
    Ok(StreamSeries {
        stream_id: series.stream_id.clone(),
        unit: series.unit.clone(),
        source: series.source.clone(),
        samples,
    })
}
