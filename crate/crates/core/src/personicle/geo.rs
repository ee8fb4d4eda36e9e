use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LocationSample, PersonicleError, Result, Sample, StreamSeries, Timestamp};

const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// One row of a public environmental sensor table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub t: Timestamp,
    pub lat: f64,
    pub lon: f64,
    pub pollutant: String,
    pub value: f64,
    pub unit: String,
}

impl SensorReading {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(PersonicleError::Invalid(format!(
                "sensor position out of range: ({}, {})",
                self.lat, self.lon
            )));
        }
        if self.pollutant.trim().is_empty() {
            return Err(PersonicleError::Invalid(
                "sensor row without pollutant".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoMatchConfig {
    pub max_distance_m: f64,
    pub max_time_offset_s: i64,
}

impl Default for GeoMatchConfig {
    fn default() -> Self {
        Self {
            max_distance_m: 50_000.0,
            max_time_offset_s: 30 * 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoJoin {
    /// One series per pollutant, sorted by stream id.
    pub series: Vec<StreamSeries>,
    /// Locations left without a match, per pollutant stream id.
    pub gaps: BTreeMap<String, usize>,
}

impl GeoJoin {
    pub fn series(&self, stream_id: &str) -> Option<&StreamSeries> {
        self.series.iter().find(|s| s.stream_id == stream_id)
    }
}

/// Stream id for a pollutant name, e.g. `PM2.5` -> `PM2_5`.
pub fn pollutant_stream_id(pollutant: &str) -> String {
    pollutant
        .trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Ranking key: spatial distance, then time offset, then earlier reading.
fn candidate_order(a: (f64, i64, Timestamp, usize), b: (f64, i64, Timestamp, usize)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

/// Matches every location sample to the nearest sensor reading of each
/// pollutant inside the time tolerance. Locations with no reading inside
/// the distance limit are counted as gaps and omitted from the series.
pub fn attach_geo_context(
    locations: &[LocationSample],
    sensors: &[SensorReading],
    config: &GeoMatchConfig,
) -> GeoJoin {
    let mut by_pollutant: BTreeMap<String, Vec<(usize, &SensorReading)>> = BTreeMap::new();
    for (i, s) in sensors.iter().enumerate() {
        by_pollutant
            .entry(pollutant_stream_id(&s.pollutant))
            .or_default()
            .push((i, s));
    }

    let mut series = Vec::new();
    let mut gaps = BTreeMap::new();
    for (stream_id, mut readings) in by_pollutant {
        readings.sort_by_key(|(i, r)| (r.t, *i));
        let unit = readings[0].1.unit.clone();
        let mut samples: Vec<Sample> = Vec::new();
        let mut missing = 0usize;

        for loc in locations {
            let lo = readings.partition_point(|(_, r)| r.t < loc.t - config.max_time_offset_s);
            let hi = readings.partition_point(|(_, r)| r.t <= loc.t + config.max_time_offset_s);
            let best = readings[lo..hi]
                .iter()
                .map(|&(i, r)| {
                    let d = haversine_m(loc.lat, loc.lon, r.lat, r.lon);
                    ((d, (r.t - loc.t).abs(), r.t, i), r.value)
                })
                .filter(|((d, ..), _)| *d <= config.max_distance_m)
                .min_by(|a, b| candidate_order(a.0, b.0));
            match best {
                Some((_, value)) => {
                    if samples.last().is_none_or(|s| s.t < loc.t) {
                        samples.push(Sample::new(loc.t, value));
                    }
                }
                None => missing += 1,
            }
        }

        gaps.insert(stream_id.clone(), missing);
        series.push(StreamSeries {
            stream_id,
            unit,
            source: "geo-join".to_string(),
            samples,
        });
    }

    GeoJoin { series, gaps }
}
