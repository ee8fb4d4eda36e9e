use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::DateTime;

use super::geo::SensorReading;
use super::{
    Event, LocationSample, ParamValue, PersonicleError, Result, Sample, StreamSeries, Timestamp,
};

/// Recognized activity CSV columns and the unit each stream is stored in.
pub const ACTIVITY_COLUMNS: &[(&str, &str)] = &[
    ("t", "s"),
    ("hr", "bpm"),
    ("power", "W"),
    ("cadence", "rpm"),
    ("speed", "m/s"),
    ("altitude", "m"),
    ("temp", "degC"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityImport {
    pub event: Event,
    pub streams: Vec<StreamSeries>,
    /// Rows dropped because `t` was unparseable or not increasing.
    pub skipped_rows: usize,
    /// Individual cells dropped because the number was unparseable or not finite.
    pub skipped_cells: usize,
}

impl ActivityImport {
    pub fn skip_count(&self) -> usize {
        self.skipped_rows + self.skipped_cells
    }
}

/// Parses `t` as UTC seconds or an RFC 3339 timestamp.
pub fn parse_timestamp(raw: &str) -> Option<Timestamp> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .map(|dt| dt.timestamp())
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| PersonicleError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads an activity CSV from disk. The event name is the file stem.
pub fn ingest_activity_csv(path: &Path) -> Result<ActivityImport> {
    let text = read_file(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "activity".to_string());
    let source = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_activity_csv(&text, &name, &source)
}

pub fn parse_activity_csv(text: &str, name: &str, source: &str) -> Result<ActivityImport> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(PersonicleError::Header("missing header row".into()));
    }

    let mut seen = BTreeSet::new();
    let mut t_col = None;
    let mut columns: Vec<(usize, &str, &str)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let Some(&(col, unit)) = ACTIVITY_COLUMNS.iter().find(|(c, _)| *c == h) else {
            return Err(PersonicleError::Header(format!(
                "unrecognized column `{h}` at position {}; expected a subset of {}",
                i + 1,
                ACTIVITY_COLUMNS
                    .iter()
                    .map(|(c, _)| *c)
                    .collect::<Vec<_>>()
                    .join(",")
            )));
        };
        if !seen.insert(col) {
            return Err(PersonicleError::Header(format!("duplicate column `{col}`")));
        }
        if col == "t" {
            t_col = Some(i);
        } else {
            columns.push((i, col, unit));
        }
    }
    let t_col =
        t_col.ok_or_else(|| PersonicleError::Header("missing required column `t`".into()))?;

    let mut per_stream: Vec<Vec<Sample>> = vec![Vec::new(); columns.len()];
    let mut skipped_rows = 0;
    let mut skipped_cells = 0;
    let mut first: Option<Timestamp> = None;
    let mut last: Option<Timestamp> = None;
    let mut rows = 0usize;

    for record in reader.records() {
        let record = record?;
        let Some(t) = record.get(t_col).and_then(parse_timestamp) else {
            skipped_rows += 1;
            continue;
        };
        if last.is_some_and(|prev| t <= prev) {
            skipped_rows += 1;
            continue;
        }
        first.get_or_insert(t);
        last = Some(t);
        rows += 1;
        for (k, &(i, _, _)) in columns.iter().enumerate() {
            let raw = record.get(i).unwrap_or("");
            if raw.is_empty() {
                continue;
            }
            match parse_number(raw) {
                Some(v) => per_stream[k].push(Sample::new(t, v)),
                None => skipped_cells += 1,
            }
        }
    }

    let (Some(start), Some(end)) = (first, last) else {
        return Err(PersonicleError::NoRows(name.to_string()));
    };

    let streams: Vec<StreamSeries> = columns
        .iter()
        .zip(per_stream)
        .filter(|(_, samples)| !samples.is_empty())
        .map(|(&(_, col, unit), samples)| StreamSeries {
            stream_id: col.to_string(),
            unit: unit.to_string(),
            source: source.to_string(),
            samples,
        })
        .collect();

    let mut parameters = BTreeMap::new();
    parameters.insert("rows".to_string(), ParamValue::Number(rows as f64));
    if !source.is_empty() {
        parameters.insert("source".to_string(), ParamValue::Text(source.to_string()));
    }
    let event = Event {
        id: format!("activity-{start}"),
        event_type: "activity".to_string(),
        event_name: name.to_string(),
        start,
        end,
        parameters,
        stream_refs: streams.iter().map(|s| s.stream_id.clone()).collect(),
    };

    Ok(ActivityImport {
        event,
        streams,
        skipped_rows,
        skipped_cells,
    })
}

/// Writes streams back out in the activity CSV layout. Values use the
/// shortest round-trip float representation, so re-ingesting reproduces
/// them bit for bit.
pub fn export_activity_csv(streams: &[StreamSeries]) -> String {
    let ordered: Vec<&StreamSeries> = ACTIVITY_COLUMNS
        .iter()
        .filter_map(|(col, _)| streams.iter().find(|s| s.stream_id == *col))
        .collect();
    let times: BTreeSet<Timestamp> = ordered
        .iter()
        .flat_map(|s| s.samples.iter().map(|x| x.t))
        .collect();
    let lookup: Vec<BTreeMap<Timestamp, f64>> = ordered
        .iter()
        .map(|s| s.samples.iter().map(|x| (x.t, x.value)).collect())
        .collect();

    let mut out = String::from("t");
    for s in &ordered {
        out.push(',');
        out.push_str(&s.stream_id);
    }
    out.push('\n');
    for t in times {
        let _ = write!(out, "{t}");
        for col in &lookup {
            out.push(',');
            if let Some(v) = col.get(&t) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

fn header_index(headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>> {
    let mut seen = BTreeSet::new();
    for h in headers.iter() {
        if !seen.insert(h) {
            return Err(PersonicleError::Header(format!("duplicate column `{h}`")));
        }
    }
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| PersonicleError::Header(format!("missing required column `{name}`")))
        })
        .collect()
}

/// Location CSV: `t,lat,lon[,alt]`.
pub fn parse_locations_csv(text: &str) -> Result<Vec<LocationSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let idx = header_index(&headers, &["t", "lat", "lon"])?;
    let alt_idx = headers.iter().position(|h| h == "alt");
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let t = record.get(idx[0]).and_then(parse_timestamp);
        let lat = record.get(idx[1]).and_then(parse_number);
        let lon = record.get(idx[2]).and_then(parse_number);
        let alt = alt_idx
            .and_then(|i| record.get(i))
            .and_then(parse_number)
            .unwrap_or(0.0);
        if let (Some(t), Some(lat), Some(lon)) = (t, lat, lon) {
            let loc = LocationSample { t, lat, lon, alt };
            loc.validate()?;
            out.push(loc);
        }
    }
    out.sort_by_key(|l| l.t);
    out.dedup_by_key(|l| l.t);
    Ok(out)
}

/// Sensor table CSV: `t,lat,lon,pollutant,value,unit`.
pub fn parse_sensor_csv(text: &str) -> Result<Vec<SensorReading>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let idx = header_index(&headers, &["t", "lat", "lon", "pollutant", "value", "unit"])?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let parsed = (
            parse_timestamp(field(0)),
            parse_number(field(1)),
            parse_number(field(2)),
            parse_number(field(4)),
        );
        let (Some(t), Some(lat), Some(lon), Some(value)) = parsed else {
            return Err(PersonicleError::Invalid(format!(
                "sensor table row {} is malformed",
                row + 2
            )));
        };
        let reading = SensorReading {
            t,
            lat,
            lon,
            pollutant: field(3).to_string(),
            value,
            unit: field(5).to_string(),
        };
        reading.validate()?;
        out.push(reading);
    }
    Ok(out)
}
