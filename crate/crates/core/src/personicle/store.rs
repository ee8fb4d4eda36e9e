use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::geo::SensorReading;
use super::ingest::ActivityImport;
use super::{
    query_events, query_stream, Event, LocationSample, PersonicleError, Result, Sample,
    StreamSeries, Timestamp,
};

/// In-memory personicle contents. Cheap to share behind an [`Arc`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Personicle {
    pub events: Vec<Event>,
    pub streams: BTreeMap<String, StreamSeries>,
    pub locations: Vec<LocationSample>,
    pub sensors: Vec<SensorReading>,
}

fn merge_samples(series: &mut StreamSeries, incoming: &[Sample]) {
    if incoming.is_empty() {
        return;
    }
    let append_only = series.last_t().is_none_or(|last| incoming[0].t > last)
        && incoming.windows(2).all(|w| w[0].t < w[1].t);
    if append_only {
        series.samples.extend_from_slice(incoming);
        return;
    }
    // Later writes win on equal timestamps.
    let mut merged: BTreeMap<Timestamp, f64> =
        series.samples.iter().map(|s| (s.t, s.value)).collect();
    merged.extend(incoming.iter().map(|s| (s.t, s.value)));
    series.samples = merged.into_iter().map(|(t, v)| Sample::new(t, v)).collect();
}

impl Personicle {
    pub fn insert_event(&mut self, event: Event) -> Result<()> {
        event.validate()?;
        if self.events.iter().any(|e| e.id == event.id) {
            return Err(PersonicleError::Invalid(format!(
                "event `{}` already exists",
                event.id
            )));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn merge_stream(&mut self, series: &StreamSeries) -> Result<()> {
        let entry = self
            .streams
            .entry(series.stream_id.clone())
            .or_insert_with(|| StreamSeries {
                stream_id: series.stream_id.clone(),
                unit: series.unit.clone(),
                source: series.source.clone(),
                samples: Vec::new(),
            });
        if entry.unit != series.unit {
            return Err(PersonicleError::Invalid(format!(
                "stream `{}` is stored in `{}`, got `{}`",
                series.stream_id, entry.unit, series.unit
            )));
        }
        merge_samples(entry, &series.samples);
        Ok(())
    }

    pub fn stream(&self, stream_id: &str) -> Result<&StreamSeries> {
        self.streams
            .get(stream_id)
            .ok_or_else(|| PersonicleError::StreamNotFound(stream_id.to_string()))
    }

    pub fn event(&self, id: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.id == id)
    }

    pub fn query_events(
        &self,
        event_type: Option<&str>,
        t0: Timestamp,
        t1: Timestamp,
    ) -> Result<Vec<Event>> {
        query_events(&self.events, event_type, t0, t1)
    }

    pub fn query_stream(
        &self,
        stream_id: &str,
        t0: Timestamp,
        t1: Timestamp,
        resample_hz: Option<f64>,
    ) -> Result<StreamSeries> {
        query_stream(self.stream(stream_id)?, t0, t1, resample_hz)
    }

    pub fn locations_in(&self, t0: Timestamp, t1: Timestamp) -> &[LocationSample] {
        let lo = self.locations.partition_point(|l| l.t < t0);
        let hi = self.locations.partition_point(|l| l.t <= t1);
        if lo >= hi {
            &[]
        } else {
            &self.locations[lo..hi]
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StreamLine<'a> {
    t: Timestamp,
    value: f64,
    unit: std::borrow::Cow<'a, str>,
    source: std::borrow::Cow<'a, str>,
}

/// Directory-backed personicle. Every container is an append-only
/// newline-delimited JSON file; readers work on immutable snapshots.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    data: Arc<Personicle>,
}

const EVENTS_FILE: &str = "events.ndjson";
const LOCATIONS_FILE: &str = "locations.ndjson";
const SENSORS_FILE: &str = "sensors.ndjson";
const STREAMS_DIR: &str = "streams";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersonicleError + '_ {
    move |source| PersonicleError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_lines<T, F>(path: &Path, mut f: F) -> Result<()>
where
    F: FnMut(&str) -> Result<T>,
{
    if !path.exists() {
        return Ok(());
    }
    let file = File::open(path).map_err(io_err(path))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            f(&line)?;
        }
    }
    Ok(())
}

fn append_lines(path: &Path, lines: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut buf = String::new();
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    file.write_all(buf.as_bytes()).map_err(io_err(path))
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let mut data = Personicle::default();

        read_lines(&root.join(EVENTS_FILE), |line| {
            let ev: Event = serde_json::from_str(line)?;
            data.events.push(ev);
            Ok(())
        })?;
        read_lines(&root.join(LOCATIONS_FILE), |line| {
            data.locations.push(serde_json::from_str(line)?);
            Ok(())
        })?;
        read_lines(&root.join(SENSORS_FILE), |line| {
            data.sensors.push(serde_json::from_str(line)?);
            Ok(())
        })?;
        data.locations.sort_by_key(|l| l.t);
        data.locations.dedup_by_key(|l| l.t);

        let streams_dir = root.join(STREAMS_DIR);
        if streams_dir.exists() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&streams_dir)
                .map_err(io_err(&streams_dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
                .collect();
            paths.sort();
            for path in paths {
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let mut series: Option<StreamSeries> = None;
                let mut samples = Vec::new();
                read_lines(&path, |line| {
                    let l: StreamLine = serde_json::from_str(line)?;
                    if series.is_none() {
                        series = Some(StreamSeries {
                            stream_id: id.clone(),
                            unit: l.unit.into_owned(),
                            source: l.source.into_owned(),
                            samples: Vec::new(),
                        });
                    }
                    samples.push(Sample::new(l.t, l.value));
                    Ok(())
                })?;
                if let Some(mut s) = series {
                    // Replay appends in file order so later lines win.
                    for chunk in samples.chunk_by(|a, b| a.t < b.t) {
                        merge_samples(&mut s, chunk);
                    }
                    data.streams.insert(id, s);
                }
            }
        }

        Ok(Self {
            root,
            data: Arc::new(data),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Immutable view taken at call time.
    pub fn snapshot(&self) -> Arc<Personicle> {
        Arc::clone(&self.data)
    }

    fn stream_path(&self, stream_id: &str) -> PathBuf {
        self.root
            .join(STREAMS_DIR)
            .join(format!("{stream_id}.ndjson"))
    }

    pub fn append_stream(&mut self, series: &StreamSeries) -> Result<()> {
        series.validate()?;
        Arc::make_mut(&mut self.data).merge_stream(series)?;
        let lines = series
            .samples
            .iter()
            .map(|s| {
                serde_json::to_string(&StreamLine {
                    t: s.t,
                    value: s.value,
                    unit: series.unit.as_str().into(),
                    source: series.source.as_str().into(),
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        append_lines(&self.stream_path(&series.stream_id), &lines)
    }

    pub fn append_event(&mut self, event: Event) -> Result<()> {
        let line = serde_json::to_string(&event)?;
        Arc::make_mut(&mut self.data).insert_event(event)?;
        append_lines(&self.root.join(EVENTS_FILE), &[line])
    }

    /// Stores an imported activity: its event plus every stream.
    pub fn append_activity(&mut self, import: &ActivityImport) -> Result<()> {
        if self.data.event(&import.event.id).is_some() {
            return Err(PersonicleError::Invalid(format!(
                "activity `{}` was already ingested",
                import.event.id
            )));
        }
        for s in &import.streams {
            self.append_stream(s)?;
        }
        self.append_event(import.event.clone())
    }

    pub fn append_locations(&mut self, locations: &[LocationSample]) -> Result<()> {
        for l in locations {
            l.validate()?;
        }
        let lines = locations
            .iter()
            .map(serde_json::to_string)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let data = Arc::make_mut(&mut self.data);
        data.locations.extend_from_slice(locations);
        data.locations.sort_by_key(|l| l.t);
        data.locations.dedup_by_key(|l| l.t);
        append_lines(&self.root.join(LOCATIONS_FILE), &lines)
    }

    pub fn append_sensors(&mut self, sensors: &[SensorReading]) -> Result<()> {
        for s in sensors {
            s.validate()?;
        }
        let lines = sensors
            .iter()
            .map(serde_json::to_string)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Arc::make_mut(&mut self.data)
            .sensors
            .extend_from_slice(sensors);
        append_lines(&self.root.join(SENSORS_FILE), &lines)
    }
}
