//! The daily state-update loop: decay, interface events, event inputs,
//! observations, propagation and the report row.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use hse_core::gnb::{update_block_with, GraphBlock, Layer, PinKind, UpdateOptions};
use hse_core::ievent::{evaluate_rule, EvalError, EvalOptions, InterfaceEvent, Rule};
use hse_core::knowledge::KnowledgeBase;
use hse_core::loadmetrics::{
    active_time, cp_curve, ctl, hpa_events, pollutant_intake, trimp, AthleteProfile,
    BreathingModel, DailyLoad, DEFAULT_ACTIVE_CADENCE_RPM,
};
use hse_core::personicle::{
    attach_geo_context, pollutant_stream_id, Event, GeoMatchConfig, ParamValue, Personicle,
    StreamSeries, Timestamp,
};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::workspace::{DayRecord, Meta};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Biology columns of the daily report and the attributes they read.
pub const BIO_COLUMNS: &[(&str, &str)] = &[
    ("co_l_min", "heart:co_rest_l_min"),
    ("hr_rest", "heart:hr_rest"),
    ("sv_ml", "heart:sv_ml"),
    ("healthy", "heart:healthy"),
    ("pathological", "heart:pathological"),
    ("net", "heart:net"),
];

pub const CTL_INPUT: &str = "training_load:ctl";
pub const ACTIVE_INPUT: &str = "li_exercise:active_minutes";
pub const HPA_INPUT: &str = "hi_exercise:hpa_count";
pub const POLLUTANT_INPUT: &str = "pollutant_exposure:pm25_ug";
pub const VO2MAX_DIMENSION: &str = "vo2max";

/// Rule names whose daily minutes feed an input by default.
const DEFAULT_RULE_INPUTS: &[(&str, &str)] = &[
    ("VolOverload", "vol_overload:minutes"),
    ("PressOverload", "press_overload:minutes"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyReport {
    pub date: NaiveDate,
    /// Report column to value, each read from the block after the update.
    pub values: BTreeMap<String, f64>,
    pub event_counts: BTreeMap<String, usize>,
    pub inputs: BTreeMap<String, f64>,
    pub non_converged: usize,
    /// No activity or observation fell on this day.
    pub data_gap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub utc_offset_s: i64,
    pub horizon_days: u32,
    pub active_cadence_rpm: f64,
    pub exposure_pollutant: String,
    pub rule_inputs: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let offset_h = cfg.number("utc_offset_hours", 0.0)?;
        if offset_h.abs() > 14.0 {
            return Err(CliError::Usage(format!(
                "utc_offset_hours {offset_h} is out of range"
            )));
        }
        let horizon = cfg.number("horizon_days", 42.0)?;
        if !(horizon >= 1.0 && horizon.fract() == 0.0) {
            return Err(CliError::Usage(format!(
                "horizon_days must be a positive integer, got {horizon}"
            )));
        }
        let mut rule_inputs: BTreeMap<String, String> = DEFAULT_RULE_INPUTS
            .iter()
            .map(|(r, p)| (r.to_string(), p.to_string()))
            .collect();
        rule_inputs.extend(
            cfg.with_prefix("map.")
                .map(|(r, p)| (r.to_string(), p.to_string())),
        );
        Ok(Self {
            utc_offset_s: (offset_h * 3600.0).round() as i64,
            horizon_days: horizon as u32,
            active_cadence_rpm: cfg.number("active_cadence_rpm", DEFAULT_ACTIVE_CADENCE_RPM)?,
            exposure_pollutant: cfg.get("exposure_pollutant").unwrap_or("PM2.5").to_string(),
            rule_inputs,
        })
    }

    pub fn day_of(&self, t: Timestamp) -> NaiveDate {
        let days = (t + self.utc_offset_s).div_euclid(SECONDS_PER_DAY);
        NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch") + Duration::days(days)
    }

    /// First second of a local day.
    pub fn day_start(&self, day: NaiveDate) -> Timestamp {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch");
        (day - epoch).num_days() * SECONDS_PER_DAY - self.utc_offset_s
    }
}

/// Streams of one activity, cut to its time span.
#[derive(Debug, Clone)]
pub struct ActivityData {
    pub id: String,
    pub day: NaiveDate,
    pub start: Timestamp,
    pub end: Timestamp,
    pub streams: BTreeMap<String, StreamSeries>,
}

impl ActivityData {
    pub fn stream(&self, id: &str) -> Option<&StreamSeries> {
        self.streams.get(id).filter(|s| !s.is_empty())
    }
}

pub fn activities(data: &Personicle, settings: &Settings) -> Vec<ActivityData> {
    let mut out: Vec<ActivityData> = data
        .events
        .iter()
        .filter(|e| e.event_type == "activity")
        .map(|e| ActivityData {
            id: e.id.clone(),
            day: settings.day_of(e.start),
            start: e.start,
            end: e.end,
            streams: e
                .stream_refs
                .iter()
                .filter_map(|s| data.streams.get(s))
                .map(|s| (s.stream_id.clone(), s.slice(e.start, e.end)))
                .collect(),
        })
        .collect();
    out.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
    out
}

/// Per-activity quantities that feed the daily inputs.
#[derive(Debug, Clone)]
struct ActivitySummary {
    data: ActivityData,
    trimp: f64,
    active_minutes: f64,
    pollutant_ug: Option<f64>,
    events: Vec<InterfaceEvent>,
}

fn summarise(
    a: ActivityData,
    data: &Personicle,
    rules: &[Rule],
    profile: &AthleteProfile,
    settings: &Settings,
) -> Result<ActivitySummary> {
    let trimp = a
        .stream("hr")
        .map(|hr| trimp(hr, profile))
        .transpose()?
        .unwrap_or(0.0);
    let active_minutes = a.stream("cadence").map_or(0.0, |c| {
        active_time(c, settings.active_cadence_rpm) as f64 / 60.0
    });

    let mut events = Vec::new();
    if let Some(p) = a.stream("power") {
        events.extend(hpa_events(p, profile)?);
    }
    for rule in rules {
        match evaluate_rule(
            rule,
            &a.streams,
            &data.events,
            a.start,
            a.end,
            &EvalOptions::default(),
        ) {
            Ok(found) => events.extend(found),
            Err(EvalError::MissingStream(s)) => {
                tracing::debug!(rule = %rule.name, activity = %a.id, stream = %s, "rule skipped: stream absent");
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut pollutant_ug = None;
    let locations = data.locations_in(a.start, a.end);
    if let (Some(hr), false, false) = (
        a.stream("hr"),
        locations.is_empty(),
        data.sensors.is_empty(),
    ) {
        let join = attach_geo_context(locations, &data.sensors, &GeoMatchConfig::default());
        if let Some(conc) = join.series(&pollutant_stream_id(&settings.exposure_pollutant)) {
            let intake = pollutant_intake(hr, conc, profile, &BreathingModel::default())?;
            pollutant_ug = Some(intake.total_ug);
            events.extend(intake.events);
        }
    }
    Ok(ActivitySummary {
        data: a,
        trimp,
        active_minutes,
        pollutant_ug,
        events,
    })
}

fn stored_interface_events(data: &Personicle) -> Vec<InterfaceEvent> {
    data.events
        .iter()
        .filter(|e| e.event_type == "interface")
        .map(|e| InterfaceEvent {
            rule_name: e.event_name.clone(),
            start: e.start,
            end: e.end + 1,
            attributes: e
                .parameters
                .iter()
                .filter_map(|(k, v)| match v {
                    ParamValue::Number(x) => Some((k.clone(), *x)),
                    ParamValue::Text(_) => None,
                })
                .collect(),
        })
        .collect()
}

/// An observed attribute value: `path` and `value` parameters on an
/// `observation` event.
fn observation(e: &Event) -> Option<(String, f64)> {
    if e.event_type != "observation" {
        return None;
    }
    let path = match e.parameters.get("path")? {
        ParamValue::Text(p) => p.clone(),
        ParamValue::Number(_) => return None,
    };
    match e.parameters.get("value")? {
        ParamValue::Number(v) => Some((path, *v)),
        ParamValue::Text(_) => None,
    }
}

fn cp_duration(dimension: &str) -> Option<u32> {
    dimension
        .strip_prefix("cp_")?
        .strip_suffix('s')?
        .parse()
        .ok()
}

/// Lamina dimensions with the attribute path each one reads.
pub fn lamina_dimensions(base: &KnowledgeBase, lamina: &str) -> Vec<(String, String)> {
    base.lamina(lamina)
        .map(|l| {
            l.dimensions
                .iter()
                .filter_map(|d| base.template(d).map(|t| (d.clone(), t.path())))
                .collect()
        })
        .unwrap_or_default()
}

/// Report columns in output order.
pub fn report_columns(base: &KnowledgeBase, lamina: &str) -> Vec<String> {
    lamina_dimensions(base, lamina)
        .into_iter()
        .map(|(d, _)| d)
        .chain(BIO_COLUMNS.iter().map(|(c, _)| c.to_string()))
        .collect()
}

/// Everything the loop reads, prepared once per command.
pub struct Pipeline<'a> {
    meta: &'a Meta,
    base: &'a KnowledgeBase,
    settings: Settings,
    summaries: Vec<ActivitySummary>,
    interface: Vec<InterfaceEvent>,
    observations: Vec<(Timestamp, String, f64)>,
    loads: Vec<DailyLoad>,
    fusion: BTreeMap<NaiveDate, f64>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        meta: &'a Meta,
        base: &'a KnowledgeBase,
        data: &Personicle,
        rules: &[Rule],
        settings: Settings,
        fusion: BTreeMap<NaiveDate, f64>,
    ) -> Result<Self> {
        let summaries = activities(data, &settings)
            .into_iter()
            .map(|a| summarise(a, data, rules, &meta.profile, &settings))
            .collect::<Result<Vec<_>>>()?;
        let mut per_day: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        for s in &summaries {
            *per_day.entry(s.data.day).or_default() += s.trimp;
        }
        let loads = per_day
            .into_iter()
            .map(|(date, value)| DailyLoad { date, value })
            .collect();
        let observations = data
            .events
            .iter()
            .filter_map(|e| observation(e).map(|(p, v)| (e.start, p, v)))
            .collect();
        Ok(Self {
            meta,
            base,
            settings,
            summaries,
            interface: stored_interface_events(data),
            observations,
            loads,
            fusion,
        })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    fn lamina_dimensions(&self) -> Vec<(String, String)> {
        lamina_dimensions(self.base, &self.meta.lamina)
    }

    pub fn columns(&self) -> Vec<String> {
        report_columns(self.base, &self.meta.lamina)
    }

    fn events_on(&self, day: NaiveDate) -> Vec<&InterfaceEvent> {
        let mut seen = BTreeSet::new();
        self.summaries
            .iter()
            .filter(|s| s.data.day == day)
            .flat_map(|s| s.events.iter())
            .chain(
                self.interface
                    .iter()
                    .filter(|e| self.settings.day_of(e.start) == day),
            )
            .filter(|e| seen.insert((e.rule_name.clone(), e.start)))
            .collect()
    }

    /// Advances `block` by one day and reports the resulting state.
    pub fn step(&self, block: &mut GraphBlock, day: NaiveDate) -> Result<DailyReport> {
        let today: Vec<&ActivitySummary> = self
            .summaries
            .iter()
            .filter(|s| s.data.day == day)
            .collect();
        let horizon = Duration::days(self.settings.horizon_days as i64);
        let recent: Vec<&ActivitySummary> = self
            .summaries
            .iter()
            .filter(|s| s.data.day <= day && s.data.day > day - horizon)
            .collect();
        let events = self.events_on(day);
        let mut event_counts: BTreeMap<String, usize> = BTreeMap::new();
        for e in &events {
            *event_counts.entry(e.rule_name.clone()).or_default() += 1;
        }

        let mut inputs: BTreeMap<String, f64> = BTreeMap::new();
        if !today.is_empty() {
            inputs.insert(
                ACTIVE_INPUT.into(),
                today.iter().map(|s| s.active_minutes).sum(),
            );
            inputs.insert(
                HPA_INPUT.into(),
                event_counts.get("HPA").copied().unwrap_or(0) as f64,
            );
            for (rule, path) in &self.settings.rule_inputs {
                let seconds: i64 = events
                    .iter()
                    .filter(|e| e.rule_name == *rule)
                    .map(|e| e.duration_s())
                    .sum();
                *inputs.entry(path.clone()).or_default() += seconds as f64 / 60.0;
            }
            if today.iter().any(|s| s.pollutant_ug.is_some()) {
                inputs.insert(
                    POLLUTANT_INPUT.into(),
                    today.iter().filter_map(|s| s.pollutant_ug).sum(),
                );
            }
        }
        if !recent.is_empty() {
            inputs.insert(
                CTL_INPUT.into(),
                ctl(&self.loads, self.settings.horizon_days, day),
            );
        }
        inputs.retain(|path, _| {
            let present = block.get(path).is_ok();
            if !present {
                tracing::debug!(path = %path, "input not part of this lamina");
            }
            present
        });

        let t0 = self.settings.day_start(day);
        let observed: Vec<&(Timestamp, String, f64)> = self
            .observations
            .iter()
            .filter(|(t, _, _)| *t >= t0 && *t < t0 + SECONDS_PER_DAY)
            .collect();
        for (_, path, value) in &observed {
            let node = path.split(['/', ':']).next().unwrap_or_default();
            let kind = match block.node(node).map(|n| n.layer) {
                Some(Layer::Utility) => PinKind::Utility,
                _ => PinKind::Biology,
            };
            block.set_observation(path, *value, kind)?;
        }

        let dims = self.lamina_dimensions();
        if !recent.is_empty() {
            let powers: Vec<&StreamSeries> = recent
                .iter()
                .filter_map(|s| s.data.stream("power"))
                .collect();
            let durations: Vec<u32> = dims.iter().filter_map(|(d, _)| cp_duration(d)).collect();
            if !powers.is_empty() && !durations.is_empty() {
                let curve = cp_curve(&powers, &durations);
                for (d, path) in &dims {
                    if let Some(w) = cp_duration(d).and_then(|s| curve.watts_at(s)) {
                        block.set_observation(
                            path,
                            w / self.meta.profile.mass_kg,
                            PinKind::Utility,
                        )?;
                    }
                }
            }
        }
        if let Some(v) = self.fusion.get(&day) {
            if let Some((_, path)) = dims.iter().find(|(d, _)| d == VO2MAX_DIMENSION) {
                block.set_observation(path, *v, PinKind::Utility)?;
            }
        }

        update_block_with(block, &inputs, 1.0, &UpdateOptions::default())?;

        let values = dims
            .iter()
            .map(|(d, p)| (d.as_str(), p.as_str()))
            .chain(BIO_COLUMNS.iter().copied())
            .filter_map(|(col, path)| block.get(path).ok().map(|v| (col.to_string(), v)))
            .collect();
        Ok(DailyReport {
            date: day,
            values,
            event_counts,
            inputs,
            non_converged: block.flags.non_converged.len(),
            data_gap: today.is_empty() && observed.is_empty(),
        })
    }

    /// Runs `from..=to` starting from `block`, returning one record per day.
    pub fn run(
        &self,
        mut block: GraphBlock,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Vec<DayRecord>> {
        let mut out = Vec::new();
        let mut day = from;
        while day <= to {
            let report = self.step(&mut block, day)?;
            tracing::info!(day = %day, inputs = report.inputs.len(), "day updated");
            out.push(DayRecord {
                report,
                block: block.clone(),
            });
            day += Duration::days(1);
        }
        Ok(out)
    }
}

fn fmt_value(v: Option<&f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV of daily reports with a fixed column order.
pub fn daily_csv(reports: &[&DailyReport], columns: &[String]) -> String {
    let mut header = vec!["date".to_string()];
    header.extend(columns.iter().cloned());
    header.extend(["events", "non_converged", "data_gap"].map(String::from));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in reports {
        let mut row = vec![r.date.to_string()];
        row.extend(columns.iter().map(|c| fmt_value(r.values.get(c))));
        row.push(
            r.event_counts
                .iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect::<Vec<_>>()
                .join(";"),
        );
        row.push(r.non_converged.to_string());
        row.push(u8::from(r.data_gap).to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
