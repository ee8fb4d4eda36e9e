use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AthleteProfile, MetricError, Result};
use crate::ievent::InterfaceEvent;
use crate::personicle::{StreamSeries, Timestamp};

pub const HIGH_INTAKE_UG_PER_MIN: f64 = 0.7;
pub const SPO2_LOW_PERCENT: f64 = 95.0;

/// Affine breathing-rate and tidal-volume maps driven by heart rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathingModel {
    pub br_base: f64,
    pub br_per_bpm: f64,
    pub br_min: f64,
    pub br_max: f64,
    /// Resting tidal volume in litres per kg of body mass.
    pub vt_l_per_kg: f64,
    pub vt_reserve_gain: f64,
}

impl Default for BreathingModel {
    fn default() -> Self {
        Self {
            br_base: 12.0,
            br_per_bpm: 0.32,
            br_min: 12.0,
            br_max: 60.0,
            vt_l_per_kg: 0.007,
            vt_reserve_gain: 2.0,
        }
    }
}

impl BreathingModel {
    /// Breaths per minute.
    pub fn breathing_rate(&self, hr: f64, profile: &AthleteProfile) -> f64 {
        (self.br_base + self.br_per_bpm * (hr - profile.hr_rest)).clamp(self.br_min, self.br_max)
    }

    /// Litres per breath.
    pub fn tidal_volume_l(&self, hr: f64, profile: &AthleteProfile) -> f64 {
        self.vt_l_per_kg * profile.mass_kg * (1.0 + self.vt_reserve_gain * profile.hr_reserve(hr))
    }

    /// Micrograms inhaled in one minute at concentration `conc` µg/m³.
    pub fn intake_ug_per_min(&self, hr: f64, conc: f64, profile: &AthleteProfile) -> f64 {
        self.breathing_rate(hr, profile) * self.tidal_volume_l(hr, profile) * 0.001 * conc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutantIntake {
    pub total_ug: f64,
    /// Minute start and intake in µg for every minute with both inputs.
    pub per_minute: Vec<(Timestamp, f64)>,
    pub events: Vec<InterfaceEvent>,
}

fn minute_means(series: &StreamSeries) -> BTreeMap<Timestamp, f64> {
    let mut acc: BTreeMap<Timestamp, (f64, usize)> = BTreeMap::new();
    for s in &series.samples {
        let e = acc.entry(s.t.div_euclid(60) * 60).or_insert((0.0, 0));
        e.0 += s.value;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(m, (sum, n))| (m, sum / n as f64))
        .collect()
}

/// Inhaled pollutant mass from heart rate and ambient concentration,
/// aligned on UTC minutes. Consecutive minutes above 0.7 µg form one
/// high-intake event.
pub fn pollutant_intake(
    hr: &StreamSeries,
    concentration: &StreamSeries,
    profile: &AthleteProfile,
    model: &BreathingModel,
) -> Result<PollutantIntake> {
    if let Some(bad) = concentration.samples.iter().find(|s| s.value < 0.0) {
        return Err(MetricError::Data(format!(
            "negative concentration {} at t={}",
            bad.value, bad.t
        )));
    }
    profile.validate()?;
    let hr_min = minute_means(hr);
    let conc_min = minute_means(concentration);
    let per_minute: Vec<(Timestamp, f64)> = hr_min
        .iter()
        .filter_map(|(m, &h)| {
            conc_min
                .get(m)
                .map(|&c| (*m, model.intake_ug_per_min(h, c, profile)))
        })
        .collect();
    let total_ug = per_minute.iter().map(|(_, v)| v).sum();

    let mut events: Vec<InterfaceEvent> = Vec::new();
    for &(m, v) in per_minute
        .iter()
        .filter(|(_, v)| *v > HIGH_INTAKE_UG_PER_MIN)
    {
        match events.last_mut() {
            Some(e) if e.end == m => {
                e.end = m + 60;
                *e.attributes.get_mut("intake_ug").expect("set") += v;
                let peak = e.attributes.get_mut("peak_ug_per_min").expect("set");
                *peak = peak.max(v);
            }
            _ => events.push(InterfaceEvent {
                rule_name: "HighIntake".to_string(),
                start: m,
                end: m + 60,
                attributes: BTreeMap::from([
                    ("intake_ug".to_string(), v),
                    ("peak_ug_per_min".to_string(), v),
                ]),
            }),
        }
    }
    for e in &mut events {
        e.attributes
            .insert("duration".to_string(), e.duration_s() as f64);
    }
    Ok(PollutantIntake {
        total_ug,
        per_minute,
        events,
    })
}

/// Maximal runs of consecutive samples below 95 %.
pub fn spo2_events(spo2: &StreamSeries) -> Result<Vec<InterfaceEvent>> {
    if let Some(bad) = spo2
        .samples
        .iter()
        .find(|s| !(0.0..=100.0).contains(&s.value))
    {
        return Err(MetricError::Data(format!(
            "SpO2 {} at t={} is outside [0, 100]",
            bad.value, bad.t
        )));
    }
    let mut events: Vec<InterfaceEvent> = Vec::new();
    let mut in_run = false;
    for s in &spo2.samples {
        if s.value >= SPO2_LOW_PERCENT {
            in_run = false;
            continue;
        }
        match events.last_mut() {
            Some(e) if in_run => {
                e.end = s.t + 1;
                let m = e.attributes.get_mut("min").expect("set");
                *m = m.min(s.value);
            }
            _ => events.push(InterfaceEvent {
                rule_name: "LowSpO2".to_string(),
                start: s.t,
                end: s.t + 1,
                attributes: BTreeMap::from([("min".to_string(), s.value)]),
            }),
        }
        in_run = true;
    }
    for e in &mut events {
        e.attributes
            .insert("duration".to_string(), e.duration_s() as f64);
    }
    Ok(events)
}

fn check_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if !(lo..=hi).contains(&value) {
        return Err(MetricError::Parameter(format!(
            "{name} = {value} is outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn hrv_norm(hrv_ms: f64) -> f64 {
    (hrv_ms / 100.0).clamp(0.0, 1.0)
}

/// Composite sleep quality on 0..100.
pub fn sleep_score(
    duration_h: f64,
    movement_index: f64,
    hrv_ms: f64,
    subjective_0_10: f64,
) -> Result<f64> {
    check_range("duration_h", duration_h, 0.0, 24.0)?;
    check_range("movement_index", movement_index, 0.0, 1.0)?;
    check_range("hrv_ms", hrv_ms, 0.0, f64::MAX)?;
    check_range("subjective", subjective_0_10, 0.0, 10.0)?;
    Ok(100.0
        * (0.4 * (duration_h / 8.0).min(1.0)
            + 0.2 * (1.0 - movement_index)
            + 0.2 * hrv_norm(hrv_ms)
            + 0.2 * subjective_0_10 / 10.0))
}

/// Composite stress on 0..100.
pub fn stress_score(hrv_ms: f64, subjective_0_10: f64) -> Result<f64> {
    check_range("hrv_ms", hrv_ms, 0.0, f64::MAX)?;
    check_range("subjective", subjective_0_10, 0.0, 10.0)?;
    Ok(100.0 * (0.5 * (1.0 - hrv_norm(hrv_ms)) + 0.5 * subjective_0_10 / 10.0))
}
