use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{AthleteProfile, DailyLoad, MetricError, Result, Sex};
use crate::ievent::InterfaceEvent;
use crate::personicle::StreamSeries;

pub const HPA_WINDOW_S: usize = 5;
pub const HPA_THRESHOLD_W_PER_KG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CtlMethod {
    /// Plain mean over the trailing horizon.
    #[default]
    Rolling,
    /// First-order exponential filter with the horizon as time constant.
    Exponential,
}

fn daily_totals(loads: &[DailyLoad]) -> BTreeMap<NaiveDate, f64> {
    let mut by_day = BTreeMap::new();
    for l in loads {
        *by_day.entry(l.date).or_insert(0.0) += l.value;
    }
    by_day
}

/// Chronic training load: mean daily load over the `horizon_days` days
/// ending at `as_of`, absent days counting as zero.
pub fn ctl(loads: &[DailyLoad], horizon_days: u32, as_of: NaiveDate) -> f64 {
    let h = horizon_days.max(1);
    let first = as_of - Days::new(u64::from(h - 1));
    let total: f64 = loads
        .iter()
        .filter(|l| l.date >= first && l.date <= as_of)
        .map(|l| l.value)
        .sum();
    total / f64::from(h)
}

/// Exponentially weighted alternative to [`ctl`].
pub fn ctl_exponential(loads: &[DailyLoad], time_constant_days: u32, as_of: NaiveDate) -> f64 {
    let by_day = daily_totals(loads);
    let Some(&start) = by_day.keys().next() else {
        return 0.0;
    };
    let tc = f64::from(time_constant_days.max(1));
    let mut value = 0.0;
    let mut day = start;
    while day <= as_of {
        let load = by_day.get(&day).copied().unwrap_or(0.0);
        value += (load - value) / tc;
        day = day + Days::new(1);
    }
    value
}

fn trimp_constants(sex: Sex) -> (f64, f64) {
    match sex {
        Sex::Male => (0.64, 1.92),
        Sex::Female => (0.86, 1.67),
    }
}

/// Exponential heart-rate-reserve training impulse. Samples are bucketed
/// into minutes from the first sample; each bucket contributes
/// `samples / 60` minutes at its mean heart rate.
pub fn trimp(hr: &StreamSeries, profile: &AthleteProfile) -> Result<f64> {
    if !(profile.hr_max() > profile.hr_rest) {
        return Err(MetricError::Profile(format!(
            "maximum heart rate {} must exceed resting {}",
            profile.hr_max(),
            profile.hr_rest
        )));
    }
    let Some(t0) = hr.first_t() else {
        return Ok(0.0);
    };
    let (k1, k2) = trimp_constants(profile.sex);
    let mut buckets: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for s in &hr.samples {
        let e = buckets.entry((s.t - t0).div_euclid(60)).or_insert((0.0, 0));
        e.0 += s.value;
        e.1 += 1;
    }
    Ok(buckets
        .values()
        .map(|&(sum, n)| {
            let r = profile.hr_reserve(sum / n as f64);
            (n as f64 / 60.0) * r * k1 * (k2 * r).exp()
        })
        .sum())
}

/// High power activity: 5 s windows whose mean exceeds 10 W/kg, with
/// overlapping or touching windows merged.
pub fn hpa_events(power: &StreamSeries, profile: &AthleteProfile) -> Result<Vec<InterfaceEvent>> {
    if !(profile.mass_kg > 0.0) {
        return Err(MetricError::Profile(format!(
            "mass must be positive, got {} kg",
            profile.mass_kg
        )));
    }
    let Some(t0) = power.first_t() else {
        return Ok(Vec::new());
    };
    let w = HPA_WINDOW_S;
    let values = power.dense_1hz();
    if values.len() < w {
        return Ok(Vec::new());
    }
    let mut prefix = vec![0.0; values.len() + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mut events: Vec<InterfaceEvent> = Vec::new();
    for i in 0..=values.len() - w {
        let wkg = (prefix[i + w] - prefix[i]) / w as f64 / profile.mass_kg;
        if wkg <= HPA_THRESHOLD_W_PER_KG {
            continue;
        }
        let (start, end) = (t0 + i as i64, t0 + (i + w) as i64);
        match events.last_mut() {
            Some(last) if start <= last.end => {
                last.end = end;
                let peak = last
                    .attributes
                    .get_mut("peak_w_per_kg")
                    .expect("set on creation");
                *peak = peak.max(wkg);
            }
            _ => events.push(InterfaceEvent {
                rule_name: "HPA".to_string(),
                start,
                end,
                attributes: BTreeMap::from([("peak_w_per_kg".to_string(), wkg)]),
            }),
        }
    }
    for e in &mut events {
        e.attributes
            .insert("duration".to_string(), e.duration_s() as f64);
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovssConfig {
    pub gravity: f64,
    pub rolling_resistance: f64,
    pub smoothing_s: usize,
}

impl Default for GovssConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            rolling_resistance: 0.005,
            smoothing_s: 120,
        }
    }
}

/// Graded-power stress score over samples present in both streams.
pub fn govss(
    speed: &StreamSeries,
    slope: &StreamSeries,
    profile: &AthleteProfile,
    cp60_w: f64,
    config: &GovssConfig,
) -> Result<f64> {
    if !(cp60_w > 0.0 && cp60_w.is_finite()) {
        return Err(MetricError::Parameter(format!(
            "cp60 must be positive, got {cp60_w}"
        )));
    }
    if !(profile.mass_kg > 0.0) {
        return Err(MetricError::Profile("mass must be positive".into()));
    }
    let slopes: BTreeMap<i64, f64> = slope.samples.iter().map(|s| (s.t, s.value)).collect();
    let joined: Vec<(i64, f64, f64)> = speed
        .samples
        .iter()
        .filter_map(|s| slopes.get(&s.t).map(|&g| (s.t, s.value, g)))
        .collect();
    if joined.is_empty() {
        return Ok(0.0);
    }
    let m = profile.mass_kg;
    let g = config.gravity;
    let power: Vec<f64> = joined
        .iter()
        .enumerate()
        .map(|(i, &(t, v, s))| {
            let a = if i == 0 {
                0.0
            } else {
                let (tp, vp, _) = joined[i - 1];
                (v - vp) / (t - tp) as f64
            };
            (m * g * v * s + m * a * v + config.rolling_resistance * m * g * v).max(0.0)
        })
        .collect();

    let w = config.smoothing_s.max(1);
    let mut sum = 0.0;
    let mut smoothed_total = 0.0;
    for (i, p) in power.iter().enumerate() {
        sum += p;
        if i >= w {
            sum -= power[i - w];
        }
        smoothed_total += sum / (i + 1).min(w) as f64;
    }
    let mean_xgp = smoothed_total / power.len() as f64;
    let duration_h = power.len() as f64 / 3600.0;
    Ok(100.0 * duration_h * (mean_xgp / cp60_w).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loadmetrics::tests::profile;
    use crate::personicle::{Sample, StreamSeries};

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 11, 1).unwrap() + Days::new(u64::from(d))
    }

    #[test]
    fn ctl_examples() {
        let constant: Vec<DailyLoad> = (0..60)
            .map(|d| DailyLoad {
                date: day(d),
                value: 100.0,
            })
            .collect();
        assert_eq!(ctl(&constant, 42, day(59)), 100.0);
        let single = [DailyLoad {
            date: day(0),
            value: 42.0,
        }];
        assert_eq!(ctl(&single, 42, day(41)), 1.0);
        assert_eq!(ctl(&single, 42, day(42)), 0.0);
        assert_eq!(ctl(&[], 42, day(0)), 0.0);
    }

    #[test]
    fn exponential_ctl_converges_to_constant() {
        let constant: Vec<DailyLoad> = (0..800)
            .map(|d| DailyLoad {
                date: day(d),
                value: 80.0,
            })
            .collect();
        assert!((ctl_exponential(&constant, 42, day(799)) - 80.0).abs() < 1e-3);
        assert_eq!(ctl_exponential(&[], 42, day(0)), 0.0);
    }

    #[test]
    fn trimp_examples() {
        let p = profile();
        let rest = StreamSeries::from_values("hr", "bpm", 0, &[50.0; 600]);
        assert_eq!(trimp(&rest, &p).unwrap(), 0.0);
        let max = StreamSeries::from_values("hr", "bpm", 0, &[190.0; 3600]);
        let expected = 60.0 * 0.64 * 1.92f64.exp();
        assert!((trimp(&max, &p).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 261.9).abs() < 0.05);
        assert_eq!(trimp(&StreamSeries::new("hr", "bpm"), &p).unwrap(), 0.0);
        let mut bad = p.clone();
        bad.hr_max = Some(40.0);
        assert!(trimp(&rest, &bad).is_err());
    }

    #[test]
    fn hpa_examples() {
        let p = profile();
        let mut v = vec![0.0; 20];
        v[5..11].fill(650.0);
        let ev = hpa_events(&StreamSeries::from_values("power", "W", 0, &v), &p).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].duration_s(), 6);
        assert!((ev[0].attributes["peak_w_per_kg"] - 650.0 / 60.0).abs() < 1e-12);

        let flat = StreamSeries::from_values("power", "W", 0, &[599.0; 60]);
        assert!(hpa_events(&flat, &p).unwrap().is_empty());

        let mut two = vec![800.0; 10];
        two.extend(vec![0.0; 60]);
        two.extend(vec![800.0; 10]);
        let ev = hpa_events(&StreamSeries::from_values("power", "W", 0, &two), &p).unwrap();
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn govss_examples() {
        let p = profile();
        let cfg = GovssConfig::default();
        let zeros = StreamSeries::from_values("speed", "m/s", 0, &[0.0; 300]);
        let slope = StreamSeries::from_values("slope", "1", 0, &[0.05; 300]);
        assert_eq!(govss(&zeros, &slope, &p, 200.0, &cfg).unwrap(), 0.0);

        let speed = StreamSeries::from_values("speed", "m/s", 0, &[5.0; 3600]);
        let slope = StreamSeries::from_values("slope", "1", 0, &[0.05; 3600]);
        let graded: f64 = 60.0 * 9.81 * 5.0 * 0.05 + 0.005 * 60.0 * 9.81 * 5.0;
        assert!((graded - 161.865).abs() < 1e-9);
        let score = govss(&speed, &slope, &p, graded, &cfg).unwrap();
        assert!((score - 100.0).abs() < 1e-9, "{score}");

        let mut heavy = p.clone();
        heavy.mass_kg *= 2.0;
        let s2 = govss(&speed, &slope, &heavy, graded, &cfg).unwrap();
        assert!((s2 - 4.0 * score).abs() < 1e-6);
        assert!(govss(&speed, &slope, &p, 0.0, &cfg).is_err());
    }

    #[test]
    fn govss_acceleration_term() {
        let p = profile();
        let speed = StreamSeries::new("speed", "m/s")
            .with_samples(vec![Sample::new(0, 1.0), Sample::new(1, 2.0)]);
        let slope = StreamSeries::from_values("slope", "1", 0, &[0.0, 0.0]);
        let cfg = GovssConfig {
            smoothing_s: 1,
            ..Default::default()
        };
        let p0 = 0.005 * 60.0 * 9.81 * 1.0;
        let p1 = 60.0 * 1.0 * 2.0 + 0.005 * 60.0 * 9.81 * 2.0;
        let mean = (p0 + p1) / 2.0;
        let expected = 100.0 * (2.0 / 3600.0) * (mean / 100.0f64).powi(2);
        let got = govss(&speed, &slope, &p, 100.0, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }
}
