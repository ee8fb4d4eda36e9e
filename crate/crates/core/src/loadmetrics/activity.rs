use std::collections::BTreeMap;

use super::{MetricError, Result};
use crate::personicle::{StreamSeries, Timestamp};

pub const DEFAULT_ACTIVE_CADENCE_RPM: f64 = 10.0;

/// Vertical ascent rate in m/h between the first and last samples inside
/// `[t0, t1]`.
pub fn vam(altitude: &StreamSeries, t0: Timestamp, t1: Timestamp) -> Result<f64> {
    let w = altitude.window(t0, t1);
    if w.len() < 2 {
        return Err(MetricError::InsufficientData(format!(
            "need at least 2 altitude samples in [{t0}, {t1}], found {}",
            w.len()
        )));
    }
    let (a, b) = (w[0], w[w.len() - 1]);
    Ok((b.value - a.value) * 3600.0 / (b.t - a.t) as f64)
}

/// Seconds with cadence strictly above `threshold_rpm`.
pub fn active_time(cadence: &StreamSeries, threshold_rpm: f64) -> u64 {
    cadence
        .samples
        .iter()
        .filter(|s| s.value > threshold_rpm)
        .count() as u64
}

/// Power:heart-rate ratio drift between the first and second half of an
/// activity, in percent. Only instants with both values and a positive
/// heart rate are used.
pub fn aerobic_decoupling(power: &StreamSeries, hr: &StreamSeries) -> Result<f64> {
    if power.is_empty() || hr.is_empty() {
        return Err(MetricError::NotComputable(
            "power and heart rate streams are both required".into(),
        ));
    }
    let hr_at: BTreeMap<Timestamp, f64> = hr.samples.iter().map(|s| (s.t, s.value)).collect();
    let pairs: Vec<(f64, f64)> = power
        .samples
        .iter()
        .filter_map(|s| hr_at.get(&s.t).map(|&h| (s.value, h)))
        .filter(|&(_, h)| h > 0.0)
        .collect();
    let half = pairs.len() / 2;
    if half < 60 {
        return Err(MetricError::NotComputable(format!(
            "each half needs at least 60 paired samples, found {half}"
        )));
    }
    let ratio = |xs: &[(f64, f64)]| {
        let n = xs.len() as f64;
        let p = xs.iter().map(|x| x.0).sum::<f64>() / n;
        let h = xs.iter().map(|x| x.1).sum::<f64>() / n;
        p / h
    };
    let s = ratio(&pairs[..half]);
    let l = ratio(&pairs[half..]);
    if s == 0.0 {
        return Err(MetricError::Undefined(
            "first-half power:heart-rate ratio is zero".into(),
        ));
    }
    Ok((s - l) * 100.0 / s)
}
