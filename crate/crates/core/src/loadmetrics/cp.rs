use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::personicle::StreamSeries;

/// Longest duration on the default critical power grid (5 h).
pub const MAX_CP_DURATION_S: u32 = 18_000;

/// Maximal mean power per duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpCurve {
    pub durations: Vec<u32>,
    pub watts: Vec<f64>,
}

impl CpCurve {
    pub fn watts_at(&self, duration_s: u32) -> Option<f64> {
        self.durations
            .binary_search(&duration_s)
            .ok()
            .map(|i| self.watts[i])
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }
}

/// 1 Hz power from first to last sample with missing seconds as 0 W.
fn zero_filled(power: &StreamSeries) -> Vec<f64> {
    let (Some(a), Some(b)) = (power.first_t(), power.last_t()) else {
        return Vec::new();
    };
    let mut out = vec![0.0; (b - a + 1) as usize];
    for s in &power.samples {
        out[(s.t - a) as usize] = s.value;
    }
    out
}

fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    prefix
}

fn best_from_prefix(prefix: &[f64], d: usize) -> f64 {
    let n = prefix.len() - 1;
    if d == 0 || d > n {
        return 0.0;
    }
    (0..=n - d)
        .map(|i| prefix[i + d] - prefix[i])
        .fold(f64::NEG_INFINITY, f64::max)
        / d as f64
}

/// Best mean over any contiguous `d`-sample window; 0 when `d` exceeds the
/// series length.
pub fn best_mean_power(values: &[f64], d: usize) -> f64 {
    best_from_prefix(&prefix_sums(values), d)
}

fn full_curve(power: &StreamSeries) -> Vec<f64> {
    let values = zero_filled(power);
    let prefix = prefix_sums(&values);
    let n = values.len().min(MAX_CP_DURATION_S as usize);
    let mut curve: Vec<f64> = (1..=n)
        .into_par_iter()
        .map(|d| best_from_prefix(&prefix, d))
        .collect();
    // A longer window can out-average every shorter one (e.g. 100,0,0,100),
    // so each duration takes the best mean over windows at least that long.
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i] = curve[i].max(curve[i + 1]);
    }
    curve
}

fn assemble(curves: &[Arc<Vec<f64>>], durations: &[u32]) -> CpCurve {
    let mut durations: Vec<u32> = durations
        .iter()
        .copied()
        .filter(|d| (1..=MAX_CP_DURATION_S).contains(d))
        .collect();
    durations.sort_unstable();
    durations.dedup();
    let watts = durations
        .iter()
        .map(|&d| {
            curves
                .iter()
                .filter_map(|c| c.get(d as usize - 1).copied())
                .fold(0.0, f64::max)
        })
        .collect();
    CpCurve { durations, watts }
}

/// Critical power curve across activities: for each duration `d`, the best
/// mean power over any contiguous window of at least `d` seconds. Durations
/// outside `1..=18000` are dropped; durations longer than every activity
/// yield 0.
pub fn cp_curve(activities: &[&StreamSeries], durations: &[u32]) -> CpCurve {
    let curves: Vec<Arc<Vec<f64>>> = activities
        .par_iter()
        .map(|a| Arc::new(full_curve(a)))
        .collect();
    assemble(&curves, durations)
}

/// Per-activity curve cache keyed by activity id.
#[derive(Debug, Default)]
pub struct CpCache {
    curves: Mutex<HashMap<String, Arc<Vec<f64>>>>,
}

impl CpCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn activity(&self, id: &str, power: &StreamSeries) -> Arc<Vec<f64>> {
        if let Some(c) = self.curves.lock().expect("cache lock").get(id) {
            return Arc::clone(c);
        }
        let c = Arc::new(full_curve(power));
        self.curves
            .lock()
            .expect("cache lock")
            .insert(id.to_string(), Arc::clone(&c));
        c
    }

    pub fn curve(&self, activities: &[(&str, &StreamSeries)], durations: &[u32]) -> CpCurve {
        let curves: Vec<Arc<Vec<f64>>> = activities
            .iter()
            .map(|(id, s)| self.activity(id, s))
            .collect();
        assemble(&curves, durations)
    }

    pub fn len(&self) -> usize {
        self.curves.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Roughly log-spaced whole-second durations from 1 to `max_s`.
pub fn log_spaced_durations(max_s: u32, points: usize) -> Vec<u32> {
    let max_s = max_s.max(1);
    let points = points.max(2);
    let ln_max = f64::from(max_s).ln();
    let mut out: Vec<u32> = (0..points)
        .map(|i| (ln_max * i as f64 / (points - 1) as f64).exp().round() as u32)
        .map(|d| d.clamp(1, max_s))
        .collect();
    out.dedup();
    out
}

/// `duration_s,watts` rows.
pub fn cp_curve_csv(curve: &CpCurve) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["duration_s", "watts"])
        .expect("in-memory write");
    for (d, p) in curve.durations.iter().zip(&curve.watts) {
        w.write_record([d.to_string(), p.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
