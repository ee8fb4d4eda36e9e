use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_linear, LearnError, LinearModel, Result};
use crate::personicle::{StreamSeries, Timestamp};

pub const VAM_WINDOW_S: i64 = 240;
pub const VAM_THRESHOLDS: std::ops::RangeInclusive<u32> = 0..=9;

/// One 4-minute climbing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VamWindow {
    /// Vertical ascent rate, m/h.
    pub vam: f64,
    /// Mean power over mass, W/kg.
    pub rel_power: f64,
    /// Grade over the window in percent.
    pub slope_pct: f64,
}

/// Consecutive non-overlapping 4-minute windows of `[t0, t1]`. Windows
/// lacking two altitude samples, any power sample or forward distance are
/// skipped.
pub fn vam_windows(
    altitude: &StreamSeries,
    speed: &StreamSeries,
    power: &StreamSeries,
    mass_kg: f64,
    t0: Timestamp,
    t1: Timestamp,
) -> Result<Vec<VamWindow>> {
    if !(mass_kg > 0.0) {
        return Err(LearnError::Parameter(format!(
            "mass must be positive, got {mass_kg}"
        )));
    }
    let mut out = Vec::new();
    let mut ws = t0;
    while ws + VAM_WINDOW_S <= t1 {
        let we = ws + VAM_WINDOW_S;
        let alt = altitude.window(ws, we);
        let pw = power.window(ws, we - 1);
        let distance: f64 = speed.hold_grid(ws, we - 1, 1).into_iter().flatten().sum();
        if alt.len() >= 2 && !pw.is_empty() && distance > 0.0 {
            let (a, b) = (alt[0], alt[alt.len() - 1]);
            let climb = b.value - a.value;
            out.push(VamWindow {
                vam: climb * 3600.0 / (b.t - a.t) as f64,
                rel_power: pw.iter().map(|s| s.value).sum::<f64>() / pw.len() as f64 / mass_kg,
                slope_pct: climb / distance * 100.0,
            });
        }
        ws = we;
    }
    Ok(out)
}

/// Steepest window grade, the ride-level slope used to pick a model.
pub fn max_slope_pct(windows: &[VamWindow]) -> Option<f64> {
    windows.iter().map(|w| w.slope_pct).reduce(f64::max)
}

/// Linear VAM to relative-power models keyed by slope threshold: the model
/// at `s` is trained on windows with slope of at least `s` percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VamModelFamily {
    pub models: BTreeMap<u32, LinearModel>,
}

pub fn fit_vam_family(windows: &[VamWindow]) -> Result<VamModelFamily> {
    if windows.is_empty() {
        return Err(LearnError::InsufficientData("no VAM windows".into()));
    }
    let fits: Vec<(u32, Result<LinearModel>)> = VAM_THRESHOLDS
        .into_par_iter()
        .map(|s| {
            let pairs: Vec<(f64, f64)> = windows
                .iter()
                .filter(|w| w.slope_pct >= s as f64)
                .map(|w| (w.vam, w.rel_power))
                .collect();
            (s, fit_linear(&pairs))
        })
        .collect();
    let mut models = BTreeMap::new();
    for (s, fit) in fits {
        match fit {
            Ok(m) => {
                models.insert(s, m);
            }
            Err(e) => tracing::warn!(threshold = s, error = %e, "no model for slope threshold"),
        }
    }
    if models.is_empty() {
        return Err(LearnError::InsufficientData(
            "no slope threshold had enough distinct windows".into(),
        ));
    }
    Ok(VamModelFamily { models })
}

/// Model for a ride whose steepest window has `max_slope` percent grade:
/// the threshold `floor(max_slope)` clamped to 0..=9, falling back to the
/// nearest lower fitted threshold and then to the lowest one.
pub fn select_vam_model(family: &VamModelFamily, max_slope: f64) -> Option<(u32, &LinearModel)> {
    let wanted = if max_slope.is_nan() {
        0
    } else {
        max_slope.floor().clamp(0.0, *VAM_THRESHOLDS.end() as f64) as u32
    };
    family
        .models
        .range(..=wanted)
        .next_back()
        .or_else(|| family.models.iter().next())
        .map(|(s, m)| (*s, m))
}
