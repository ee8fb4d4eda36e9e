use std::collections::VecDeque;

use super::{BoolSeries, EvalError};
use crate::personicle::{StreamSeries, Timestamp};

fn check_window(window_s: i64) -> Result<usize, EvalError> {
    if window_s <= 0 {
        return Err(EvalError::Parameter(format!(
            "window_s must be positive, got {window_s}"
        )));
    }
    Ok(window_s as usize)
}

/// Spike test on a 1 Hz grid: `v[k] - min(v[k-w..=k]) >= delta`, over the
/// values present in the window.
pub fn spike_grid(values: &[Option<f64>], window: usize, delta: f64) -> Vec<bool> {
    let mut out = Vec::with_capacity(values.len());
    // Indices of present values with increasing values (sliding minimum).
    let mut mins: VecDeque<usize> = VecDeque::new();
    for (k, v) in values.iter().enumerate() {
        while mins.front().is_some_and(|&i| i + window < k) {
            mins.pop_front();
        }
        if let Some(v) = *v {
            while mins
                .back()
                .is_some_and(|&i| values[i].unwrap_or(f64::INFINITY) >= v)
            {
                mins.pop_back();
            }
            mins.push_back(k);
        }
        let fire = match (*v, mins.front()) {
            (Some(v), Some(&i)) => v - values[i].unwrap_or(v) >= delta,
            _ => false,
        };
        out.push(fire);
    }
    out
}

/// Climb test on a 1 Hz grid: `v[k] - v[ref] >= gain` where `ref` is the
/// earliest present index in `k-w..=k`.
pub fn climb_grid(values: &[Option<f64>], window: usize, gain: f64) -> Vec<bool> {
    let first_present = values.iter().position(Option::is_some);
    values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (Some(v), Some(first)) = (*v, first_present) else {
                return false;
            };
            let r = k.saturating_sub(window).max(first);
            values[r].is_some_and(|base| v - base >= gain)
        })
        .collect()
}

fn over_series(
    series: &StreamSeries,
    window_s: i64,
    f: impl Fn(&[Option<f64>], usize) -> Vec<bool>,
) -> Result<BoolSeries, EvalError> {
    let window = check_window(window_s)?;
    let (Some(a), Some(b)) = (series.first_t(), series.last_t()) else {
        return Ok(BoolSeries {
            t0: 0,
            values: Vec::new(),
        });
    };
    let grid = series.hold_grid(a, b, 1);
    Ok(BoolSeries {
        t0: a as Timestamp,
        values: f(&grid, window),
    })
}

/// Spike detector over the span of `series`, resampled to 1 Hz.
pub fn detect_spike(
    series: &StreamSeries,
    window_s: i64,
    delta: f64,
) -> Result<BoolSeries, EvalError> {
    over_series(series, window_s, |g, w| spike_grid(g, w, delta))
}

/// Climb detector over the span of `series`, resampled to 1 Hz.
pub fn detect_climb(
    series: &StreamSeries,
    gain_m: f64,
    window_s: i64,
) -> Result<BoolSeries, EvalError> {
    over_series(series, window_s, |g, w| climb_grid(g, w, gain_m))
}
