use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_linear, LearnError, LinearModel, Result};
use crate::gnb::estimate_vo2max_from_power;
use crate::loadmetrics::best_mean_power;
use crate::personicle::StreamSeries;

pub const TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_HORIZON_DAYS: u32 = 42;

/// Each day's best mean power over `window_s` seconds across the given
/// activities. Days where no activity is that long are absent.
pub fn daily_best_power(
    activities: &[(NaiveDate, &StreamSeries)],
    window_s: usize,
) -> BTreeMap<NaiveDate, f64> {
    let best: Vec<(NaiveDate, Option<f64>)> = activities
        .par_iter()
        .map(|(day, power)| {
            let values = power.dense_1hz();
            (
                *day,
                (values.len() >= window_s).then(|| best_mean_power(&values, window_s)),
            )
        })
        .collect();
    let mut out: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for (day, w) in best {
        if let Some(w) = w {
            let e = out.entry(day).or_insert(w);
            *e = e.max(w);
        }
    }
    out
}

/// Daily VO2max from the trailing `horizon_days` mean of each day's best
/// 4-minute power. Only days with a value count toward the mean; days whose
/// window holds none are absent. Covers the first to the last input day.
pub fn ground_truth_vo2max(
    daily_best_w: &BTreeMap<NaiveDate, f64>,
    mass_kg: f64,
    horizon_days: u32,
) -> Result<BTreeMap<NaiveDate, f64>> {
    let (Some(first), Some(last)) = (daily_best_w.keys().next(), daily_best_w.keys().next_back())
    else {
        return Err(LearnError::InsufficientData(
            "no day with a 4-minute window".into(),
        ));
    };
    if horizon_days == 0 {
        return Err(LearnError::Parameter(
            "horizon must be at least one day".into(),
        ));
    }
    let mut out = BTreeMap::new();
    let mut day = *first;
    while day <= *last {
        let from = day - Duration::days(horizon_days as i64 - 1);
        let (sum, n) = daily_best_w
            .range(from..=day)
            .fold((0.0, 0usize), |(s, n), (_, w)| (s + w, n + 1));
        if n > 0 {
            out.insert(day, estimate_vo2max_from_power(sum / n as f64, mass_kg)?);
        }
        day += Duration::days(1);
    }
    Ok(out)
}

/// Mean of `series` over the `horizon_days` days ending at `day`; `None`
/// unless every one of those days has a value.
pub fn rolling_mean(
    series: &BTreeMap<NaiveDate, f64>,
    horizon_days: u32,
    day: NaiveDate,
) -> Option<f64> {
    if horizon_days == 0 {
        return None;
    }
    let from = day - Duration::days(horizon_days as i64 - 1);
    let values: Vec<f64> = series.range(from..=day).map(|(_, v)| *v).collect();
    (values.len() == horizon_days as usize)
        .then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Number of leading rows used for training in a chronological split.
pub fn chronological_split(n: usize) -> usize {
    ((n as f64 * TRAIN_FRACTION).round() as usize).min(n)
}

/// Linear model from a trailing-mean feature to a daily target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub horizon_days: u32,
    pub model: LinearModel,
    pub train_days: usize,
    pub test_days: usize,
    pub test_rmse: Option<f64>,
}

impl FeatureModel {
    pub fn estimate(&self, feature: &BTreeMap<NaiveDate, f64>, day: NaiveDate) -> Option<f64> {
        rolling_mean(feature, self.horizon_days, day).map(|x| self.model.predict(x))
    }
}

fn rows(
    feature: &BTreeMap<NaiveDate, f64>,
    target: &BTreeMap<NaiveDate, f64>,
    horizon_days: u32,
) -> Vec<(f64, f64)> {
    target
        .iter()
        .filter_map(|(d, y)| rolling_mean(feature, horizon_days, *d).map(|x| (x, *y)))
        .collect()
}

/// Fits on the first 70% of days (chronologically) with a full feature
/// window and a target, and scores the rest.
pub fn fit_feature_model(
    feature: &BTreeMap<NaiveDate, f64>,
    target: &BTreeMap<NaiveDate, f64>,
    horizon_days: u32,
) -> Result<FeatureModel> {
    let rows = rows(feature, target, horizon_days);
    let k = chronological_split(rows.len());
    let model = fit_linear(&rows[..k])?;
    Ok(FeatureModel {
        horizon_days,
        model,
        train_days: k,
        test_days: rows.len() - k,
        test_rmse: model.rmse(&rows[k..]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub horizon_days: u32,
    pub test_rmse: f64,
    /// Standard error of `test_rmse` by the delta method.
    pub std_error: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl SweepRow {
    /// Whether the `±k` standard-error intervals of two rows intersect.
    pub fn overlaps(&self, other: &SweepRow, k: f64) -> bool {
        (self.test_rmse - other.test_rmse).abs() <= k * (self.std_error + other.std_error)
    }
}

fn sweep_row(
    feature: &BTreeMap<NaiveDate, f64>,
    target: &BTreeMap<NaiveDate, f64>,
    h: u32,
) -> Result<SweepRow> {
    let rows = rows(feature, target, h);
    let k = chronological_split(rows.len());
    if rows.len() - k < 2 {
        return Err(LearnError::InsufficientData(format!(
            "{} usable days leave fewer than 2 for testing",
            rows.len()
        )));
    }
    let model = fit_linear(&rows[..k])?;
    let sq: Vec<f64> = rows[k..]
        .iter()
        .map(|(x, y)| (y - model.predict(*x)).powi(2))
        .collect();
    let n = sq.len() as f64;
    let mse = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (n - 1.0);
    let rmse = mse.sqrt();
    let std_error = if rmse > 0.0 {
        (var / n).sqrt() / (2.0 * rmse)
    } else {
        0.0
    };
    Ok(SweepRow {
        horizon_days: h,
        test_rmse: rmse,
        std_error,
        n_train: k,
        n_test: sq.len(),
    })
}

/// Holdout error of the trailing-mean feature model for each horizon,
/// sorted by horizon. Horizons without enough data are omitted.
pub fn memory_sweep(
    feature: &BTreeMap<NaiveDate, f64>,
    target: &BTreeMap<NaiveDate, f64>,
    horizons: &[u32],
) -> Vec<SweepRow> {
    let mut hs = horizons.to_vec();
    hs.sort_unstable();
    hs.dedup();
    hs.par_iter()
        .filter_map(|&h| match sweep_row(feature, target, h) {
            Ok(r) => Some(r),
            Err(e) => {
                tracing::warn!(horizon = h, error = %e, "memory sweep row omitted");
                None
            }
        })
        .collect()
}
