//! Training load, fitness and exposure metrics computed from raw streams.

mod activity;
mod cp;
mod exposure;
mod training;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use activity::{active_time, aerobic_decoupling, vam, DEFAULT_ACTIVE_CADENCE_RPM};
pub use cp::{
    best_mean_power, cp_curve, cp_curve_csv, log_spaced_durations, CpCache, CpCurve,
    MAX_CP_DURATION_S,
};
pub use exposure::{
    pollutant_intake, sleep_score, spo2_events, stress_score, BreathingModel, PollutantIntake,
    HIGH_INTAKE_UG_PER_MIN, SPO2_LOW_PERCENT,
};
pub use training::{
    ctl, ctl_exponential, govss, hpa_events, trimp, CtlMethod, GovssConfig, HPA_THRESHOLD_W_PER_KG,
    HPA_WINDOW_S,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("profile error: {0}")]
    Profile(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("not computable: {0}")]
    NotComputable(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AthleteProfile {
    pub mass_kg: f64,
    pub height_cm: f64,
    pub sex: Sex,
    pub age_years: f64,
    pub hr_rest: f64,
    /// Defaults to `220 - age` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr_max: Option<f64>,
}

impl AthleteProfile {
    pub fn hr_max(&self) -> f64 {
        self.hr_max.unwrap_or(220.0 - self.age_years)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_kg > 0.0 && self.mass_kg.is_finite()) {
            return Err(MetricError::Profile(format!(
                "mass must be positive, got {} kg",
                self.mass_kg
            )));
        }
        if !(self.hr_rest < self.hr_max()) {
            return Err(MetricError::Profile(format!(
                "resting heart rate {} must be below maximum {}",
                self.hr_rest,
                self.hr_max()
            )));
        }
        Ok(())
    }

    /// Heart-rate reserve fraction, clamped to `[0, 1]`.
    pub fn hr_reserve(&self, hr: f64) -> f64 {
        ((hr - self.hr_rest) / (self.hr_max() - self.hr_rest)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyLoad {
    pub date: NaiveDate,
    pub value: f64,
}

/// Writes `date,metric,value` rows.
pub fn metrics_csv<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (NaiveDate, &'a str, f64)>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "metric", "value"])
        .expect("in-memory write");
    for (date, metric, value) in rows {
        w.write_record([date.to_string(), metric.to_string(), value.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
