//! Data-driven model updates: heart-rate to power edges fitted from
//! parallel observations, the slope-thresholded VAM model family,
//! day-level feature models and inverse-error fusion.

mod crossmodal;
mod parallel;
mod vam;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnb::GnbError;
use crate::knowledge::KnowledgeError;
use crate::loadmetrics::MetricError;

pub use crossmodal::{
    chronological_split, daily_best_power, fit_feature_model, ground_truth_vo2max, memory_sweep,
    rolling_mean, FeatureModel, SweepRow, DEFAULT_HORIZON_DAYS, TRAIN_FRACTION,
};
pub use parallel::{
    apply_parallel_fit, fit_parallel_edge, parallel_patch, ActivityStreams, GateResult,
    ParallelFit, ParallelFitConfig, DEFAULT_AD_GATE_PCT, HR_POWER_EDGE,
};
pub use vam::{
    fit_vam_family, max_slope_pct, select_vam_model, vam_windows, VamModelFamily, VamWindow,
    VAM_THRESHOLDS, VAM_WINDOW_S,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Graph(#[from] GnbError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

pub type Result<T> = std::result::Result<T, LearnError>;

/// `y = slope * x + intercept` with its training error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
    pub train_rmse: f64,
    pub n: usize,
}

impl LinearModel {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Root mean squared error on `(x, y)` pairs; `None` when empty.
    pub fn rmse(&self, pairs: &[(f64, f64)]) -> Option<f64> {
        if pairs.is_empty() {
            return None;
        }
        let sse: f64 = pairs
            .iter()
            .map(|(x, y)| (y - self.predict(*x)).powi(2))
            .sum();
        Some((sse / pairs.len() as f64).sqrt())
    }
}

/// Ordinary least squares on `(x, y)` pairs.
pub fn fit_linear(pairs: &[(f64, f64)]) -> Result<LinearModel> {
    let n = pairs.len();
    if n < 2 {
        return Err(LearnError::InsufficientData(format!(
            "need at least 2 points, got {n}"
        )));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(LearnError::Parameter("non-finite sample".into()));
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in pairs {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(LearnError::Degenerate("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let mut model = LinearModel {
        slope,
        intercept: my - slope * mx,
        train_rmse: 0.0,
        n,
    };
    model.train_rmse = model.rmse(pairs).expect("nonempty");
    Ok(model)
}

/// Weighted average of estimates with weights proportional to 1/rmse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// Fuses `(value, train_rmse)` estimates. Estimates with zero rmse are
/// exact: they share the whole weight equally and the rest get none.
pub fn fuse(estimates: &[(f64, f64)]) -> Result<Fusion> {
    if estimates.is_empty() {
        return Err(LearnError::InsufficientData("no estimates to fuse".into()));
    }
    if let Some((v, r)) = estimates
        .iter()
        .find(|(v, r)| !v.is_finite() || !(*r >= 0.0) || !r.is_finite())
    {
        return Err(LearnError::Parameter(format!(
            "invalid estimate ({v}, rmse {r})"
        )));
    }
    let exact = estimates.iter().filter(|(_, r)| *r == 0.0).count();
    let raw: Vec<f64> = if exact > 0 {
        tracing::debug!(exact, "zero-error estimates take all the weight");
        estimates
            .iter()
            .map(|(_, r)| if *r == 0.0 { 1.0 } else { 0.0 })
            .collect()
    } else {
        // Scale by the smallest rmse first so extreme magnitudes neither
        // overflow nor underflow.
        let r_min = estimates.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        estimates.iter().map(|(_, r)| r_min / r).collect()
    };
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let value: f64 = weights.iter().zip(estimates).map(|(w, (v, _))| w * v).sum();
    let (lo, hi) = estimates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(*v), hi.max(*v))
        });
    Ok(Fusion {
        value: value.clamp(lo, hi),
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pairs: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.0 * i as f64 + 10.0)).collect();
        let m = fit_linear(&pairs).unwrap();
        assert!((m.slope - 2.0).abs() < 1e-12 && (m.intercept - 10.0).abs() < 1e-12);
        assert!(m.train_rmse < 1e-12);
        assert_eq!(m.n, 20);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_linear(&[(1.0, 2.0)]),
            Err(LearnError::InsufficientData(_))
        ));
        assert!(matches!(
            fit_linear(&[(1.0, 2.0), (1.0, 3.0)]),
            Err(LearnError::Degenerate(_))
        ));
    }

    #[test]
    fn fusion_rules() {
        let f = fuse(&[(40.0, 0.5), (60.0, 1.0)]).unwrap();
        assert!((f.weights[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.value - (40.0 * 2.0 + 60.0) / 3.0).abs() < 1e-12);
        assert_eq!(fuse(&[(42.0, 3.0)]).unwrap().weights, vec![1.0]);
        assert_eq!(fuse(&[(40.0, 2.0), (60.0, 2.0)]).unwrap().value, 50.0);
        let z = fuse(&[(40.0, 0.0), (60.0, 1.0), (50.0, 0.0)]).unwrap();
        assert_eq!(z.weights, vec![0.5, 0.0, 0.5]);
        assert_eq!(z.value, 45.0);
        assert!(fuse(&[]).is_err());
        assert!(fuse(&[(1.0, -1.0)]).is_err());
    }
}
