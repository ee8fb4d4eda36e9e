use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_linear, LearnError, LinearModel, Result};
use crate::gnb::{update_block, GraphBlock, Transform};
use crate::knowledge::{apply_patch, EdgeSelector, KnowledgePatch, PatchOp, PatchReceipt};
use crate::loadmetrics::aerobic_decoupling;
use crate::personicle::{StreamSeries, Timestamp};

pub const DEFAULT_AD_GATE_PCT: f64 = 5.0;
pub const HR_POWER_EDGE: &str = "hr->power";

/// Heart-rate and power streams of one activity.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityStreams {
    pub id: String,
    pub start: Timestamp,
    pub hr: StreamSeries,
    pub power: StreamSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelFitConfig {
    /// Activities whose absolute aerobic decoupling exceeds this are
    /// left out of the fit.
    pub ad_gate_pct: f64,
    pub window_days: i64,
    pub min_activities: usize,
}

impl Default for ParallelFitConfig {
    fn default() -> Self {
        Self {
            ad_gate_pct: DEFAULT_AD_GATE_PCT,
            window_days: 30,
            min_activities: 2,
        }
    }
}

/// Gate decision for one activity. `ad_pct` is absent when decoupling
/// could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub activity: String,
    pub ad_pct: Option<f64>,
    pub accepted: bool,
    pub reason: String,
}

/// Outcome of a parallel-observation fit; `model` is absent when too few
/// activities passed the gate, in which case the edge stays as it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelFit {
    pub model: Option<LinearModel>,
    pub gates: Vec<GateResult>,
}

impl ParallelFit {
    pub fn accepted(&self) -> impl Iterator<Item = &GateResult> {
        self.gates.iter().filter(|g| g.accepted)
    }
}

fn gate(a: &ActivityStreams, cfg: &ParallelFitConfig) -> GateResult {
    let (ad_pct, accepted, reason) = match aerobic_decoupling(&a.power, &a.hr) {
        Ok(ad) if ad.abs() <= cfg.ad_gate_pct => {
            (Some(ad), true, format!("|AD| {:.1}% within gate", ad.abs()))
        }
        Ok(ad) => (
            Some(ad),
            false,
            format!("|AD| {:.1}% above {}% gate", ad.abs(), cfg.ad_gate_pct),
        ),
        Err(e) => (None, false, e.to_string()),
    };
    GateResult {
        activity: a.id.clone(),
        ad_pct,
        accepted,
        reason,
    }
}

/// Per-second `(hr, power)` pairs at instants where both are recorded and
/// heart rate is positive.
fn paired(a: &ActivityStreams) -> Vec<(f64, f64)> {
    let power: BTreeMap<Timestamp, f64> = a.power.samples.iter().map(|s| (s.t, s.value)).collect();
    a.hr.samples
        .iter()
        .filter(|s| s.value > 0.0)
        .filter_map(|s| power.get(&s.t).map(|&p| (s.value, p)))
        .collect()
}

/// Fits `power = a * hr + b` over the pooled samples of activities that
/// started in the trailing window ending at `as_of` and pass the aerobic
/// decoupling gate.
pub fn fit_parallel_edge(
    activities: &[ActivityStreams],
    as_of: Timestamp,
    cfg: &ParallelFitConfig,
) -> Result<ParallelFit> {
    if !(cfg.ad_gate_pct >= 0.0) || cfg.window_days < 1 || cfg.min_activities < 1 {
        return Err(LearnError::Parameter(format!(
            "bad parallel fit config {cfg:?}"
        )));
    }
    let from = as_of - cfg.window_days * 86_400;
    let mut recent: Vec<&ActivityStreams> = activities
        .iter()
        .filter(|a| a.start > from && a.start <= as_of)
        .collect();
    recent.sort_by(|x, y| x.start.cmp(&y.start).then_with(|| x.id.cmp(&y.id)));
    let gates: Vec<GateResult> = recent.par_iter().map(|a| gate(a, cfg)).collect();
    let accepted: BTreeSet<&str> = gates
        .iter()
        .filter(|g| g.accepted)
        .map(|g| g.activity.as_str())
        .collect();
    for g in &gates {
        tracing::debug!(activity = %g.activity, accepted = g.accepted, reason = %g.reason, "decoupling gate");
    }
    if accepted.len() < cfg.min_activities {
        tracing::warn!(
            accepted = accepted.len(),
            needed = cfg.min_activities,
            "too few qualifying activities; edge left unchanged"
        );
        return Ok(ParallelFit { model: None, gates });
    }
    let pooled: Vec<(f64, f64)> = recent
        .iter()
        .filter(|a| accepted.contains(a.id.as_str()))
        .flat_map(|a| paired(a))
        .collect();
    let model = fit_linear(&pooled)?;
    tracing::info!(
        slope = model.slope,
        intercept = model.intercept,
        rmse = model.train_rmse,
        samples = model.n,
        "fitted heart rate to power relationship"
    );
    Ok(ParallelFit {
        model: Some(model),
        gates,
    })
}

/// Knowledge patch writing a fitted model onto an edge as a linear
/// transform.
pub fn parallel_patch(model: &LinearModel, edge_id: &str) -> KnowledgePatch {
    KnowledgePatch {
        id: format!("learned-{edge_id}"),
        selector: EdgeSelector {
            edge_ids: vec![edge_id.to_string()],
            ..Default::default()
        },
        op: PatchOp::Transform(Transform::Linear {
            a: model.slope,
            b: model.intercept,
        }),
        provenance: format!(
            "least squares over {} paired samples, train rmse {:.4}",
            model.n, model.train_rmse
        ),
    }
}

/// Writes the fit onto `edge_id` and settles the block. Returns `None`
/// and leaves the block untouched when the fit produced no model.
pub fn apply_parallel_fit(
    block: &mut GraphBlock,
    fit: &ParallelFit,
    edge_id: &str,
) -> Result<Option<PatchReceipt>> {
    let Some(model) = &fit.model else {
        return Ok(None);
    };
    let receipt = apply_patch(block, &parallel_patch(model, edge_id))?;
    update_block(block, &BTreeMap::new(), 0.0)?;
    Ok(Some(receipt))
}
