use serde::{Deserialize, Serialize};

use super::{GnbError, GraphBlock, Result};

pub const HEALTHY_GENE_TAG: &str = "healthy-gene";
pub const PATHOLOGICAL_GENE_TAG: &str = "pathological-gene";
const ACTIVATION: &str = "activation";

/// Knowledge constants for the cardiac and aerobic relationships.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysioConstants {
    /// Resting cardiac output per kg of body mass, L/min/kg.
    pub co_per_kg: f64,
    /// VO2max slope on 4-minute power per kg.
    pub vo2_slope: f64,
    /// VO2max intercept, mL/kg/min.
    pub vo2_intercept: f64,
}

impl Default for PhysioConstants {
    fn default() -> Self {
        Self {
            co_per_kg: 0.070,
            vo2_slope: 10.8,
            vo2_intercept: 7.0,
        }
    }
}

impl PhysioConstants {
    pub fn vo2max_from_power(&self, cp4_w: f64, mass_kg: f64) -> Result<f64> {
        if !(mass_kg > 0.0) {
            return Err(GnbError::Parameter(format!(
                "mass must be > 0 kg, got {mass_kg}"
            )));
        }
        if !(cp4_w >= 0.0) {
            return Err(GnbError::Parameter(format!(
                "power must be >= 0 W, got {cp4_w}"
            )));
        }
        Ok(self.vo2_slope * cp4_w / mass_kg + self.vo2_intercept)
    }

    pub fn resting_cardiac_output(&self, mass_kg: f64) -> Result<f64> {
        if !(mass_kg > 0.0) {
            return Err(GnbError::Parameter(format!(
                "mass must be > 0 kg, got {mass_kg}"
            )));
        }
        Ok(self.co_per_kg * mass_kg)
    }
}

/// VO2max (mL/kg/min) from best 4-minute power with the default constants.
pub fn estimate_vo2max_from_power(cp4_w: f64, mass_kg: f64) -> Result<f64> {
    PhysioConstants::default().vo2max_from_power(cp4_w, mass_kg)
}

/// Resting cardiac output (L/min) with the default constant.
pub fn resting_cardiac_output(mass_kg: f64) -> Result<f64> {
    PhysioConstants::default().resting_cardiac_output(mass_kg)
}

/// Stroke volume in mL from cardiac output (L/min) and heart rate.
pub fn stroke_volume(co_l_min: f64, hr_bpm: f64) -> Result<f64> {
    if !(hr_bpm > 0.0) {
        return Err(GnbError::Parameter(format!(
            "heart rate must be > 0, got {hr_bpm}"
        )));
    }
    if !(co_l_min > 0.0) {
        return Err(GnbError::Parameter(format!(
            "cardiac output must be > 0, got {co_l_min}"
        )));
    }
    Ok(1000.0 * co_l_min / hr_bpm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneBalance {
    pub healthy: f64,
    pub pathological: f64,
    pub net: f64,
}

/// Sums `activation` over healthy- and pathological-tagged nodes, nested
/// blocks included.
pub fn gene_balance(block: &GraphBlock) -> GeneBalance {
    let (mut healthy, mut pathological, mut tagged) = (0.0, 0.0, 0usize);
    collect(block, &mut healthy, &mut pathological, &mut tagged);
    if tagged == 0 {
        tracing::warn!(block = %block.id, "no tagged gene nodes; balance is empty");
    }
    GeneBalance {
        healthy,
        pathological,
        net: healthy - pathological,
    }
}

fn collect(block: &GraphBlock, healthy: &mut f64, pathological: &mut f64, tagged: &mut usize) {
    for n in &block.nodes {
        let a = n.attr(ACTIVATION).unwrap_or(0.0);
        if n.tags.contains(HEALTHY_GENE_TAG) {
            *healthy += a;
            *tagged += 1;
        }
        if n.tags.contains(PATHOLOGICAL_GENE_TAG) {
            *pathological += a;
            *tagged += 1;
        }
        if let Some(nested) = &n.nested {
            collect(&nested.block, healthy, pathological, tagged);
        }
    }
}
