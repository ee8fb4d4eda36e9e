use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{invalid, KnowledgeError, Result};

/// Closed interval on one dimension; a missing bound is unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// Normalising span for distances. Defaults to `max - min` when both
    /// bounds are present and differ, otherwise 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<f64>,
}

impl Interval {
    pub fn new(min: Option<f64>, max: Option<f64>) -> Self {
        Self {
            min,
            max,
            span: None,
        }
    }

    pub fn with_span(mut self, span: f64) -> Self {
        self.span = Some(span);
        self
    }

    pub fn span(&self) -> f64 {
        self.span.unwrap_or(match (self.min, self.max) {
            (Some(a), Some(b)) if b > a => b - a,
            _ => 1.0,
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min.is_none_or(|a| x >= a) && self.max.is_none_or(|b| x <= b)
    }

    /// How far `x` lies outside the interval, in units of the span.
    pub fn shortfall(&self, x: f64) -> f64 {
        let below = self.min.map_or(0.0, |a| a - x);
        let above = self.max.map_or(0.0, |b| x - b);
        below.max(above).max(0.0) / self.span()
    }
}

/// Axis-aligned box in utility-dimension space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub label: String,
    pub bounds: BTreeMap<String, Interval>,
    #[serde(default)]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

impl RegionOfInterest {
    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(invalid("region", &self.label, "no bounds".into()));
        }
        for (d, iv) in &self.bounds {
            let finite = |v: Option<f64>| v.is_none_or(|x| !x.is_nan());
            if !finite(iv.min) || !finite(iv.max) {
                return Err(invalid(
                    "region",
                    &self.label,
                    format!("NaN bound on `{d}`"),
                ));
            }
            if let (Some(a), Some(b)) = (iv.min, iv.max) {
                if a > b {
                    return Err(invalid(
                        "region",
                        &self.label,
                        format!("min {a} > max {b} on `{d}`"),
                    ));
                }
            }
            if !(iv.span() > 0.0 && iv.span().is_finite()) {
                return Err(invalid(
                    "region",
                    &self.label,
                    format!("span on `{d}` must be positive"),
                ));
            }
        }
        Ok(())
    }

    fn coords<'a>(&'a self, state: &'a BTreeMap<String, f64>) -> Result<Vec<(&'a Interval, f64)>> {
        self.bounds
            .iter()
            .map(|(d, iv)| {
                state
                    .get(d)
                    .map(|x| (iv, *x))
                    .ok_or_else(|| KnowledgeError::MissingDimension(d.clone()))
            })
            .collect()
    }
}

/// Whether every bounded coordinate of `state` lies in the region.
pub fn region_membership(state: &BTreeMap<String, f64>, roi: &RegionOfInterest) -> Result<bool> {
    Ok(roi.coords(state)?.iter().all(|(iv, x)| iv.contains(*x)))
}

/// Largest span-normalised shortfall over the region's dimensions; 0 for
/// members.
pub fn distance_to_region(state: &BTreeMap<String, f64>, roi: &RegionOfInterest) -> Result<f64> {
    Ok(roi
        .coords(state)?
        .iter()
        .map(|(iv, x)| iv.shortfall(*x))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_box() {
        let roi = RegionOfInterest {
            label: "box".into(),
            bounds: BTreeMap::from([("x".into(), Interval::new(Some(0.0), Some(1.0)))]),
            attributes: BTreeMap::new(),
        };
        let s = |x: f64| BTreeMap::from([("x".to_string(), x)]);
        assert!(region_membership(&s(0.5), &roi).unwrap());
        assert_eq!(distance_to_region(&s(0.5), &roi).unwrap(), 0.0);
        assert_eq!(distance_to_region(&s(1.5), &roi).unwrap(), 0.5);
        assert!(!region_membership(&s(1.5), &roi).unwrap());
        assert!(matches!(
            distance_to_region(&BTreeMap::new(), &roi),
            Err(KnowledgeError::MissingDimension(d)) if d == "x"
        ));
    }
}
