//! Interface-event rules: a small logic language over data streams and
//! events, evaluated on a 1 Hz grid.
//!
//! ```
//! use hse_core::ievent::parse_rule;
//! let rule = parse_rule("PressOverload := detect-spike(HR) ∨ (Power > 400 W)").unwrap();
//! assert_eq!(rule.annotations.len(), 1);
//! ```

mod ast;
mod detectors;
mod eval;
mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::personicle::{Personicle, StreamSeries, Timestamp};

pub use ast::{Annotation, DetectorKind, Expr, RelOp, Rule, RuleSource};
pub use detectors::{climb_grid, detect_climb, detect_spike, spike_grid};
pub use eval::{evaluate_rule, evaluate_rules, evaluate_truth, runs_to_events};
pub use parser::{parse_rule, parse_rule_file, parse_rule_source, parse_rule_with, ParseOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseErrorKind {
    Syntax,
    UnknownDetector,
    UnknownStream,
    Parameter,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnknownDetector => "unknown detector",
            ParseErrorKind::UnknownStream => "unknown stream",
            ParseErrorKind::Parameter => "parameter error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("stream `{0}` referenced by the rule is not available")]
    MissingStream(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("invalid window [{0}, {1}]")]
    InvalidWindow(Timestamp, Timestamp),
}

/// A detected rule firing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceEvent {
    pub rule_name: String,
    pub start: Timestamp,
    /// Exclusive: one second past the last true instant.
    pub end: Timestamp,
    pub attributes: BTreeMap<String, f64>,
}

impl InterfaceEvent {
    pub fn duration_s(&self) -> i64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Shortest run, in seconds, that becomes an interface event.
    pub min_duration_s: i64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { min_duration_s: 5 }
    }
}

/// Per-second truth values starting at `t0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolSeries {
    pub t0: Timestamp,
    pub values: Vec<bool>,
}

impl BoolSeries {
    pub fn at(&self, t: Timestamp) -> Option<bool> {
        let k = t.checked_sub(self.t0)?;
        usize::try_from(k)
            .ok()
            .and_then(|k| self.values.get(k).copied())
    }

    pub fn count_true(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

/// Resolves stream identifiers used in rules.
pub trait StreamLookup {
    fn lookup(&self, name: &str) -> Option<&StreamSeries>;
}

impl StreamLookup for BTreeMap<String, StreamSeries> {
    /// Exact match first, then ASCII case-insensitive.
    fn lookup(&self, name: &str) -> Option<&StreamSeries> {
        self.get(name).or_else(|| {
            self.iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(name))
                .map(|(_, v)| v)
        })
    }
}

impl StreamLookup for [StreamSeries] {
    fn lookup(&self, name: &str) -> Option<&StreamSeries> {
        self.iter()
            .find(|s| s.stream_id == name)
            .or_else(|| self.iter().find(|s| s.stream_id.eq_ignore_ascii_case(name)))
    }
}

impl StreamLookup for Vec<StreamSeries> {
    fn lookup(&self, name: &str) -> Option<&StreamSeries> {
        self.as_slice().lookup(name)
    }
}

impl StreamLookup for Personicle {
    fn lookup(&self, name: &str) -> Option<&StreamSeries> {
        self.streams.lookup(name)
    }
}
