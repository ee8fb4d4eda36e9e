use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Eq => "==",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    Spike,
    Climb,
}

impl DetectorKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "detect-spike" => Some(Self::Spike),
            "detect-climb" => Some(Self::Climb),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Spike => "detect-spike",
            Self::Climb => "detect-climb",
        }
    }

    /// Accepted parameter names with their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::Spike => &[("window_s", 10.0), ("delta", 15.0)],
            Self::Climb => &[("gain_m", 8.0), ("window_s", 60.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Or(Vec<Expr>),
    And(Vec<Expr>),
    Not(Box<Expr>),
    Compare {
        stream: String,
        op: RelOp,
        value: f64,
    },
    Detector {
        kind: DetectorKind,
        stream: String,
        /// Parameters as written, in order. Missing ones take the defaults.
        params: Vec<(String, f64)>,
    },
    EventPredicate(String),
}

impl Expr {
    pub fn param(kind: DetectorKind, params: &[(String, f64)], name: &str) -> f64 {
        params
            .iter()
            .rev()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
            .or_else(|| {
                kind.defaults()
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
            })
            .unwrap_or(f64::NAN)
    }

    /// Every stream referenced by a comparison or detector, in first-use order.
    pub fn streams(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| match e {
            Expr::Compare { stream, .. } | Expr::Detector { stream, .. }
                if !out.contains(&stream.as_str()) =>
            {
                out.push(stream.as_str());
            }
            _ => {}
        });
        out
    }

    /// Streams referenced by comparisons only, in first-use order.
    pub fn compare_streams(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Compare { stream, .. } = e {
                if !out.contains(&stream.as_str()) {
                    out.push(stream.as_str());
                }
            }
        });
        out
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Or(xs) | Expr::And(xs) => xs.iter().for_each(|x| x.visit(f)),
            Expr::Not(x) => x.visit(f),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A parsed interface-event rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub expr: Expr,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

/// Raw rule text with a label used in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSource {
    pub name: String,
    pub body: String,
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parent_is_or: bool) -> fmt::Result {
    let needs_parens = match child {
        Expr::Or(_) => true,
        Expr::And(_) => !parent_is_or,
        _ => false,
    };
    if needs_parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Or(xs) | Expr::And(xs) => {
                let is_or = matches!(self, Expr::Or(_));
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(if is_or { " ∨ " } else { " ∧ " })?;
                    }
                    write_child(f, x, is_or)?;
                }
                Ok(())
            }
            Expr::Not(x) => match x.as_ref() {
                Expr::Or(_) | Expr::And(_) | Expr::Not(_) => write!(f, "¬({x})"),
                _ => write!(f, "¬{x}"),
            },
            Expr::Compare { stream, op, value } => write!(f, "{stream} {} {value}", op.symbol()),
            Expr::Detector {
                kind,
                stream,
                params,
            } => {
                write!(f, "{}({stream}", kind.name())?;
                for (k, v) in params {
                    write!(f, ", {k}={v}")?;
                }
                f.write_str(")")
            }
            Expr::EventPredicate(name) => f.write_str(name),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.name, self.expr)
    }
}
