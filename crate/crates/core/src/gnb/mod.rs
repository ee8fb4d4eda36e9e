//! Graph network blocks: nested directed multigraphs whose nodes carry
//! named numeric attributes and whose edges transform and propagate them.
//!
//! Attributes are addressed by paths of the form `node:attr`, with nested
//! blocks reached through their host node, e.g. `heart/akt1:activation`.

mod physio;
mod update;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use physio::{
    estimate_vo2max_from_power, gene_balance, resting_cardiac_output, stroke_volume, GeneBalance,
    PhysioConstants, HEALTHY_GENE_TAG, PATHOLOGICAL_GENE_TAG,
};
pub use update::{apply_time_decay, update_block, update_block_with, UpdateOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnbError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("malformed attribute path `{0}` (expected `node:attr`)")]
    InvalidPath(String),
    #[error("invalid block `{block}`: {message}")]
    Invalid { block: String, message: String },
    #[error("invalid propagation order: {0}")]
    InvalidOrder(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, GnbError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    EventInterface,
    Molecular,
    Tissue,
    Organ,
    System,
    Utility,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::EventInterface => "event-interface",
            Layer::Molecular => "molecular",
            Layer::Tissue => "tissue",
            Layer::Organ => "organ",
            Layer::System => "system",
            Layer::Utility => "utility",
        })
    }
}

/// How an edge turns source attributes into a contribution to its target.
/// Every contribution is finally multiplied by `sign * weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    Copy,
    Linear {
        a: f64,
        b: f64,
    },
    /// `src[source_attr] * src[other_attr]`
    Product {
        other_attr: String,
    },
    /// `scale * src[source_attr] / src[denominator_attr]`
    Quotient {
        denominator_attr: String,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `Σ w * src[attr]` over the listed source attributes.
    WeightedSum {
        terms: BTreeMap<String, f64>,
    },
    /// Contributes `src[source_attr]`; the target is clamped to `[0, 1]`
    /// after adding its baseline.
    SignedActivation,
    /// Self-edge marking an attribute that relaxes toward its baseline
    /// with the node's time constant. Only acts during the time step.
    DecayToBaseline,
}

fn one() -> f64 {
    1.0
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Copy => "copy",
            Transform::Linear { .. } => "linear",
            Transform::Product { .. } => "product",
            Transform::Quotient { .. } => "quotient",
            Transform::WeightedSum { .. } => "weighted-sum",
            Transform::SignedActivation => "signed-activation",
            Transform::DecayToBaseline => "decay-to-baseline",
        }
    }

    /// Whether every numeric parameter is finite.
    pub fn is_finite(&self) -> bool {
        match self {
            Transform::Linear { a, b } => a.is_finite() && b.is_finite(),
            Transform::Quotient { scale, .. } => scale.is_finite(),
            Transform::WeightedSum { terms } => terms.values().all(|w| w.is_finite()),
            _ => true,
        }
    }

    /// Source attributes the transform reads.
    pub fn reads<'a>(&'a self, source_attr: &'a str) -> Vec<&'a str> {
        match self {
            Transform::Product { other_attr } => vec![source_attr, other_attr],
            Transform::Quotient {
                denominator_attr, ..
            } => vec![source_attr, denominator_attr],
            Transform::WeightedSum { terms } => terms.keys().map(String::as_str).collect(),
            Transform::DecayToBaseline => Vec::new(),
            _ => vec![source_attr],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: String,
    pub source: String,
    pub target: String,
    pub source_attr: String,
    pub target_attr: String,
    pub transform: Transform,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default = "positive")]
    pub sign: i8,
    #[serde(default)]
    pub provenance: Vec<String>,
}

fn positive() -> i8 {
    1
}

impl GraphEdge {
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        source_attr: impl Into<String>,
        target: impl Into<String>,
        target_attr: impl Into<String>,
        transform: Transform,
    ) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            target: target.into(),
            source_attr: source_attr.into(),
            target_attr: target_attr.into(),
            transform,
            weight: 1.0,
            sign: 1,
            provenance: Vec::new(),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_sign(mut self, sign: i8) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_provenance(mut self, citation: impl Into<String>) -> Self {
        self.provenance.push(citation.into());
        self
    }

    pub fn is_decay(&self) -> bool {
        matches!(self.transform, Transform::DecayToBaseline)
    }
}

/// A block nested inside a host node. Imports copy host attributes into
/// the nested block before it updates; afterwards every global of the
/// nested block is copied back onto the host attribute of the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedBlock {
    #[serde(default)]
    pub imports: Vec<Import>,
    pub block: GraphBlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Import {
    pub host_attr: String,
    pub node: String,
    pub attr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub layer: Layer,
    #[serde(default)]
    pub attributes: BTreeMap<String, f64>,
    #[serde(default)]
    pub baseline: BTreeMap<String, f64>,
    #[serde(default)]
    pub tau_days: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub units: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested: Option<Box<NestedBlock>>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

impl GraphNode {
    pub fn new(id: impl Into<String>, layer: Layer) -> Self {
        Self {
            id: id.into(),
            layer,
            attributes: BTreeMap::new(),
            baseline: BTreeMap::new(),
            tau_days: BTreeMap::new(),
            units: BTreeMap::new(),
            nested: None,
            tags: BTreeSet::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: f64) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }

    pub fn with_baseline(mut self, name: impl Into<String>, value: f64) -> Self {
        self.baseline.insert(name.into(), value);
        self
    }

    pub fn with_tau(mut self, name: impl Into<String>, tau_days: f64) -> Self {
        self.tau_days.insert(name.into(), tau_days);
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.insert(tag.into());
        self
    }

    pub fn attr(&self, name: &str) -> Option<f64> {
        self.attributes.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reducer {
    Sum,
    Mean,
    Min,
    Max,
    WeightedSum { weights: BTreeMap<String, f64> },
}

/// Selects one attribute on a set of nodes: the listed ids if any,
/// otherwise every node matching the tag and layer filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    #[serde(default)]
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<Layer>,
    pub attr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReducer {
    pub selector: Selector,
    pub reducer: Reducer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinKind {
    Event,
    Biology,
    Utility,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pin {
    pub value: f64,
    pub kind: PinKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockFlags {
    /// Attribute keys of strongly connected components that did not
    /// converge in the last update.
    #[serde(default)]
    pub non_converged: BTreeSet<String>,
    /// Attributes pinned during the last update, with their priority.
    #[serde(default)]
    pub last_pinned: BTreeMap<String, PinKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBlock {
    pub id: String,
    #[serde(default)]
    pub nodes: Vec<GraphNode>,
    #[serde(default)]
    pub edges: Vec<GraphEdge>,
    #[serde(default)]
    pub global_reducers: BTreeMap<String, GlobalReducer>,
    #[serde(default)]
    pub globals: BTreeMap<String, f64>,
    /// Observations and inputs pinned for the next update.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pins: BTreeMap<String, Pin>,
    #[serde(default)]
    pub flags: BlockFlags,
}

/// A parsed attribute path: host nodes leading to a nested block, then the
/// node and attribute inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrPath {
    pub hosts: Vec<String>,
    pub node: String,
    pub attr: String,
}

impl AttrPath {
    pub fn parse(path: &str) -> Result<Self> {
        let (nodes, attr) = path
            .rsplit_once(':')
            .ok_or_else(|| GnbError::InvalidPath(path.to_string()))?;
        let mut parts: Vec<String> = nodes.split('/').map(str::to_string).collect();
        if attr.is_empty() || parts.iter().any(String::is_empty) {
            return Err(GnbError::InvalidPath(path.to_string()));
        }
        let node = parts.pop().expect("split yields at least one part");
        Ok(Self {
            hosts: parts,
            node,
            attr: attr.to_string(),
        })
    }

    /// The path relative to the first host's nested block.
    fn strip_host(&self) -> Option<(&str, AttrPath)> {
        let (first, rest) = self.hosts.split_first()?;
        Some((
            first.as_str(),
            AttrPath {
                hosts: rest.to_vec(),
                node: self.node.clone(),
                attr: self.attr.clone(),
            },
        ))
    }
}

impl fmt::Display for AttrPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in &self.hosts {
            write!(f, "{h}/")?;
        }
        write!(f, "{}:{}", self.node, self.attr)
    }
}

pub(crate) fn key(node: &str, attr: &str) -> String {
    format!("{node}:{attr}")
}

impl GraphBlock {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
            global_reducers: BTreeMap::new(),
            globals: BTreeMap::new(),
            pins: BTreeMap::new(),
            flags: BlockFlags::default(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut GraphNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&GraphEdge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn edge_mut(&mut self, id: &str) -> Option<&mut GraphEdge> {
        self.edges.iter_mut().find(|e| e.id == id)
    }

    fn nested(&self, host: &str) -> Result<&GraphBlock> {
        let node = self
            .node(host)
            .ok_or_else(|| GnbError::UnknownNode(host.to_string()))?;
        node.nested
            .as_ref()
            .map(|n| &n.block)
            .ok_or_else(|| GnbError::UnknownNode(format!("{host}/ (no nested block)")))
    }

    fn nested_mut(&mut self, host: &str) -> Result<&mut GraphBlock> {
        let node = self
            .node_mut(host)
            .ok_or_else(|| GnbError::UnknownNode(host.to_string()))?;
        node.nested
            .as_mut()
            .map(|n| &mut n.block)
            .ok_or_else(|| GnbError::UnknownNode(format!("{host}/ (no nested block)")))
    }

    /// Reads an attribute by path, descending into nested blocks.
    pub fn get(&self, path: &str) -> Result<f64> {
        self.get_path(&AttrPath::parse(path)?)
            .map_err(|_| GnbError::UnknownAttribute(path.to_string()))
    }

    fn get_path(&self, p: &AttrPath) -> Result<f64> {
        if let Some((host, rest)) = p.strip_host() {
            return self.nested(host)?.get_path(&rest);
        }
        self.node(&p.node)
            .ok_or_else(|| GnbError::UnknownNode(p.node.clone()))?
            .attr(&p.attr)
            .ok_or_else(|| GnbError::UnknownAttribute(p.to_string()))
    }

    /// Writes an attribute by path without pinning it.
    pub fn set(&mut self, path: &str, value: f64) -> Result<()> {
        let p = AttrPath::parse(path)?;
        let slot = self.slot_mut(&p)?;
        *slot = value;
        Ok(())
    }

    fn slot_mut(&mut self, p: &AttrPath) -> Result<&mut f64> {
        if let Some((host, rest)) = p.strip_host() {
            return self.nested_mut(host)?.slot_mut(&rest);
        }
        self.node_mut(&p.node)
            .ok_or_else(|| GnbError::UnknownNode(p.node.clone()))?
            .attributes
            .get_mut(&p.attr)
            .ok_or_else(|| GnbError::UnknownAttribute(p.to_string()))
    }

    /// Pins an observed value for the next update. A pin never replaces one
    /// of higher priority; at equal priority the last write wins.
    pub fn set_observation(&mut self, path: &str, value: f64, kind: PinKind) -> Result<()> {
        let p = AttrPath::parse(path)?;
        self.pin_path(&p, value, kind)
    }

    pub(crate) fn pin_path(&mut self, p: &AttrPath, value: f64, kind: PinKind) -> Result<()> {
        if !value.is_finite() {
            return Err(GnbError::Parameter(format!("non-finite value for `{p}`")));
        }
        if let Some((host, rest)) = p.strip_host() {
            return self.nested_mut(host)?.pin_path(&rest, value, kind);
        }
        let exists = self.node(&p.node).and_then(|n| n.attr(&p.attr)).is_some();
        if !exists {
            return Err(GnbError::UnknownAttribute(p.to_string()));
        }
        let k = key(&p.node, &p.attr);
        match self.pins.get(&k) {
            Some(prev) if prev.kind > kind => {
                tracing::debug!(attr = %k, ?kind, kept = ?prev.kind, "lower-priority pin ignored");
            }
            Some(prev) => {
                tracing::debug!(attr = %k, old = prev.value, new = value, "pin overwritten");
                self.pins.insert(k, Pin { value, kind });
            }
            None => {
                self.pins.insert(k, Pin { value, kind });
            }
        }
        Ok(())
    }

    /// Checks structural invariants, recursing into nested blocks.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| GnbError::Invalid {
            block: self.id.clone(),
            message,
        };
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(invalid(format!("duplicate node `{}`", n.id)));
            }
            if n.id.contains(':') || n.id.contains('/') {
                return Err(invalid(format!(
                    "node id `{}` may not contain `:` or `/`",
                    n.id
                )));
            }
            for name in n.baseline.keys().chain(n.tau_days.keys()) {
                if !n.attributes.contains_key(name) {
                    return Err(invalid(format!(
                        "node `{}` has baseline/tau for missing attribute `{name}`",
                        n.id
                    )));
                }
            }
            if let Some((name, tau)) = n.tau_days.iter().find(|(_, t)| !(**t > 0.0)) {
                return Err(invalid(format!(
                    "node `{}` attribute `{name}` has non-positive tau {tau}",
                    n.id
                )));
            }
            if let Some((name, _)) = n.attributes.iter().find(|(_, v)| !v.is_finite()) {
                return Err(invalid(format!(
                    "node `{}` attribute `{name}` is not finite",
                    n.id
                )));
            }
            if let Some(nested) = &n.nested {
                nested.block.validate()?;
                for imp in &nested.imports {
                    if n.attr(&imp.host_attr).is_none() {
                        return Err(invalid(format!(
                            "node `{}` imports missing host attribute `{}`",
                            n.id, imp.host_attr
                        )));
                    }
                    if nested
                        .block
                        .node(&imp.node)
                        .and_then(|x| x.attr(&imp.attr))
                        .is_none()
                    {
                        return Err(invalid(format!(
                            "node `{}` imports into missing `{}:{}`",
                            n.id, imp.node, imp.attr
                        )));
                    }
                }
                for g in nested.block.global_reducers.keys() {
                    if !n.attributes.contains_key(g) {
                        return Err(invalid(format!(
                            "node `{}` lacks attribute `{g}` exported by its nested block",
                            n.id
                        )));
                    }
                }
            }
        }
        let mut edge_ids = BTreeSet::new();
        for e in &self.edges {
            if !edge_ids.insert(e.id.as_str()) {
                return Err(invalid(format!("duplicate edge `{}`", e.id)));
            }
            if !e.weight.is_finite() {
                return Err(invalid(format!("edge `{}` has a non-finite weight", e.id)));
            }
            if e.sign != 1 && e.sign != -1 {
                return Err(invalid(format!("edge `{}` sign must be +1 or -1", e.id)));
            }
            let src = self
                .node(&e.source)
                .ok_or_else(|| invalid(format!("edge `{}` source `{}` missing", e.id, e.source)))?;
            let tgt = self
                .node(&e.target)
                .ok_or_else(|| invalid(format!("edge `{}` target `{}` missing", e.id, e.target)))?;
            if tgt.attr(&e.target_attr).is_none() {
                return Err(invalid(format!(
                    "edge `{}` targets missing attribute `{}:{}`",
                    e.id, e.target, e.target_attr
                )));
            }
            for a in e.transform.reads(&e.source_attr) {
                if src.attr(a).is_none() {
                    return Err(invalid(format!(
                        "edge `{}` reads missing attribute `{}:{a}`",
                        e.id, e.source
                    )));
                }
            }
            if e.is_decay()
                && (e.source != e.target
                    || e.source_attr != e.target_attr
                    || !tgt.tau_days.contains_key(&e.target_attr))
            {
                return Err(invalid(format!(
                    "decay edge `{}` must be a self-edge on an attribute with a time constant",
                    e.id
                )));
            }
            if let Some(nested) = &tgt.nested {
                if nested.block.global_reducers.contains_key(&e.target_attr) && !e.is_decay() {
                    return Err(invalid(format!(
                        "edge `{}` targets `{}:{}`, which is exported by the nested block",
                        e.id, e.target, e.target_attr
                    )));
                }
            }
        }
        for (name, g) in &self.global_reducers {
            if self.select(&g.selector).is_empty() {
                return Err(invalid(format!("global `{name}` selects no attribute")));
            }
        }
        Ok(())
    }

    /// Nodes chosen by a selector that carry its attribute, in block order.
    pub fn select(&self, s: &Selector) -> Vec<&GraphNode> {
        self.nodes
            .iter()
            .filter(|n| {
                if !s.nodes.is_empty() {
                    return s.nodes.contains(&n.id);
                }
                s.tag.as_ref().is_none_or(|t| n.tags.contains(t))
                    && s.layer.is_none_or(|l| n.layer == l)
            })
            .filter(|n| n.attributes.contains_key(&s.attr))
            .collect()
    }

    /// Recomputes every global from current node attributes.
    pub fn recompute_globals(&mut self) {
        let mut out = BTreeMap::new();
        for (name, g) in &self.global_reducers {
            let picked = self.select(&g.selector);
            let values = picked.iter().map(|n| n.attributes[&g.selector.attr]);
            let v = match &g.reducer {
                Reducer::Sum => values.sum(),
                Reducer::Mean => {
                    let n = picked.len().max(1) as f64;
                    values.sum::<f64>() / n
                }
                Reducer::Min => values.fold(f64::INFINITY, f64::min),
                Reducer::Max => values.fold(f64::NEG_INFINITY, f64::max),
                Reducer::WeightedSum { weights } => picked
                    .iter()
                    .map(|n| {
                        weights.get(&n.id).copied().unwrap_or(0.0) * n.attributes[&g.selector.attr]
                    })
                    .sum(),
            };
            out.insert(name.clone(), if v.is_finite() { v } else { 0.0 });
        }
        self.globals = out;
    }

    /// Every attribute as `path -> value`, including nested blocks.
    pub fn flatten(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        self.flatten_into("", &mut out);
        out
    }

    fn flatten_into(&self, prefix: &str, out: &mut BTreeMap<String, f64>) {
        for n in &self.nodes {
            for (a, v) in &n.attributes {
                out.insert(format!("{prefix}{}:{a}", n.id), *v);
            }
            if let Some(nested) = &n.nested {
                nested
                    .block
                    .flatten_into(&format!("{prefix}{}/", n.id), out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_parsing() {
        let p = AttrPath::parse("heart/akt1:activation").unwrap();
        assert_eq!(p.hosts, vec!["heart"]);
        assert_eq!((p.node.as_str(), p.attr.as_str()), ("akt1", "activation"));
        assert_eq!(p.to_string(), "heart/akt1:activation");
        assert!(AttrPath::parse("heart").is_err());
        assert!(AttrPath::parse("heart/:x").is_err());
        assert!(AttrPath::parse("a:").is_err());
    }

    #[test]
    fn validation_catches_dangling_edges() {
        let mut b = GraphBlock::new("b");
        b.nodes
            .push(GraphNode::new("a", Layer::Organ).with_attr("x", 1.0));
        b.edges
            .push(GraphEdge::new("e", "a", "x", "zz", "x", Transform::Copy));
        assert!(b.validate().is_err());
        b.edges[0].target = "a".into();
        b.edges[0].target_attr = "y".into();
        assert!(b.validate().is_err());
        b.nodes[0].attributes.insert("y".into(), 0.0);
        assert!(b.validate().is_ok());
        b.edges[0].sign = 0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn pin_priority() {
        let mut b = GraphBlock::new("b");
        b.nodes
            .push(GraphNode::new("a", Layer::Organ).with_attr("x", 1.0));
        b.set_observation("a:x", 5.0, PinKind::Utility).unwrap();
        b.set_observation("a:x", 6.0, PinKind::Biology).unwrap();
        assert_eq!(b.pins["a:x"].value, 5.0);
        b.set_observation("a:x", 7.0, PinKind::Utility).unwrap();
        assert_eq!(b.pins["a:x"].value, 7.0);
        assert!(matches!(
            b.set_observation("a:nope", 1.0, PinKind::Event),
            Err(GnbError::UnknownAttribute(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let mut b = GraphBlock::new("b");
        b.nodes.push(
            GraphNode::new("a", Layer::Organ)
                .with_attr("x", 1.0)
                .with_tag("t"),
        );
        b.edges.push(
            GraphEdge::new(
                "e",
                "a",
                "x",
                "a",
                "x",
                Transform::Linear { a: 2.0, b: 1.0 },
            )
            .with_sign(-1)
            .with_provenance("textbook"),
        );
        let text = serde_json::to_string(&b).unwrap();
        let back: GraphBlock = serde_json::from_str(&text).unwrap();
        assert_eq!(back, b);
    }
}
