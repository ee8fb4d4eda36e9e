//! Domain knowledge: laminae with regions of interest, utility node
//! templates, biological nodes and edges, genetic modifiers and patches,
//! and instantiation of a graph block from user intent.

mod instantiate;
mod roi;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnb::{GnbError, GraphBlock, GraphEdge, GraphNode, Transform};

pub use instantiate::{
    apply_modifiers, apply_patch, instantiate, instantiate_with, revert_patch, EdgePrior,
    InstantiateOptions, PatchReceipt,
};
pub use roi::{distance_to_region, region_membership, Interval, RegionOfInterest};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("cannot read knowledge file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("invalid {kind} `{id}`: {message}")]
    Invalid {
        kind: &'static str,
        id: String,
        message: String,
    },
    #[error("unresolvable dimensions: {}", .0.join(", "))]
    UnresolvedDimensions(Vec<String>),
    #[error("state is missing dimension `{0}`")]
    MissingDimension(String),
    #[error("patch `{0}` matches no edge")]
    EmptyPatch(String),
    #[error(transparent)]
    Graph(#[from] GnbError),
}

pub type Result<T> = std::result::Result<T, KnowledgeError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminaDefinition {
    pub name: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    pub dimensions: Vec<String>,
    #[serde(default)]
    pub regions: Vec<RegionOfInterest>,
}

impl LaminaDefinition {
    pub fn region(&self, label: &str) -> Option<&RegionOfInterest> {
        self.regions.iter().find(|r| r.label == label)
    }
}

/// The utility node standing for one lamina dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTemplate {
    pub dimension: String,
    pub node: GraphNode,
    /// Attribute holding the dimension's value.
    #[serde(default = "default_value_attr")]
    pub attr: String,
}

fn default_value_attr() -> String {
    "value".to_string()
}

impl UtilityTemplate {
    pub fn path(&self) -> String {
        format!("{}:{}", self.node.id, self.attr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePattern {
    pub source_tag: String,
    pub target_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneticModifier {
    pub gene: String,
    pub rsid: String,
    pub genotype: String,
    pub edge_pattern: EdgePattern,
    pub multiplier: f64,
}

/// Edges matching every given filter; `edge_ids`, when nonempty, must
/// also contain the edge.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSelector {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edge_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_tag: Option<String>,
}

impl EdgeSelector {
    pub fn is_empty(&self) -> bool {
        self.edge_ids.is_empty()
            && self.source.is_none()
            && self.target.is_none()
            && self.source_tag.is_none()
            && self.target_tag.is_none()
    }
}

/// Edit applied to each selected edge. `transform` replaces the edge's
/// transform and resets its weight to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchOp {
    Set(f64),
    Multiply(f64),
    Transform(Transform),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePatch {
    pub id: String,
    pub selector: EdgeSelector,
    pub op: PatchOp,
    pub provenance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    #[serde(default)]
    pub laminae: Vec<LaminaDefinition>,
    #[serde(default)]
    pub utility_templates: Vec<UtilityTemplate>,
    #[serde(default)]
    pub bio_nodes: Vec<GraphNode>,
    #[serde(default)]
    pub bio_edges: Vec<GraphEdge>,
    #[serde(default)]
    pub genetic_modifiers: Vec<GeneticModifier>,
    #[serde(default)]
    pub patches: Vec<KnowledgePatch>,
    /// Profile field name to the attribute paths it initialises.
    #[serde(default)]
    pub profile_bindings: BTreeMap<String, Vec<String>>,
}

/// Loads and validates a knowledge file.
pub fn load_knowledge(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_knowledge(&text)
}

/// Parses and validates knowledge JSON; blank text is an empty base.
pub fn parse_knowledge(text: &str) -> Result<KnowledgeBase> {
    if text.trim().is_empty() {
        return Ok(KnowledgeBase::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let base: KnowledgeBase =
        serde_path_to_error::deserialize(de).map_err(|e| KnowledgeError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    base.validate()?;
    Ok(base)
}

const PROFILE_FIELDS: [&str; 5] = ["mass_kg", "height_cm", "age_years", "hr_rest", "hr_max"];

fn unique<'a>(kind: &'static str, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(KnowledgeError::Duplicate {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

fn edges_recursive<'a>(
    edges: &'a [GraphEdge],
    nodes: &'a [GraphNode],
    out: &mut Vec<&'a GraphEdge>,
) {
    out.extend(edges);
    for n in nodes {
        if let Some(nested) = &n.nested {
            edges_recursive(&nested.block.edges, &nested.block.nodes, out);
        }
    }
}

impl KnowledgeBase {
    pub fn validate(&self) -> Result<()> {
        unique("lamina", self.laminae.iter().map(|l| l.name.as_str()))?;
        unique(
            "dimension",
            self.utility_templates.iter().map(|t| t.dimension.as_str()),
        )?;
        unique(
            "node",
            self.utility_templates
                .iter()
                .map(|t| t.node.id.as_str())
                .chain(self.bio_nodes.iter().map(|n| n.id.as_str())),
        )?;
        unique("edge", self.bio_edges.iter().map(|e| e.id.as_str()))?;
        unique("patch", self.patches.iter().map(|p| p.id.as_str()))?;

        for l in &self.laminae {
            l.validate()?;
        }
        for t in &self.utility_templates {
            if t.node.attr(&t.attr).is_none() {
                return Err(invalid(
                    "utility template",
                    &t.dimension,
                    format!("node lacks attribute `{}`", t.attr),
                ));
            }
        }
        for m in &self.genetic_modifiers {
            if !(m.multiplier > 0.0 && m.multiplier.is_finite()) {
                return Err(invalid(
                    "genetic modifier",
                    &m.rsid,
                    format!("multiplier must be > 0, got {}", m.multiplier),
                ));
            }
        }
        for p in &self.patches {
            p.validate()?;
        }
        let mut all = Vec::new();
        edges_recursive(&self.bio_edges, &self.bio_nodes, &mut all);
        if let Some(e) = all
            .iter()
            .find(|e| e.provenance.iter().all(|c| c.trim().is_empty()))
        {
            return Err(invalid("edge", &e.id, "missing provenance".into()));
        }
        for (field, paths) in &self.profile_bindings {
            if !PROFILE_FIELDS.contains(&field.as_str()) {
                return Err(invalid(
                    "profile binding",
                    field,
                    format!(
                        "unknown profile field (expected one of {})",
                        PROFILE_FIELDS.join(", ")
                    ),
                ));
            }
            if paths.is_empty() {
                return Err(invalid("profile binding", field, "no target paths".into()));
            }
        }
        // The whole graph must form a valid block.
        self.full_block().validate()?;
        Ok(())
    }

    pub fn lamina(&self, name: &str) -> Option<&LaminaDefinition> {
        self.laminae.iter().find(|l| l.name == name)
    }

    pub fn template(&self, dimension: &str) -> Option<&UtilityTemplate> {
        self.utility_templates
            .iter()
            .find(|t| t.dimension == dimension)
    }

    pub fn patch(&self, id: &str) -> Option<&KnowledgePatch> {
        self.patches.iter().find(|p| p.id == id)
    }

    /// Every node and edge in one block.
    pub(crate) fn full_block(&self) -> GraphBlock {
        let mut b = GraphBlock::new("knowledge");
        b.nodes
            .extend(self.utility_templates.iter().map(|t| t.node.clone()));
        b.nodes.extend(self.bio_nodes.iter().cloned());
        b.edges = self.bio_edges.clone();
        b
    }

    /// Node count including nodes of nested blocks.
    pub fn node_count(&self) -> usize {
        fn count(nodes: &[GraphNode]) -> usize {
            nodes
                .iter()
                .map(|n| 1 + n.nested.as_ref().map_or(0, |x| count(&x.block.nodes)))
                .sum()
        }
        self.utility_templates.len() + count(&self.bio_nodes)
    }
}

fn invalid(kind: &'static str, id: &str, message: String) -> KnowledgeError {
    KnowledgeError::Invalid {
        kind,
        id: id.to_string(),
        message,
    }
}

impl LaminaDefinition {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(invalid("lamina", &self.name, "no dimensions".into()));
        }
        unique("dimension", self.dimensions.iter().map(String::as_str))?;
        unique("region", self.regions.iter().map(|r| r.label.as_str()))?;
        for r in &self.regions {
            r.validate()?;
            if let Some(d) = r.bounds.keys().find(|d| !self.dimensions.contains(d)) {
                return Err(invalid(
                    "region",
                    &r.label,
                    format!("bound on unlisted dimension `{d}`"),
                ));
            }
        }
        Ok(())
    }
}

impl KnowledgePatch {
    pub fn validate(&self) -> Result<()> {
        if self.selector.is_empty() {
            return Err(invalid("patch", &self.id, "empty selector".into()));
        }
        let ok = match &self.op {
            PatchOp::Set(w) => w.is_finite(),
            PatchOp::Multiply(m) => m.is_finite() && *m != 0.0,
            PatchOp::Transform(t) => t.is_finite(),
        };
        if !ok {
            return Err(invalid(
                "patch",
                &self.id,
                format!("bad operand {:?}", self.op),
            ));
        }
        if self.provenance.trim().is_empty() {
            return Err(invalid("patch", &self.id, "missing provenance".into()));
        }
        Ok(())
    }

    /// The patch undoing a multiply; `None` for set and transform patches,
    /// which are undone with [`revert_patch`].
    pub fn inverse(&self) -> Option<KnowledgePatch> {
        match self.op {
            PatchOp::Multiply(m) => Some(KnowledgePatch {
                id: format!("{}-inverse", self.id),
                selector: self.selector.clone(),
                op: PatchOp::Multiply(1.0 / m),
                provenance: format!("inverse of {}", self.id),
            }),
            PatchOp::Set(_) | PatchOp::Transform(_) => None,
        }
    }
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Laminae sharing at least one token with the intent, by descending
/// overlap and then by name.
pub fn match_laminae<'a>(intent: &str, base: &'a KnowledgeBase) -> Vec<&'a LaminaDefinition> {
    let wanted = tokens(intent);
    let mut scored: Vec<(usize, &LaminaDefinition)> = base
        .laminae
        .iter()
        .map(|l| {
            let mut have = tokens(&l.name);
            for t in &l.tags {
                have.extend(tokens(t));
            }
            (wanted.intersection(&have).count(), l)
        })
        .filter(|(n, _)| *n > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.name.cmp(&b.1.name)));
    scored.into_iter().map(|(_, l)| l).collect()
}
