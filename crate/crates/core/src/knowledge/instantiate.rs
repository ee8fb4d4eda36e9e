use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{
    EdgeSelector, GeneticModifier, KnowledgeBase, KnowledgeError, KnowledgePatch, LaminaDefinition,
    PatchOp, Result,
};
use crate::gnb::{update_block, GraphBlock, GraphEdge, Transform};
use crate::loadmetrics::AthleteProfile;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstantiateOptions {
    /// How many edges upstream of the utility nodes to expand; unlimited
    /// when absent.
    pub max_depth: Option<usize>,
    /// Apply every patch in the base that matches the block.
    pub apply_patches: bool,
}

/// Instantiates a lamina with the full upstream closure and no patches.
pub fn instantiate(
    lamina: &LaminaDefinition,
    base: &KnowledgeBase,
    profile: &AthleteProfile,
    genotypes: &BTreeMap<String, String>,
) -> Result<GraphBlock> {
    instantiate_with(
        lamina,
        base,
        profile,
        genotypes,
        &InstantiateOptions::default(),
    )
}

/// Builds a block holding the lamina's utility nodes and every node and
/// edge upstream of them, binds profile values, applies genetic modifiers
/// (and optionally patches), then settles it with one update.
pub fn instantiate_with(
    lamina: &LaminaDefinition,
    base: &KnowledgeBase,
    profile: &AthleteProfile,
    genotypes: &BTreeMap<String, String>,
    opts: &InstantiateOptions,
) -> Result<GraphBlock> {
    let missing: Vec<String> = lamina
        .dimensions
        .iter()
        .filter(|d| base.template(d).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(KnowledgeError::UnresolvedDimensions(missing));
    }
    let full = base.full_block();
    let roots: Vec<&str> = lamina
        .dimensions
        .iter()
        .map(|d| base.template(d).expect("resolved").node.id.as_str())
        .collect();

    let mut depth: BTreeMap<&str, usize> = roots.iter().map(|r| (*r, 0)).collect();
    let mut queue: VecDeque<&str> = roots.iter().copied().collect();
    while let Some(t) = queue.pop_front() {
        let d = depth[t];
        if opts.max_depth.is_some_and(|m| d >= m) {
            continue;
        }
        for e in full.edges.iter().filter(|e| e.target == t) {
            if !depth.contains_key(e.source.as_str()) {
                depth.insert(&e.source, d + 1);
                queue.push_back(&e.source);
            }
        }
    }

    let mut block = GraphBlock::new(lamina.name.clone());
    for r in &roots {
        block
            .nodes
            .push(full.node(r).expect("template node").clone());
    }
    let root_set: BTreeSet<&str> = roots.iter().copied().collect();
    block.nodes.extend(
        full.nodes
            .iter()
            .filter(|n| depth.contains_key(n.id.as_str()) && !root_set.contains(n.id.as_str()))
            .cloned(),
    );
    block.edges = full
        .edges
        .iter()
        .filter(|e| depth.contains_key(e.source.as_str()) && depth.contains_key(e.target.as_str()))
        .cloned()
        .collect();

    bind_profile(&mut block, base, profile)?;
    apply_modifiers(&mut block, &base.genetic_modifiers, genotypes);
    if opts.apply_patches {
        for p in &base.patches {
            match apply_patch(&mut block, p) {
                Ok(_) => {}
                Err(KnowledgeError::EmptyPatch(_)) => {
                    tracing::debug!(patch = %p.id, "patch does not touch this lamina");
                }
                Err(e) => return Err(e),
            }
        }
    }
    update_block(&mut block, &BTreeMap::new(), 0.0)?;
    tracing::info!(
        lamina = %lamina.name,
        nodes = block.nodes.len(),
        edges = block.edges.len(),
        "instantiated block"
    );
    Ok(block)
}

fn profile_value(profile: &AthleteProfile, field: &str) -> Option<f64> {
    Some(match field {
        "mass_kg" => profile.mass_kg,
        "height_cm" => profile.height_cm,
        "age_years" => profile.age_years,
        "hr_rest" => profile.hr_rest,
        "hr_max" => profile.hr_max(),
        _ => return None,
    })
}

fn bind_profile(
    block: &mut GraphBlock,
    base: &KnowledgeBase,
    profile: &AthleteProfile,
) -> Result<()> {
    for (field, paths) in &base.profile_bindings {
        let v = profile_value(profile, field).expect("validated binding");
        for p in paths {
            let node = p.split(['/', ':']).next().unwrap_or_default();
            if block.node(node).is_none() {
                continue;
            }
            block.set(p, v)?;
        }
    }
    Ok(())
}

fn normalise_genotype(g: &str) -> String {
    g.chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_uppercase()
}

/// Multiplies the weight of every edge running from a node tagged with the
/// modifier's source tag to one tagged with its target tag, for modifiers
/// whose genotype matches. Nested blocks are included. Each edge's
/// multipliers are combined in sorted order, so the result does not depend
/// on the order of `modifiers`.
pub fn apply_modifiers(
    block: &mut GraphBlock,
    modifiers: &[GeneticModifier],
    genotypes: &BTreeMap<String, String>,
) {
    let active: Vec<&GeneticModifier> = modifiers
        .iter()
        .filter(|m| {
            genotypes
                .get(&m.rsid)
                .is_some_and(|g| normalise_genotype(g) == normalise_genotype(&m.genotype))
        })
        .collect();
    if !active.is_empty() {
        modify_by_genotype(block, &active);
    }
}

fn modify_by_genotype(block: &mut GraphBlock, active: &[&GeneticModifier]) {
    for i in 0..block.edges.len() {
        let mut hits: Vec<(f64, String)> = active
            .iter()
            .filter(|m| {
                let s = EdgeSelector {
                    source_tag: Some(m.edge_pattern.source_tag.clone()),
                    target_tag: Some(m.edge_pattern.target_tag.clone()),
                    ..Default::default()
                };
                matches(block, &block.edges[i], &s)
            })
            .map(|m| {
                (
                    m.multiplier,
                    format!("{} {} {}", m.gene, m.rsid, m.genotype),
                )
            })
            .collect();
        if hits.is_empty() {
            continue;
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let factor: f64 = hits.iter().map(|h| h.0).product();
        let e = &mut block.edges[i];
        e.weight *= factor;
        e.provenance.extend(hits.into_iter().map(|h| h.1));
        tracing::debug!(edge = %e.id, factor, "genetic modifiers applied");
    }
    for node in &mut block.nodes {
        if let Some(nested) = &mut node.nested {
            modify_by_genotype(&mut nested.block, active);
        }
    }
}

fn matches(block: &GraphBlock, e: &GraphEdge, s: &EdgeSelector) -> bool {
    let tagged = |node: &str, tag: &Option<String>| {
        tag.as_ref()
            .is_none_or(|t| block.node(node).is_some_and(|n| n.tags.contains(t)))
    };
    (s.edge_ids.is_empty() || s.edge_ids.contains(&e.id))
        && s.source.as_ref().is_none_or(|x| *x == e.source)
        && s.target.as_ref().is_none_or(|x| *x == e.target)
        && tagged(&e.source, &s.source_tag)
        && tagged(&e.target, &s.target_tag)
}

/// Weight and transform of an edge before a patch touched it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePrior {
    pub weight: f64,
    pub transform: Transform,
}

/// Prior state of the edges a patch touched, keyed by edge path
/// (`host/edge-id` for nested edges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchReceipt {
    pub patch: String,
    pub previous: BTreeMap<String, EdgePrior>,
}

/// Edits the selected edges and appends the patch provenance. A patch
/// leaving the block invalid is rolled back.
pub fn apply_patch(block: &mut GraphBlock, patch: &KnowledgePatch) -> Result<PatchReceipt> {
    patch.validate()?;
    let mut previous = BTreeMap::new();
    let backup = matches!(patch.op, PatchOp::Transform(_)).then(|| block.clone());
    patch_rec(block, patch, "", &mut previous);
    if previous.is_empty() {
        return Err(KnowledgeError::EmptyPatch(patch.id.clone()));
    }
    if let Some(backup) = backup {
        if let Err(e) = block.validate() {
            *block = backup;
            return Err(e.into());
        }
    }
    tracing::info!(patch = %patch.id, edges = previous.len(), "patch applied");
    Ok(PatchReceipt {
        patch: patch.id.clone(),
        previous,
    })
}

fn patch_rec(
    block: &mut GraphBlock,
    patch: &KnowledgePatch,
    prefix: &str,
    previous: &mut BTreeMap<String, EdgePrior>,
) {
    let hits: Vec<usize> = (0..block.edges.len())
        .filter(|&i| matches(block, &block.edges[i], &patch.selector))
        .collect();
    for i in hits {
        let e = &mut block.edges[i];
        previous.insert(
            format!("{prefix}{}", e.id),
            EdgePrior {
                weight: e.weight,
                transform: e.transform.clone(),
            },
        );
        match &patch.op {
            PatchOp::Set(w) => e.weight = *w,
            PatchOp::Multiply(m) => e.weight *= m,
            PatchOp::Transform(t) => {
                e.transform = t.clone();
                e.weight = 1.0;
            }
        }
        e.provenance.push(patch.provenance.clone());
    }
    for node in &mut block.nodes {
        let id = node.id.clone();
        if let Some(nested) = &mut node.nested {
            patch_rec(
                &mut nested.block,
                patch,
                &format!("{prefix}{id}/"),
                previous,
            );
        }
    }
}

/// Restores the edges recorded in a receipt and drops the provenance
/// entry the patch added.
pub fn revert_patch(block: &mut GraphBlock, receipt: &PatchReceipt) -> Result<()> {
    for (path, prior) in &receipt.previous {
        let mut b = &mut *block;
        let mut parts: Vec<&str> = path.split('/').collect();
        let edge = parts.pop().expect("nonempty path");
        for host in parts {
            b = &mut b
                .node_mut(host)
                .and_then(|n| n.nested.as_mut())
                .ok_or_else(|| crate::gnb::GnbError::UnknownNode(host.to_string()))?
                .block;
        }
        let e = b
            .edge_mut(edge)
            .ok_or_else(|| crate::gnb::GnbError::UnknownNode(format!("edge {edge}")))?;
        e.weight = prior.weight;
        e.transform = prior.transform.clone();
        e.provenance.pop();
    }
    Ok(())
}
