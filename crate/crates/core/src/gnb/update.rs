use std::collections::{BTreeMap, BTreeSet, HashMap};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use super::{key, AttrPath, GnbError, GraphBlock, GraphNode, PinKind, Result, Transform};

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOptions {
    /// Gauss-Seidel rounds allowed per strongly connected component.
    pub max_rounds: usize,
    pub tolerance: f64,
    /// Explicit node order to propagate in. Must be consistent with the
    /// attribute dependencies, which must then be acyclic.
    pub node_order: Option<Vec<String>>,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            tolerance: 1e-6,
            node_order: None,
        }
    }
}

/// Relaxes every attribute with a time constant toward its baseline
/// (0 when none is recorded). Non-positive or NaN `dt_days` is a no-op.
pub fn apply_time_decay(node: &mut GraphNode, dt_days: f64) {
    if !(dt_days > 0.0) {
        return;
    }
    for (name, tau) in &node.tau_days {
        let base = node.baseline.get(name).copied().unwrap_or(0.0);
        if let Some(x) = node.attributes.get_mut(name) {
            *x += (base - *x) * (1.0 - (-dt_days / tau).exp());
        }
    }
}

/// One update cycle with default options.
pub fn update_block(
    block: &mut GraphBlock,
    inputs: &BTreeMap<String, f64>,
    dt_days: f64,
) -> Result<()> {
    update_block_with(block, inputs, dt_days, &UpdateOptions::default())
}

/// One update cycle: decay, inputs and pins, propagation (nested blocks
/// first), then globals. Inputs are pinned at event priority.
pub fn update_block_with(
    block: &mut GraphBlock,
    inputs: &BTreeMap<String, f64>,
    dt_days: f64,
    opts: &UpdateOptions,
) -> Result<()> {
    if !(dt_days >= 0.0) {
        return Err(GnbError::Parameter(format!(
            "dt_days must be >= 0, got {dt_days}"
        )));
    }
    if opts.max_rounds == 0 || !(opts.tolerance >= 0.0) {
        return Err(GnbError::Parameter(
            "max_rounds must be > 0 and tolerance >= 0".into(),
        ));
    }
    block.validate()?;
    let parsed: Vec<(AttrPath, f64)> = inputs
        .iter()
        .map(|(p, v)| {
            let path = AttrPath::parse(p)?;
            block.get(p)?;
            Ok((path, *v))
        })
        .collect::<Result<_>>()?;
    let saved = block.clone();
    let result = parsed
        .iter()
        .try_for_each(|(path, v)| block.pin_path(path, *v, PinKind::Event))
        .and_then(|()| cycle(block, dt_days, opts, opts.node_order.as_deref()));
    if result.is_err() {
        *block = saved;
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Unit {
    Attr(usize, String),
    Nested(usize),
}

struct Plan {
    graph: DiGraph<Unit, ()>,
    /// Incoming propagation edges per attribute, in block edge order.
    incoming: HashMap<(usize, String), Vec<usize>>,
}

fn build_plan(block: &GraphBlock) -> Plan {
    let index: HashMap<&str, usize> = block
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut units: BTreeSet<Unit> = BTreeSet::new();
    for (i, n) in block.nodes.iter().enumerate() {
        for a in n.attributes.keys() {
            units.insert(Unit::Attr(i, a.clone()));
        }
        if n.nested.is_some() {
            units.insert(Unit::Nested(i));
        }
    }
    let mut graph = DiGraph::new();
    let ids: BTreeMap<Unit, NodeIndex> = units
        .into_iter()
        .map(|u| (u.clone(), graph.add_node(u)))
        .collect();
    let mut incoming: HashMap<(usize, String), Vec<usize>> = HashMap::new();
    for (k, e) in block.edges.iter().enumerate() {
        if e.is_decay() {
            continue;
        }
        let (s, t) = (index[e.source.as_str()], index[e.target.as_str()]);
        let to = ids[&Unit::Attr(t, e.target_attr.clone())];
        for r in e.transform.reads(&e.source_attr) {
            graph.update_edge(ids[&Unit::Attr(s, r.to_string())], to, ());
        }
        incoming
            .entry((t, e.target_attr.clone()))
            .or_default()
            .push(k);
    }
    for (i, n) in block.nodes.iter().enumerate() {
        let Some(nested) = &n.nested else { continue };
        let nid = ids[&Unit::Nested(i)];
        for imp in &nested.imports {
            graph.update_edge(ids[&Unit::Attr(i, imp.host_attr.clone())], nid, ());
        }
        for g in nested.block.global_reducers.keys() {
            graph.update_edge(nid, ids[&Unit::Attr(i, g.clone())], ());
        }
    }
    Plan { graph, incoming }
}

/// Groups of units in propagation order; groups with more than one unit
/// (or a self-dependency) are iterated to a fixed point.
fn schedule(
    plan: &Plan,
    block: &GraphBlock,
    order: Option<&[String]>,
) -> Result<Vec<(Vec<Unit>, bool)>> {
    let g = &plan.graph;
    match order {
        None => {
            let mut sccs = tarjan_scc(g);
            sccs.reverse();
            Ok(sccs
                .into_iter()
                .map(|mut c| {
                    c.sort_by(|a, b| g[*a].cmp(&g[*b]));
                    let cyclic = c.len() > 1 || g.contains_edge(c[0], c[0]);
                    (c.into_iter().map(|n| g[n].clone()).collect(), cyclic)
                })
                .collect())
        }
        Some(order) => {
            let pos: HashMap<&str, usize> = order
                .iter()
                .enumerate()
                .map(|(i, n)| (n.as_str(), i))
                .collect();
            if pos.len() != block.nodes.len()
                || block.nodes.iter().any(|n| !pos.contains_key(n.id.as_str()))
            {
                return Err(GnbError::InvalidOrder(
                    "order must list every node exactly once".into(),
                ));
            }
            let rank = |u: &Unit| -> (usize, u8, String) {
                match u {
                    Unit::Attr(i, a) => {
                        let n = &block.nodes[*i];
                        let exported = n
                            .nested
                            .as_ref()
                            .is_some_and(|x| x.block.global_reducers.contains_key(a));
                        (pos[n.id.as_str()], if exported { 2 } else { 0 }, a.clone())
                    }
                    Unit::Nested(i) => (pos[block.nodes[*i].id.as_str()], 1, String::new()),
                }
            };
            for e in g.edge_indices() {
                let (a, b) = g.edge_endpoints(e).expect("edge exists");
                if rank(&g[a]) >= rank(&g[b]) {
                    return Err(GnbError::InvalidOrder(format!(
                        "{} must come before {}",
                        describe(block, &g[a]),
                        describe(block, &g[b])
                    )));
                }
            }
            let mut units: Vec<Unit> = g.node_weights().cloned().collect();
            units.sort_by_cached_key(|u| rank(u));
            Ok(units.into_iter().map(|u| (vec![u], false)).collect())
        }
    }
}

fn describe(block: &GraphBlock, u: &Unit) -> String {
    match u {
        Unit::Attr(i, a) => key(&block.nodes[*i].id, a),
        Unit::Nested(i) => format!("{}/", block.nodes[*i].id),
    }
}

fn cycle(
    block: &mut GraphBlock,
    dt_days: f64,
    opts: &UpdateOptions,
    order: Option<&[String]>,
) -> Result<()> {
    let plan = build_plan(block);
    let groups = schedule(&plan, block, order)?;

    for n in &mut block.nodes {
        apply_time_decay(n, dt_days);
    }
    let pins = std::mem::take(&mut block.pins);
    let mut pinned: BTreeSet<(usize, String)> = BTreeSet::new();
    for (k, pin) in &pins {
        let (node, attr) = k.split_once(':').expect("pin keys are node:attr");
        let i = block
            .nodes
            .iter()
            .position(|n| n.id == node)
            .ok_or_else(|| GnbError::UnknownNode(node.to_string()))?;
        *block.nodes[i]
            .attributes
            .get_mut(attr)
            .ok_or_else(|| GnbError::UnknownAttribute(k.clone()))? = pin.value;
        pinned.insert((i, attr.to_string()));
    }

    let mut non_converged = BTreeSet::new();
    for (units, cyclic) in groups {
        if !cyclic {
            step(block, &plan, &pinned, &units[0], dt_days, opts)?;
            continue;
        }
        let mut converged = false;
        for _ in 0..opts.max_rounds {
            let mut delta: f64 = 0.0;
            for u in &units {
                delta = delta.max(step(block, &plan, &pinned, u, dt_days, opts)?);
            }
            if delta <= opts.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            let keys: Vec<String> = units
                .iter()
                .filter(|u| matches!(u, Unit::Attr(..)))
                .map(|u| describe(block, u))
                .collect();
            tracing::warn!(block = %block.id, attrs = ?keys, "cycle did not converge");
            non_converged.extend(keys);
        }
    }

    block.recompute_globals();
    block.flags.non_converged = non_converged;
    block.flags.last_pinned = pins.into_iter().map(|(k, p)| (k, p.kind)).collect();
    Ok(())
}

/// Recomputes one unit and returns how much it moved.
fn step(
    block: &mut GraphBlock,
    plan: &Plan,
    pinned: &BTreeSet<(usize, String)>,
    unit: &Unit,
    dt_days: f64,
    opts: &UpdateOptions,
) -> Result<f64> {
    match unit {
        Unit::Attr(i, a) => {
            let k = (*i, a.clone());
            if pinned.contains(&k) {
                return Ok(0.0);
            }
            let Some(edges) = plan.incoming.get(&k) else {
                return Ok(0.0);
            };
            let Some(v) = evaluate(block, *i, a, edges) else {
                return Ok(0.0);
            };
            let slot = block.nodes[*i]
                .attributes
                .get_mut(a)
                .expect("validated attribute");
            let moved = (v - *slot).abs();
            *slot = v;
            Ok(moved)
        }
        Unit::Nested(i) => {
            let host = &block.nodes[*i];
            let nested = host.nested.as_ref().expect("nested unit");
            let imports: Vec<(AttrPath, f64)> = nested
                .imports
                .iter()
                .map(|imp| {
                    (
                        AttrPath {
                            hosts: Vec::new(),
                            node: imp.node.clone(),
                            attr: imp.attr.clone(),
                        },
                        host.attributes[&imp.host_attr],
                    )
                })
                .collect();
            let host_pins: BTreeSet<String> = pinned
                .iter()
                .filter(|(h, _)| h == i)
                .map(|(_, a)| a.clone())
                .collect();
            let host = &mut block.nodes[*i];
            let nested = &mut host.nested.as_mut().expect("nested unit").block;
            for (p, v) in &imports {
                nested.pin_path(p, *v, PinKind::Event)?;
            }
            let inner = UpdateOptions {
                node_order: None,
                ..opts.clone()
            };
            cycle(nested, dt_days, &inner, None)?;
            let globals = nested.globals.clone();
            let mut moved: f64 = 0.0;
            for (g, v) in globals {
                if host_pins.contains(&g) {
                    continue;
                }
                if let Some(slot) = host.attributes.get_mut(&g) {
                    moved = moved.max((v - *slot).abs());
                    *slot = v;
                }
            }
            Ok(moved)
        }
    }
}

/// Sum of signed, weighted edge contributions; `None` if not finite.
fn evaluate(block: &GraphBlock, target: usize, attr: &str, edges: &[usize]) -> Option<f64> {
    let mut sum = 0.0;
    let mut activation = false;
    for &k in edges {
        let e = &block.edges[k];
        let src = block.node(&e.source).expect("validated source");
        let x = |name: &str| src.attributes[name];
        let c = match &e.transform {
            Transform::Copy => x(&e.source_attr),
            Transform::Linear { a, b } => a * x(&e.source_attr) + b,
            Transform::Product { other_attr } => x(&e.source_attr) * x(other_attr),
            Transform::Quotient {
                denominator_attr,
                scale,
            } => {
                let d = x(denominator_attr);
                if d == 0.0 {
                    tracing::warn!(edge = %e.id, "division by zero; contribution dropped");
                    0.0
                } else {
                    scale * x(&e.source_attr) / d
                }
            }
            Transform::WeightedSum { terms } => terms.iter().map(|(n, w)| w * x(n)).sum(),
            Transform::SignedActivation => {
                activation = true;
                x(&e.source_attr)
            }
            Transform::DecayToBaseline => continue,
        };
        sum += f64::from(e.sign) * e.weight * c;
    }
    let node = &block.nodes[target];
    if activation {
        sum = (sum + node.baseline.get(attr).copied().unwrap_or(0.0)).clamp(0.0, 1.0);
    }
    if sum.is_finite() {
        Some(sum)
    } else {
        tracing::warn!(node = %node.id, attr, "non-finite propagation result ignored");
        None
    }
}
