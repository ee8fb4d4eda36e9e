use std::collections::{BTreeMap, BTreeSet};

use hse_core::gnb::{gene_balance, update_block, GraphBlock, GraphNode, Layer};
use hse_core::knowledge::{
    apply_modifiers, apply_patch, distance_to_region, instantiate, instantiate_with,
    load_knowledge, match_laminae, parse_knowledge, region_membership, revert_patch, EdgePattern,
    GeneticModifier, InstantiateOptions, Interval, KnowledgeBase, KnowledgeError, PatchOp,
    RegionOfInterest,
};
use hse_core::loadmetrics::{AthleteProfile, Sex};
use proptest::prelude::*;
use serde_json::Value;

const FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/fixtures/knowledge/cycling_cardiac.json"
);

fn base() -> KnowledgeBase {
    load_knowledge(FIXTURE).unwrap()
}

fn raw() -> Value {
    serde_json::from_str(&std::fs::read_to_string(FIXTURE).unwrap()).unwrap()
}

fn subject() -> AthleteProfile {
    AthleteProfile {
        mass_kg: 58.0,
        height_cm: 170.0,
        sex: Sex::Male,
        age_years: 30.0,
        hr_rest: 48.0,
        hr_max: None,
    }
}

fn genotype(g: &str) -> BTreeMap<String, String> {
    BTreeMap::from([("rs1815739".to_string(), g.to_string())])
}

fn cp_block(g: &str) -> GraphBlock {
    let b = base();
    instantiate(
        b.lamina("cycling-critical-power").unwrap(),
        &b,
        &subject(),
        &genotype(g),
    )
    .unwrap()
}

fn count_nodes(nodes: &Value) -> usize {
    nodes
        .as_array()
        .unwrap()
        .iter()
        .map(|n| {
            1 + n
                .get("nested")
                .map_or(0, |x| count_nodes(&x["block"]["nodes"]))
        })
        .sum()
}

#[test]
fn fixture_loads_with_declared_node_count() {
    let v = raw();
    let want = v["utility_templates"].as_array().unwrap().len() + count_nodes(&v["bio_nodes"]);
    let b = base();
    assert_eq!(b.node_count(), want);
    assert_eq!(b.laminae.len(), v["laminae"].as_array().unwrap().len());
    // The nested cardiac gene network is roughly twenty nodes.
    let heart = b.bio_nodes.iter().find(|n| n.id == "heart").unwrap();
    let genes = heart.nested.as_ref().unwrap().block.nodes.len();
    assert!((18..=25).contains(&genes), "{genes}");
}

#[test]
fn duplicate_lamina_is_rejected_by_name() {
    let mut v = raw();
    let first = v["laminae"][0].clone();
    v["laminae"].as_array_mut().unwrap().push(first);
    let err = parse_knowledge(&v.to_string()).unwrap_err();
    assert!(
        matches!(&err, KnowledgeError::Duplicate { kind: "lamina", id } if id == "cycling-critical-power"),
        "{err}"
    );
    assert!(err.to_string().contains("cycling-critical-power"));
}

#[test]
fn missing_provenance_is_rejected() {
    let mut v = raw();
    v["bio_edges"][3]["provenance"] = Value::Array(vec![]);
    assert!(matches!(
        parse_knowledge(&v.to_string()),
        Err(KnowledgeError::Invalid { kind: "edge", .. })
    ));
}

#[test]
fn cycling_intent_selects_cp_lamina() {
    let b = base();
    let ranked = match_laminae("I want to get better at cycling", &b);
    assert_eq!(ranked[0].name, "cycling-critical-power");
    assert!(match_laminae("origami", &b).is_empty());
    // "endurance" is shared by two laminae; ties break alphabetically.
    let names: Vec<&str> = match_laminae("endurance", &b)
        .iter()
        .map(|l| l.name.as_str())
        .collect();
    assert_eq!(names, vec!["cycling-critical-power", "running-aerobic"]);
}

/// Nodes with a directed path into any of `roots`, straight from the JSON.
fn upstream(v: &Value, roots: &[&str]) -> BTreeSet<String> {
    let edges: Vec<(String, String)> = v["bio_edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["source"].as_str().unwrap().to_string(),
                e["target"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let mut seen: BTreeSet<String> = roots.iter().map(|r| r.to_string()).collect();
    loop {
        let before = seen.len();
        for (s, t) in &edges {
            if seen.contains(t) {
                seen.insert(s.clone());
            }
        }
        if seen.len() == before {
            return seen;
        }
    }
}

fn has_path(block: &GraphBlock, from: &str, to: &str) -> bool {
    let mut seen = BTreeSet::from([from.to_string()]);
    let mut stack = vec![from.to_string()];
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        for e in block.edges.iter().filter(|e| e.source == n) {
            if seen.insert(e.target.clone()) {
                stack.push(e.target.clone());
            }
        }
    }
    false
}

#[test]
fn instantiation_contains_organ_chain() {
    let b = base();
    let lamina = b.lamina("cycling-critical-power").unwrap();
    let block = cp_block("1C 1T");
    let dims: Vec<&str> = lamina.dimensions.iter().map(String::as_str).collect();
    let want = upstream(&raw(), &dims);
    let got: BTreeSet<String> = block.nodes.iter().map(|n| n.id.clone()).collect();
    assert_eq!(got, want);

    let chain = ["lungs", "blood", "heart", "vasculature", "muscles"];
    for pair in chain.windows(2) {
        assert!(
            block
                .edges
                .iter()
                .any(|e| e.source == pair[0] && e.target == pair[1]),
            "{} -> {}",
            pair[0],
            pair[1]
        );
    }
    assert!(has_path(&block, "lungs", "cp_1000s"));
    assert!(block.edges.iter().all(|e| !e.provenance.is_empty()));
    let nested = &block.node("heart").unwrap().nested.as_ref().unwrap().block;
    assert!(nested.edges.iter().all(|e| !e.provenance.is_empty()));
}

#[test]
fn depth_cap_limits_closure() {
    let b = base();
    let lamina = b.lamina("cycling-critical-power").unwrap();
    let opts = InstantiateOptions {
        max_depth: Some(1),
        apply_patches: false,
    };
    let block = instantiate_with(lamina, &b, &subject(), &genotype("1C 1T"), &opts).unwrap();
    assert!(block.node("muscles").is_some());
    assert!(block.node("lungs").is_none());
}

#[test]
fn instantiation_is_deterministic_and_binds_profile() {
    let a = cp_block("1C 1T");
    let b = cp_block("1C 1T");
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.get("body:mass_kg").unwrap(), 58.0);
    assert_eq!(a.get("heart:hr_max").unwrap(), 190.0);
    // No event drive yet: resting rate is the profile value and SV = 1000 CO / HR.
    assert_eq!(a.get("heart:hr_rest").unwrap(), 48.0);
    assert_eq!(a.get("heart:co_rest_l_min").unwrap(), 0.070 * 58.0);
    assert_eq!(
        a.get("heart:sv_ml").unwrap(),
        1000.0 * (0.070 * 58.0) / 48.0
    );
    assert!(a.get("vo2max:value").unwrap() > 20.0);
}

#[test]
fn unresolved_dimension_is_listed() {
    let mut b = base();
    b.laminae[0].dimensions.push("cp_9999s".into());
    let err = instantiate(&b.laminae[0], &b, &subject(), &BTreeMap::new()).unwrap_err();
    assert!(
        matches!(&err, KnowledgeError::UnresolvedDimensions(d) if d == &vec!["cp_9999s".to_string()])
    );
}

fn weight(block: &GraphBlock, id: &str) -> f64 {
    block.edge(id).unwrap().weight
}

#[test]
fn actn3_genotypes() {
    let balanced = cp_block("1C 1T");
    assert_eq!(weight(&balanced, "hi->fiber"), 1.0);
    assert_eq!(weight(&balanced, "li->fiber"), 1.0);
    let fast = cp_block("2C");
    let base_hi = raw()["bio_edges"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["id"] == "hi->fiber")
        .unwrap()["weight"]
        .as_f64()
        .unwrap();
    assert_eq!(weight(&fast, "hi->fiber"), base_hi * 1.25);
    assert_eq!(weight(&fast, "li->fiber"), base_hi * 0.9);
    assert!(fast
        .edge("hi->fiber")
        .unwrap()
        .provenance
        .iter()
        .any(|p| p.contains("ACTN3")));
    // Unknown genotype: untouched.
    let other = cp_block("2T");
    assert_eq!(weight(&other, "hi->fiber"), 1.0);
}

#[test]
fn mitochondria_patches() {
    let b = base();
    let mut block = cp_block("1C 1T");
    let li0 = weight(&block, "li->mito");
    let li = b.patch("mito-li-increase").unwrap();
    let r1 = apply_patch(&mut block, li).unwrap();
    assert_eq!(weight(&block, "li->mito"), li0 * 1.5);
    let hi = b.patch("mito-hi-decrease").unwrap();
    assert_eq!(weight(&block, "hi->mito"), 1.0);
    let r2 = apply_patch(&mut block, hi).unwrap();
    assert_eq!(weight(&block, "hi->mito"), 0.4);
    assert_eq!(
        block.edge("hi->mito").unwrap().provenance.last().unwrap(),
        &hi.provenance
    );

    revert_patch(&mut block, &r2).unwrap();
    revert_patch(&mut block, &r1).unwrap();
    assert_eq!(block, cp_block("1C 1T"));

    let mut again = cp_block("1C 1T");
    apply_patch(&mut again, li).unwrap();
    apply_patch(&mut again, &li.inverse().unwrap()).unwrap();
    assert!((weight(&again, "li->mito") - li0).abs() < 1e-12);

    let mut nothing = li.clone();
    nothing.selector.source = Some("nobody".into());
    assert!(matches!(
        apply_patch(&mut again, &nothing),
        Err(KnowledgeError::EmptyPatch(_))
    ));
    assert!(matches!(li.op, PatchOp::Multiply(_)));
}

#[test]
fn patches_applied_at_instantiation_when_asked() {
    let b = base();
    let opts = InstantiateOptions {
        max_depth: None,
        apply_patches: true,
    };
    let block = instantiate_with(
        b.lamina("cycling-critical-power").unwrap(),
        &b,
        &subject(),
        &genotype("1C 1T"),
        &opts,
    )
    .unwrap();
    assert_eq!(weight(&block, "hi->mito"), 0.4);
    assert_eq!(weight(&block, "li->mito"), 1.5);
}

#[test]
fn readiness_region() {
    let b = base();
    let roi = b
        .lamina("cycling-critical-power")
        .unwrap()
        .region("race-ready")
        .unwrap();
    let state = |w: f64| BTreeMap::from([("cp_1000s".to_string(), w)]);
    assert!(region_membership(&state(152.0 / 60.8), roi).unwrap());
    assert_eq!(distance_to_region(&state(152.0 / 60.8), roi).unwrap(), 0.0);
    assert!(!region_membership(&state(2.0), roi).unwrap());
    assert!((distance_to_region(&state(2.0), roi).unwrap() - 0.5).abs() < 1e-12);
    assert!(matches!(
        distance_to_region(&BTreeMap::new(), roi),
        Err(KnowledgeError::MissingDimension(d)) if d == "cp_1000s"
    ));
}

/// Independent Jacobi evaluation of the shipped gene network from the
/// JSON: a = clamp(baseline + sum(sign * weight * a_src), 0, 1).
fn gene_oracle(vol: f64, press: f64, train: f64) -> (f64, f64) {
    let v = raw();
    let heart = v["bio_nodes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|n| n["id"] == "heart")
        .unwrap();
    let net = &heart["nested"]["block"];
    let mut val: BTreeMap<String, f64> = BTreeMap::new();
    let mut base: BTreeMap<String, f64> = BTreeMap::new();
    for n in net["nodes"].as_array().unwrap() {
        let id = n["id"].as_str().unwrap().to_string();
        base.insert(
            id.clone(),
            n["baseline"]["activation"].as_f64().unwrap_or(0.0),
        );
        val.insert(id, 0.0);
    }
    val.insert("vol_in".into(), vol);
    val.insert("press_in".into(), press);
    val.insert("train_in".into(), train);
    for _ in 0..50 {
        let mut next = val.clone();
        for id in base.keys().filter(|k| !k.ends_with("_in")) {
            let s: f64 = net["edges"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|e| e["target"] == id.as_str())
                .map(|e| {
                    e["sign"].as_f64().unwrap()
                        * e["weight"].as_f64().unwrap()
                        * val[e["source"].as_str().unwrap()]
                })
                .sum();
            next.insert(id.clone(), (base[id] + s).clamp(0.0, 1.0));
        }
        val = next;
    }
    let sum = |tag: &str| -> f64 {
        net["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|n| {
                n["tags"]
                    .as_array()
                    .is_some_and(|t| t.iter().any(|x| x == tag))
            })
            .map(|n| val[n["id"].as_str().unwrap()])
            .sum()
    };
    (sum("healthy-gene"), sum("pathological-gene"))
}

#[test]
fn overload_inputs_move_gene_balance_in_opposite_directions() {
    let cases = [
        ("vol_overload:minutes", 90.0, 1.5, 0.0),
        ("press_overload:minutes", 30.0, 0.0, 1.0),
    ];
    let mut nets = Vec::new();
    for (path, minutes, vol, press) in cases {
        let mut block = cp_block("1C 1T");
        let inputs = BTreeMap::from([(path.to_string(), minutes)]);
        update_block(&mut block, &inputs, 1.0).unwrap();
        let g = gene_balance(&block);
        let (h, p) = gene_oracle(vol, press, 0.0);
        assert!(
            (g.healthy - h).abs() < 1e-12,
            "{path}: {} vs {h}",
            g.healthy
        );
        assert!(
            (g.pathological - p).abs() < 1e-12,
            "{path}: {} vs {p}",
            g.pathological
        );
        assert_eq!(block.get("heart:net").unwrap(), g.net);
        nets.push(g.net);
    }
    assert!(
        nets[0] > 0.0,
        "volume overload should be net healthy: {}",
        nets[0]
    );
    assert!(
        nets[1] < 0.0,
        "pressure overload should be net pathological: {}",
        nets[1]
    );
    let idle = gene_balance(&cp_block("1C 1T"));
    assert_eq!((idle.healthy, idle.pathological, idle.net), (0.0, 0.0, 0.0));
}

fn tagged_block() -> GraphBlock {
    let mut b = GraphBlock::new("t");
    for (id, tag) in [("h", "hi"), ("l", "li"), ("m", "muscle")] {
        b.nodes.push(
            GraphNode::new(id, Layer::Tissue)
                .with_attr("a", 0.0)
                .with_tag(tag),
        );
    }
    b.edges.push(
        hse_core::gnb::GraphEdge::new(
            "hm",
            "h",
            "a",
            "m",
            "a",
            hse_core::gnb::Transform::SignedActivation,
        )
        .with_weight(0.7),
    );
    b.edges.push(
        hse_core::gnb::GraphEdge::new(
            "lm",
            "l",
            "a",
            "m",
            "a",
            hse_core::gnb::Transform::SignedActivation,
        )
        .with_weight(1.3),
    );
    b
}

proptest! {
    #[test]
    fn modifiers_commute(m1 in 0.01f64..10.0, m2 in 0.01f64..10.0, s1 in 0usize..2, s2 in 0usize..2) {
        let tags = ["hi", "li"];
        let mk = |rsid: &str, m: f64, s: usize| GeneticModifier {
            gene: "G".into(),
            rsid: rsid.into(),
            genotype: "AA".into(),
            edge_pattern: EdgePattern { source_tag: tags[s].into(), target_tag: "muscle".into() },
            multiplier: m,
        };
        let mods = [mk("rs1", m1, s1), mk("rs2", m2, s2)];
        let g: BTreeMap<String, String> = [("rs1", "AA"), ("rs2", "A A")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let mut ab = tagged_block();
        apply_modifiers(&mut ab, &mods, &g);
        let mut ba = tagged_block();
        apply_modifiers(&mut ba, &[mods[1].clone(), mods[0].clone()], &g);
        for id in ["hm", "lm"] {
            prop_assert_eq!(ab.edge(id).unwrap().weight, ba.edge(id).unwrap().weight);
        }
    }

    #[test]
    fn distance_zero_iff_member(
        bounds in prop::collection::vec((prop::option::of(-50.0f64..50.0), prop::option::of(0.0f64..60.0), prop::option::of(0.1f64..10.0)), 1..4),
        point in prop::collection::vec(-100.0f64..100.0, 4),
    ) {
        let mut roi = RegionOfInterest { label: "r".into(), bounds: BTreeMap::new(), attributes: BTreeMap::new() };
        for (i, (lo, width, span)) in bounds.iter().enumerate() {
            let hi = match (lo, width) { (Some(l), Some(w)) => Some(l + w), (None, Some(w)) => Some(*w), _ => None };
            let mut iv = Interval::new(*lo, hi);
            iv.span = *span;
            roi.bounds.insert(format!("d{i}"), iv);
        }
        let state: BTreeMap<String, f64> = point.iter().enumerate().map(|(i, x)| (format!("d{i}"), *x)).collect();
        let member = region_membership(&state, &roi).unwrap();
        let d = distance_to_region(&state, &roi).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d == 0.0, member);
    }
}
