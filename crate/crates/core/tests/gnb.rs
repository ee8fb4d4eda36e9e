use std::collections::BTreeMap;

use hse_core::gnb::{
    apply_time_decay, estimate_vo2max_from_power, gene_balance, resting_cardiac_output,
    stroke_volume, update_block, update_block_with, GlobalReducer, GraphBlock, GraphEdge,
    GraphNode, Import, Layer, NestedBlock, PinKind, Reducer, Selector, Transform, UpdateOptions,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn no_inputs() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

fn inputs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Random DAG over `n` nodes with attributes `x` and `y`; edges only run
/// from lower to higher index so every permutation consistent with that is
/// a valid order.
fn random_dag(rng: &mut ChaCha8Rng, n: usize, edges: usize) -> GraphBlock {
    let mut b = GraphBlock::new("dag");
    for i in 0..n {
        b.nodes.push(
            GraphNode::new(format!("n{i}"), Layer::System)
                .with_attr("x", rng.gen_range(-2.0..2.0))
                .with_attr("y", rng.gen_range(0.5..2.0)),
        );
    }
    for k in 0..edges {
        let s = rng.gen_range(0..n - 1);
        let t = rng.gen_range(s + 1..n);
        let attr = |r: &mut ChaCha8Rng| if r.gen_bool(0.5) { "x" } else { "y" };
        let transform = match rng.gen_range(0..5) {
            0 => Transform::Copy,
            1 => Transform::Linear {
                a: rng.gen_range(-1.0..1.0),
                b: rng.gen_range(-1.0..1.0),
            },
            2 => Transform::Product {
                other_attr: attr(rng).into(),
            },
            3 => Transform::WeightedSum {
                terms: BTreeMap::from([("x".into(), rng.gen_range(-1.0..1.0)), ("y".into(), 0.3)]),
            },
            _ => Transform::SignedActivation,
        };
        let target_attr = if matches!(transform, Transform::SignedActivation) {
            "y"
        } else {
            "x"
        };
        b.edges.push(
            GraphEdge::new(
                format!("e{k}"),
                format!("n{s}"),
                attr(rng),
                format!("n{t}"),
                target_attr,
                transform,
            )
            .with_weight(rng.gen_range(0.1..1.0))
            .with_sign(if rng.gen_bool(0.3) { -1 } else { 1 }),
        );
    }
    b
}

/// Uniformly random topological order by repeatedly picking a random ready node.
fn random_topological_order(block: &GraphBlock, rng: &mut ChaCha8Rng) -> Vec<String> {
    let ids: Vec<&str> = block.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut indeg: BTreeMap<&str, usize> = ids.iter().map(|i| (*i, 0)).collect();
    for e in &block.edges {
        if e.source != e.target {
            *indeg.get_mut(e.target.as_str()).unwrap() += 1;
        }
    }
    let mut ready: Vec<&str> = ids.iter().copied().filter(|i| indeg[i] == 0).collect();
    let mut out = Vec::new();
    while !ready.is_empty() {
        let pick = ready.swap_remove(rng.gen_range(0..ready.len()));
        out.push(pick.to_string());
        for e in block
            .edges
            .iter()
            .filter(|e| e.source == pick && e.target != pick)
        {
            let d = indeg.get_mut(e.target.as_str()).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(e.target.as_str());
            }
        }
    }
    assert_eq!(out.len(), ids.len());
    out
}

#[test]
fn dag_propagation_is_order_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let block = random_dag(&mut rng, 50, 140);
    let inputs = inputs(&[("n0:x", 1.5), ("n1:y", 0.8)]);

    let mut reference = block.clone();
    update_block(&mut reference, &inputs, 0.0).unwrap();
    let want = reference.flatten();

    let mut orders = std::collections::BTreeSet::new();
    for _ in 0..10 {
        let order = random_topological_order(&block, &mut rng);
        orders.insert(order.clone());
        let mut b = block.clone();
        let opts = UpdateOptions {
            node_order: Some(order),
            ..Default::default()
        };
        update_block_with(&mut b, &inputs, 0.0, &opts).unwrap();
        assert_eq!(b.flatten(), want);
    }
    assert!(orders.len() > 1, "orders should differ");

    // Shuffling the node list itself must not matter either.
    let mut shuffled = block.clone();
    shuffled.nodes.shuffle(&mut rng);
    update_block(&mut shuffled, &inputs, 0.0).unwrap();
    assert_eq!(shuffled.flatten(), want);
}

#[test]
fn decay_closed_form() {
    let mut n = GraphNode::new("fitness", Layer::EventInterface)
        .with_attr("ctl", 100.0)
        .with_baseline("ctl", 0.0)
        .with_tau("ctl", 42.0);
    apply_time_decay(&mut n, 42.0);
    let want = 100.0 / std::f64::consts::E;
    assert!((n.attr("ctl").unwrap() - want).abs() < 1e-6);

    let mut at_base = GraphNode::new("a", Layer::EventInterface)
        .with_attr("v", 3.0)
        .with_baseline("v", 3.0)
        .with_tau("v", 5.0);
    apply_time_decay(&mut at_base, 17.0);
    assert_eq!(at_base.attr("v"), Some(3.0));

    let mut far = GraphNode::new("a", Layer::EventInterface)
        .with_attr("v", 80.0)
        .with_baseline("v", 12.0)
        .with_tau("v", 7.0);
    apply_time_decay(&mut far, 1e6);
    assert!((far.attr("v").unwrap() - 12.0).abs() < 1e-9);
}

#[test]
fn decay_runs_inside_update_through_self_edge() {
    let mut b = GraphBlock::new("b");
    b.nodes.push(
        GraphNode::new("fitness", Layer::EventInterface)
            .with_attr("ctl", 100.0)
            .with_baseline("ctl", 0.0)
            .with_tau("ctl", 42.0),
    );
    b.edges.push(GraphEdge::new(
        "d",
        "fitness",
        "ctl",
        "fitness",
        "ctl",
        Transform::DecayToBaseline,
    ));
    update_block(&mut b, &no_inputs(), 21.0).unwrap();
    update_block(&mut b, &no_inputs(), 21.0).unwrap();
    assert!((b.get("fitness:ctl").unwrap() - 100.0 / std::f64::consts::E).abs() < 1e-6);
}

fn cardiac_block(sv: f64, hr: f64) -> GraphBlock {
    let mut b = GraphBlock::new("cardio");
    b.nodes.push(
        GraphNode::new("heart", Layer::Organ)
            .with_attr("sv_ml", sv)
            .with_attr("hr_bpm", hr),
    );
    b.nodes.push(
        GraphNode::new("output", Layer::System)
            .with_attr("co_ml_min", 0.0)
            .with_attr("co_l_min", 0.0)
            .with_attr("ml_per_l", 1000.0),
    );
    b.edges.push(GraphEdge::new(
        "co",
        "heart",
        "sv_ml",
        "output",
        "co_ml_min",
        Transform::Product {
            other_attr: "hr_bpm".into(),
        },
    ));
    b.edges.push(GraphEdge::new(
        "to_litres",
        "output",
        "co_ml_min",
        "output",
        "co_l_min",
        Transform::Quotient {
            denominator_attr: "ml_per_l".into(),
            scale: 1.0,
        },
    ));
    b
}

#[test]
fn cardiac_output_from_product_edge() {
    let mut b = cardiac_block(70.0, 60.0);
    update_block(&mut b, &no_inputs(), 0.0).unwrap();
    assert_eq!(b.get("output:co_ml_min").unwrap(), 4200.0);
    assert_eq!(b.get("output:co_l_min").unwrap(), 4.2);
}

#[test]
fn observed_heart_rate_drives_cardiac_output() {
    let mut b = cardiac_block(84.0, 70.0);
    b.set_observation("heart:hr_bpm", 48.0, PinKind::Biology)
        .unwrap();
    update_block(&mut b, &inputs(&[("heart:hr_bpm", 90.0)]), 1.0).unwrap();
    assert_eq!(b.get("heart:hr_bpm").unwrap(), 48.0);
    assert_eq!(b.get("output:co_ml_min").unwrap(), 84.0 * 48.0);
    assert_eq!(b.flags.last_pinned["heart:hr_bpm"], PinKind::Biology);
}

#[test]
fn physiology_constants() {
    let vo2 = estimate_vo2max_from_power(300.0, 58.0).unwrap();
    assert!((vo2 - (3240.0 + 7.0 * 58.0) / 58.0).abs() < 1e-12);
    assert!((vo2 - 62.9).abs() < 0.05);
    let twice = estimate_vo2max_from_power(600.0, 58.0).unwrap();
    assert!(((twice - 7.0) - 2.0 * (vo2 - 7.0)).abs() < 1e-12);

    let co = resting_cardiac_output(58.0).unwrap();
    assert!((co - 4.06).abs() < 1e-12);
    let sv = stroke_volume(co, 48.0).unwrap();
    assert!((sv - 4060.0 / 48.0).abs() < 1e-9);
    assert!((sv - 84.6).abs() < 0.05);
    assert!((sv * 48.0 / 1000.0 - co).abs() < 1e-12);
}

fn gene(id: &str, tag: &str, a: f64) -> GraphNode {
    GraphNode::new(id, Layer::Molecular)
        .with_attr("activation", a)
        .with_tag(tag)
}

#[test]
fn gene_balance_sums_tags() {
    let mut b = GraphBlock::new("genes");
    for (i, a) in [1.0, 1.0, 1.0].iter().enumerate() {
        b.nodes.push(gene(&format!("h{i}"), "healthy-gene", *a));
    }
    b.nodes.push(gene("p0", "pathological-gene", 0.5));
    let g = gene_balance(&b);
    assert_eq!((g.healthy, g.pathological, g.net), (3.0, 0.5, 2.5));

    for n in &mut b.nodes {
        n.attributes.insert("activation".into(), 0.0);
    }
    let g = gene_balance(&b);
    assert_eq!((g.healthy, g.pathological, g.net), (0.0, 0.0, 0.0));
}

fn nested_host(values: &[f64], drive: f64) -> GraphBlock {
    let mut inner = GraphBlock::new("inner");
    inner
        .nodes
        .push(GraphNode::new("drive", Layer::EventInterface).with_attr("level", 0.0));
    for (i, v) in values.iter().enumerate() {
        inner.nodes.push(gene(&format!("g{i}"), "healthy-gene", *v));
        inner.edges.push(
            GraphEdge::new(
                format!("e{i}"),
                "drive",
                "level",
                format!("g{i}"),
                "activation",
                Transform::SignedActivation,
            )
            .with_weight(0.1 * (i + 1) as f64),
        );
    }
    let sel = |attr: &str| Selector {
        nodes: vec![],
        tag: Some("healthy-gene".into()),
        layer: None,
        attr: attr.into(),
    };
    inner.global_reducers.insert(
        "total".into(),
        GlobalReducer {
            selector: sel("activation"),
            reducer: Reducer::Sum,
        },
    );
    inner.global_reducers.insert(
        "peak".into(),
        GlobalReducer {
            selector: sel("activation"),
            reducer: Reducer::Max,
        },
    );
    inner.global_reducers.insert(
        "mean".into(),
        GlobalReducer {
            selector: sel("activation"),
            reducer: Reducer::Mean,
        },
    );

    let mut host = GraphNode::new("heart", Layer::Organ)
        .with_attr("load", drive)
        .with_attr("total", 0.0)
        .with_attr("peak", 0.0)
        .with_attr("mean", 0.0);
    host.nested = Some(Box::new(NestedBlock {
        imports: vec![Import {
            host_attr: "load".into(),
            node: "drive".into(),
            attr: "level".into(),
        }],
        block: inner,
    }));
    let mut b = GraphBlock::new("outer");
    b.nodes.push(host);
    b.nodes
        .push(GraphNode::new("out", Layer::System).with_attr("v", 0.0));
    b.edges.push(GraphEdge::new(
        "o",
        "heart",
        "total",
        "out",
        "v",
        Transform::Copy,
    ));
    b.global_reducers.insert(
        "v".into(),
        GlobalReducer {
            selector: Selector {
                nodes: vec!["out".into()],
                tag: None,
                layer: None,
                attr: "v".into(),
            },
            reducer: Reducer::Sum,
        },
    );
    b
}

#[test]
fn nested_block_updates_before_host_edges_fire() {
    let mut b = nested_host(&[0.0, 0.0, 0.0], 2.0);
    update_block(&mut b, &no_inputs(), 0.0).unwrap();
    // activations: clamp(0.1*2), clamp(0.2*2), clamp(0.3*2)
    let want = 0.2 + 0.4 + 0.6;
    assert!((b.get("heart/drive:level").unwrap() - 2.0).abs() < 1e-12);
    assert!((b.get("heart:total").unwrap() - want).abs() < 1e-12);
    assert!((b.get("out:v").unwrap() - want).abs() < 1e-12);
    assert!((b.globals["v"] - want).abs() < 1e-12);
    assert!((gene_balance(&b).healthy - want).abs() < 1e-12);
}

proptest! {
    #[test]
    fn nested_globals_match_reducers(values in prop::collection::vec(0.0f64..1.0, 1..8), drive in -5.0f64..5.0) {
        let mut b = nested_host(&values, drive);
        update_block(&mut b, &no_inputs(), 0.5).unwrap();
        let inner = &b.node("heart").unwrap().nested.as_ref().unwrap().block;
        let acts: Vec<f64> = inner.nodes.iter().filter(|n| n.tags.contains("healthy-gene")).map(|n| n.attributes["activation"]).collect();
        let sum: f64 = acts.iter().sum();
        let max = acts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(inner.globals["total"], sum);
        prop_assert_eq!(inner.globals["peak"], max);
        prop_assert!((inner.globals["mean"] - sum / acts.len() as f64).abs() < 1e-12);
        prop_assert_eq!(b.get("heart:total").unwrap(), sum);
        prop_assert_eq!(b.get("heart:peak").unwrap(), max);
    }

    #[test]
    fn pins_survive_update(seed in any::<u64>(), picks in prop::collection::vec((0usize..20, -10.0f64..10.0, 0u8..3), 1..6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = random_dag(&mut rng, 20, 40);
        let mut want = BTreeMap::new();
        for (i, v, k) in picks {
            let kind = [PinKind::Event, PinKind::Biology, PinKind::Utility][k as usize];
            let path = format!("n{i}:x");
            b.set_observation(&path, v, kind).unwrap();
            want.insert(path.clone(), b.pins[&format!("n{i}:x")].value);
        }
        update_block(&mut b, &no_inputs(), 3.0).unwrap();
        for (path, v) in want {
            prop_assert_eq!(b.get(&path).unwrap(), v);
        }
        prop_assert!(b.pins.is_empty());
    }

    #[test]
    fn settled_block_is_fixed_under_empty_update(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = random_dag(&mut rng, 15, 30);
        update_block(&mut b, &no_inputs(), 0.0).unwrap();
        let settled = b.clone();
        update_block(&mut b, &no_inputs(), 0.0).unwrap();
        prop_assert_eq!(b.flatten(), settled.flatten());
        prop_assert_eq!(&b.globals, &settled.globals);
    }

    #[test]
    fn activations_stay_clamped(seed in any::<u64>(), drive in prop::collection::vec(-1e3f64..1e3, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = GraphBlock::new("genes");
        for i in 0..4 {
            b.nodes.push(GraphNode::new(format!("ev{i}"), Layer::EventInterface).with_attr("level", 0.0));
        }
        for j in 0..10 {
            b.nodes.push(gene(&format!("g{j}"), "healthy-gene", 0.5).with_baseline("activation", rng.gen_range(-1.0..2.0)));
        }
        for k in 0..40 {
            let src = if rng.gen_bool(0.5) { format!("ev{}", rng.gen_range(0..4)) } else { format!("g{}", rng.gen_range(0..10)) };
            let attr = if src.starts_with("ev") { "level" } else { "activation" };
            b.edges.push(
                GraphEdge::new(format!("e{k}"), src, attr, format!("g{}", rng.gen_range(0..10)), "activation", Transform::SignedActivation)
                    .with_weight(rng.gen_range(0.0..3.0))
                    .with_sign(if rng.gen_bool(0.5) { -1 } else { 1 }),
            );
        }
        let ins: BTreeMap<String, f64> = drive.iter().enumerate().map(|(i, v)| (format!("ev{i}:level"), *v)).collect();
        update_block(&mut b, &ins, 1.0).unwrap();
        for n in b.nodes.iter().filter(|n| n.id.starts_with('g')) {
            let a = n.attributes["activation"];
            prop_assert!((0.0..=1.0).contains(&a), "{} = {}", n.id, a);
        }
    }

    #[test]
    fn copy_then_linear_equals_linear(x in -1e6f64..1e6, a in -100.0f64..100.0, c in -100.0f64..100.0) {
        let mut chain = GraphBlock::new("chain");
        for id in ["s", "m", "t"] {
            chain.nodes.push(GraphNode::new(id, Layer::System).with_attr("v", 0.0));
        }
        chain.edges.push(GraphEdge::new("sm", "s", "v", "m", "v", Transform::Copy));
        chain.edges.push(GraphEdge::new("mt", "m", "v", "t", "v", Transform::Linear { a, b: c }));
        let mut direct = GraphBlock::new("direct");
        for id in ["s", "t"] {
            direct.nodes.push(GraphNode::new(id, Layer::System).with_attr("v", 0.0));
        }
        direct.edges.push(GraphEdge::new("st", "s", "v", "t", "v", Transform::Linear { a, b: c }));
        let ins = inputs(&[("s:v", x)]);
        update_block(&mut chain, &ins, 0.0).unwrap();
        update_block(&mut direct, &ins, 0.0).unwrap();
        prop_assert_eq!(chain.get("t:v").unwrap(), direct.get("t:v").unwrap());
        prop_assert_eq!(direct.get("t:v").unwrap(), a * x + c);
    }
}

#[test]
fn identity_on_empty_update() {
    let mut b = cardiac_block(70.0, 60.0);
    update_block(&mut b, &no_inputs(), 0.0).unwrap();
    let before = b.clone();
    update_block(&mut b, &no_inputs(), 0.0).unwrap();
    assert_eq!(b, before);
}
