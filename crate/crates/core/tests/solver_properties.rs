use std::collections::BTreeMap;

use dw_core::generate::{random_diagram, RandomDiagramConfig};
use dw_core::solver::{
    eliminate_barren, eliminate_chance, joint_distribution, replay_trace, reverse_arc,
};
use dw_core::table::{Projection, States};
use dw_core::{
    canonicalize, evaluate_policy, solve, solve_oracle, ChanceNode, InfluenceDiagram, Node,
    ValueNode, Variable,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn decisions(d: &InfluenceDiagram) -> Vec<(String, usize)> {
    d.nodes()
        .iter()
        .filter_map(|n| match n {
            Node::Decision(dec) => Some((dec.variable.name().to_string(), dec.variable.cardinality())),
            _ => None,
        })
        .collect()
}

/// Every assignment of alternatives to the decisions of `d`.
fn decision_assignments(d: &InfluenceDiagram) -> Vec<BTreeMap<String, usize>> {
    let decs = decisions(d);
    let cards: Vec<usize> = decs.iter().map(|x| x.1).collect();
    States::new(&cards)
        .map(|s| decs.iter().map(|x| x.0.clone()).zip(s).collect())
        .collect()
}

/// Largest entry difference between the CPT of `name` in `a` and in `b`,
/// where `b`'s predecessors may be a superset of `a`'s.
fn table_distance(a: &InfluenceDiagram, b: &InfluenceDiagram, name: &str) -> f64 {
    let (old, new) = (a.chance(name).unwrap(), b.chance(name).unwrap());
    let card = |n: &str| b.cardinality(n).unwrap();
    let projection = Projection::new(&new.predecessors, &old.predecessors, card).unwrap();
    let cards: Vec<usize> = new.predecessors.iter().map(|p| card(p)).collect();
    States::new(&cards)
        .enumerate()
        .flat_map(|(row, state)| {
            let old_row = &old.table.rows()[projection.index(&state)];
            let new_row = &new.table.rows()[row];
            old_row.iter().zip(new_row).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

#[test]
fn solve_matches_oracle() {
    let mut rng = StdRng::seed_from_u64(11);
    let config = RandomDiagramConfig::default();
    for _ in 0..100 {
        let d = random_diagram(&mut rng, &config);
        let fast = solve(&d).unwrap();
        let slow = solve_oracle(&d).unwrap();
        assert!((fast.expected_utility - slow.expected_utility).abs() <= 1e-9);
        let induced = evaluate_policy(&d, &fast.policy).unwrap();
        assert!((induced - fast.expected_utility).abs() <= 1e-9);
        assert_eq!(replay_trace(&d, &fast.trace).unwrap(), fast);
    }
}

#[test]
fn joint_is_a_distribution_for_every_decision_assignment() {
    let mut rng = StdRng::seed_from_u64(12);
    let config = RandomDiagramConfig {
        canonical: false,
        ..Default::default()
    };
    for _ in 0..50 {
        let d = random_diagram(&mut rng, &config);
        for fixed in decision_assignments(&d) {
            let joint = joint_distribution(&d, &fixed).unwrap();
            assert!((joint.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn canonicalize_is_idempotent_and_preserves_joint() {
    let mut rng = StdRng::seed_from_u64(13);
    let config = RandomDiagramConfig {
        canonical: false,
        max_policies: u128::MAX,
        ..Default::default()
    };
    for _ in 0..100 {
        let d = random_diagram(&mut rng, &config);
        let c = canonicalize(&d).unwrap();
        assert_eq!(canonicalize(&c).unwrap(), c);
        for fixed in decision_assignments(&d) {
            assert_eq!(
                joint_distribution(&d, &fixed).unwrap(),
                joint_distribution(&c, &fixed).unwrap()
            );
        }
        for n in d.nodes() {
            if let Node::Chance(ch) = n {
                assert_eq!(c.chance(ch.variable.name()), Some(ch));
            }
        }
        assert_eq!(c.value_node(), d.value_node());
    }
}

#[test]
fn reversal_preserves_joint_and_double_reversal_restores() {
    let mut rng = StdRng::seed_from_u64(14);
    let config = RandomDiagramConfig {
        min_chance: 3,
        max_chance: 3,
        max_decisions: 1,
        arc_probability: 0.6,
        ..Default::default()
    };
    let mut reversals = 0;
    for _ in 0..100 {
        let d = random_diagram(&mut rng, &config);
        for n in d.nodes() {
            let Node::Chance(to) = n else { continue };
            for from in &to.predecessors {
                let Ok(r) = reverse_arc(&d, from, to.variable.name()) else {
                    continue;
                };
                reversals += 1;
                let back = reverse_arc(&r, to.variable.name(), from).unwrap();
                for name in [from.as_str(), to.variable.name()] {
                    assert!(table_distance(&d, &back, name) <= 1e-12);
                }
                for fixed in decision_assignments(&d) {
                    let before = joint_distribution(&d, &fixed).unwrap();
                    let after = joint_distribution(&r, &fixed).unwrap();
                    for (a, b) in before.iter().zip(&after) {
                        assert!((a - b).abs() <= 1e-12);
                    }
                }
            }
        }
    }
    assert!(reversals > 50);
}

#[test]
fn barren_injection_keeps_value() {
    let mut rng = StdRng::seed_from_u64(15);
    let config = RandomDiagramConfig::default();
    for _ in 0..50 {
        let d = random_diagram(&mut rng, &config);
        let base = solve(&d).unwrap().expected_utility;
        let mut nodes = d.nodes().to_vec();
        let parent = nodes[0].name().to_string();
        let parent_card = d.cardinality(&parent).unwrap_or(1);
        nodes.push(
            ChanceNode::new(
                Variable::new("Zbarren", ["a", "b"]).unwrap(),
                vec![parent],
                vec![vec![0.3, 0.7]; parent_card],
            )
            .into(),
        );
        let injected = InfluenceDiagram::new("injected", nodes);
        assert_eq!(solve(&injected).unwrap().expected_utility, base);
        assert_eq!(eliminate_barren(&injected).nodes(), eliminate_barren(&d).nodes());
    }
}

#[test]
fn affine_utility_transform() {
    let mut rng = StdRng::seed_from_u64(16);
    let config = RandomDiagramConfig::default();
    for _ in 0..50 {
        let d = random_diagram(&mut rng, &config);
        let base = solve(&d).unwrap();
        for a in [0.5, 2.0, 10.0] {
            for b in [-5.0, 0.0, 7.0] {
                let mut nodes = d.nodes().to_vec();
                for n in &mut nodes {
                    if let Node::Value(v) = n {
                        for u in &mut v.utilities {
                            *u = a * *u + b;
                        }
                    }
                }
                let t = solve(&InfluenceDiagram::new("t", nodes)).unwrap();
                assert_eq!(t.policy, base.policy);
                assert!((t.expected_utility - (a * base.expected_utility + b)).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn information_never_hurts() {
    let mut rng = StdRng::seed_from_u64(17);
    let config = RandomDiagramConfig::default();
    let mut checked = 0;
    for _ in 0..100 {
        let d = random_diagram(&mut rng, &config);
        let base = solve(&d).unwrap().expected_utility;
        for (dec, _) in decisions(&d) {
            for c in d.nodes().iter().filter_map(|n| match n {
                Node::Chance(c) => Some(c.variable.name().to_string()),
                _ => None,
            }) {
                if d.has_path(&dec, &c) || d.node(&dec).unwrap().predecessors().contains(&c) {
                    continue;
                }
                let mut nodes = d.nodes().to_vec();
                for n in &mut nodes {
                    if let Node::Decision(x) = n {
                        if x.variable.name() == dec {
                            x.predecessors.push(c.clone());
                        }
                    }
                }
                let informed = InfluenceDiagram::new("informed", nodes);
                let eu = solve(&informed).unwrap().expected_utility;
                assert!(eu >= base - 1e-9, "{eu} < {base}");
                checked += 1;
            }
        }
    }
    assert!(checked > 20);
}

#[test]
fn solve_is_deterministic() {
    let mut rng = StdRng::seed_from_u64(18);
    let config = RandomDiagramConfig::default();
    for _ in 0..30 {
        let d = random_diagram(&mut rng, &config);
        assert_eq!(solve(&d).unwrap(), solve(&d.clone()).unwrap());
    }
}

#[test]
fn uniform_chance_removal_is_the_mean() {
    let mut rng = StdRng::seed_from_u64(19);
    for _ in 0..20 {
        let a: f64 = rng.random_range(-100.0..100.0);
        let b: f64 = rng.random_range(-100.0..100.0);
        let d = InfluenceDiagram::new(
            "uniform",
            vec![
                ChanceNode::new(Variable::new("C", ["c0", "c1"]).unwrap(), vec![], vec![vec![0.5, 0.5]])
                    .into(),
                ValueNode::new("V", vec!["C".into()], vec![a, b]).into(),
            ],
        );
        let out = eliminate_chance(&d, "C").unwrap();
        assert_eq!(out.value_node().unwrap().utilities, vec![(a + b) / 2.0]);
    }
}
