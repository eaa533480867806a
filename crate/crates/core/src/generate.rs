//! Random valid diagrams for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::diagram::{canonicalize, ChanceNode, DecisionNode, InfluenceDiagram, Node, ValueNode, Variable};
use crate::table::state_count;

#[derive(Debug, Clone)]
pub struct RandomDiagramConfig {
    pub min_chance: usize,
    pub max_chance: usize,
    pub max_decisions: usize,
    pub outcomes: usize,
    /// Probability of each forward arc between non-value nodes.
    pub arc_probability: f64,
    /// Probability that a node precedes the value node.
    pub value_arc_probability: f64,
    /// Upper bound on the number of deterministic policies after
    /// canonicalization; larger draws are discarded.
    pub max_policies: u128,
    pub utility_range: (f64, f64),
    /// Return the diagram with no-forgetting arcs added.
    pub canonical: bool,
}

impl Default for RandomDiagramConfig {
    fn default() -> Self {
        RandomDiagramConfig {
            min_chance: 1,
            max_chance: 4,
            max_decisions: 2,
            outcomes: 2,
            arc_probability: 0.4,
            value_arc_probability: 0.6,
            max_policies: 4096,
            utility_range: (0.0, 100.0),
            canonical: true,
        }
    }
}

fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn policy_count(d: &InfluenceDiagram) -> u128 {
    let mut count: u128 = 1;
    for n in d.nodes() {
        if let Node::Decision(dec) = n {
            let states = state_count(&d.cards(&dec.predecessors));
            for _ in 0..states {
                count = count.saturating_mul(dec.variable.cardinality() as u128);
            }
        }
    }
    count
}

/// Draws a valid diagram: chance nodes `C0..`, decisions `D0..` (in
/// temporal order) and value node `V`.
pub fn random_diagram<R: Rng>(rng: &mut R, config: &RandomDiagramConfig) -> InfluenceDiagram {
    loop {
        let d = draw(rng, config);
        let d = if config.canonical {
            canonicalize(&d).expect("generated diagrams are regular")
        } else {
            d
        };
        if policy_count(&canonicalize(&d).unwrap()) <= config.max_policies {
            return d;
        }
    }
}

fn draw<R: Rng>(rng: &mut R, config: &RandomDiagramConfig) -> InfluenceDiagram {
    let n_chance = rng.random_range(config.min_chance..=config.max_chance);
    let n_dec = rng.random_range(0..=config.max_decisions);
    let outcomes: Vec<String> = (0..config.outcomes).map(|k| format!("s{k}")).collect();

    let mut order: Vec<String> = (0..n_chance)
        .map(|i| format!("C{i}"))
        .chain((0..n_dec).map(|i| format!("D{i}")))
        .collect();
    order.shuffle(rng);
    // decisions keep their temporal order within the shuffle
    let slots: Vec<usize> = (0..order.len()).filter(|&i| order[i].starts_with('D')).collect();
    for (k, &slot) in slots.iter().enumerate() {
        order[slot] = format!("D{k}");
    }

    let mut preds: Vec<Vec<String>> = vec![Vec::new(); order.len()];
    for b in 0..order.len() {
        for a in 0..b {
            let chained = order[a].starts_with('D')
                && order[b].starts_with('D')
                && slots.iter().position(|&s| s == a).unwrap() + 1
                    == slots.iter().position(|&s| s == b).unwrap();
            if chained || rng.random_bool(config.arc_probability) {
                preds[b].push(order[a].clone());
            }
        }
    }

    let mut value_preds: Vec<String> = order
        .iter()
        .filter(|_| rng.random_bool(config.value_arc_probability))
        .cloned()
        .collect();
    if value_preds.is_empty() {
        value_preds.push(order[rng.random_range(0..order.len())].clone());
    }

    let card = config.outcomes;
    let mut nodes: Vec<Node> = Vec::new();
    for (name, preds) in order.iter().zip(preds) {
        let variable = Variable::new(name.clone(), outcomes.clone()).unwrap();
        if name.starts_with('D') {
            nodes.push(DecisionNode::new(variable, preds).into());
        } else {
            let rows = (0..card.pow(preds.len() as u32))
                .map(|_| random_row(rng, card))
                .collect();
            nodes.push(ChanceNode::new(variable, preds, rows).into());
        }
    }
    let (lo, hi) = config.utility_range;
    let utilities = (0..card.pow(value_preds.len() as u32))
        .map(|_| rng.random_range(lo..hi))
        .collect();
    nodes.push(ValueNode::new("V", value_preds, utilities).into());
    InfluenceDiagram::new("random", nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::validate;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn draws_are_valid_and_bounded() {
        let mut rng = StdRng::seed_from_u64(7);
        let config = RandomDiagramConfig::default();
        for _ in 0..200 {
            let d = random_diagram(&mut rng, &config);
            assert!(validate(&d).is_valid());
            assert!(policy_count(&d) <= config.max_policies);
            assert_eq!(canonicalize(&d).unwrap(), d);
        }
    }

    #[test]
    fn same_seed_same_diagram() {
        let config = RandomDiagramConfig::default();
        let a = random_diagram(&mut StdRng::seed_from_u64(3), &config);
        let b = random_diagram(&mut StdRng::seed_from_u64(3), &config);
        assert_eq!(a, b);
    }
}
