//! Exact evaluation of influence diagrams by node elimination.
//!
//! [`solve`] repeatedly applies the value-preserving transformations in
//! [`ops`] until only the value node remains, collecting the optimal rule of
//! each decision along the way. [`oracle`] evaluates the same diagrams by
//! brute-force policy enumeration and serves as an independent check.

mod ops;
pub mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diagram::{canonicalize, topological_order, validate, InfluenceDiagram, NodeKind};
use crate::error::{Error, Result};
use crate::table::{state_count, state_index};

pub use ops::{
    eliminate_barren, eliminate_chance, eliminate_decision, reverse_arc, TIE_TOLERANCE,
};
pub use oracle::{evaluate_policy, joint_distribution, solve_oracle};
pub(crate) use ops::strictly_better;

/// The chosen alternative of one decision for each of its information
/// states (row-major over `information`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub decision: String,
    pub information: Vec<String>,
    pub choices: Vec<usize>,
}

impl DecisionRule {
    /// Choice for the information state given as outcome indices.
    pub fn choice_at(&self, cards: &[usize], state: &[usize]) -> usize {
        self.choices[state_index(state, cards)]
    }
}

/// One rule per decision, in temporal order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub rules: Vec<DecisionRule>,
}

impl Policy {
    pub fn rule(&self, decision: &str) -> Option<&DecisionRule> {
        self.rules.iter().find(|r| r.decision == decision)
    }

    /// Choice of the temporally first decision in its first information
    /// state; `None` when there are no decisions.
    pub fn first_stage_choice(&self) -> Option<usize> {
        self.rules.first().map(|r| r.choices[0])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum TraceStep {
    BarrenRemoval { node: String },
    ArcReversal { from: String, to: String },
    ChanceRemoval { node: String },
    DecisionRemoval { node: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationTrace {
    pub steps: Vec<TraceStep>,
}

impl EliminationTrace {
    /// Counts of each step kind: (barren, reversals, chance, decision).
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        let mut c = (0, 0, 0, 0);
        for s in &self.steps {
            match s {
                TraceStep::BarrenRemoval { .. } => c.0 += 1,
                TraceStep::ArcReversal { .. } => c.1 += 1,
                TraceStep::ChanceRemoval { .. } => c.2 += 1,
                TraceStep::DecisionRemoval { .. } => c.3 += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub expected_utility: f64,
    pub policy: Policy,
    pub trace: EliminationTrace,
}

/// Rule for a decision that was removed as barren: it cannot affect value,
/// so every information state gets alternative 0.
fn default_rule(d: &InfluenceDiagram, decision: &str) -> DecisionRule {
    let information = d.node(decision).unwrap().predecessors().to_vec();
    let states = state_count(&d.cards(&information));
    DecisionRule {
        decision: decision.to_string(),
        information,
        choices: vec![0; states],
    }
}

struct Run {
    current: InfluenceDiagram,
    rules: BTreeMap<String, DecisionRule>,
    trace: EliminationTrace,
}

impl Run {
    fn strip_barren(&mut self) {
        let (next, removed) = ops::strip_barren(&self.current);
        for name in removed {
            if self.current.decision(&name).is_some() {
                let rule = default_rule(&self.current, &name);
                self.rules.insert(name.clone(), rule);
            }
            self.trace.steps.push(TraceStep::BarrenRemoval { node: name });
        }
        self.current = next;
    }

    fn finish(self, order: &[String]) -> SolveResult {
        let v = self.current.value_node().expect("value node survives elimination");
        debug_assert!(v.predecessors.is_empty());
        let mut rules = self.rules;
        let policy = Policy {
            rules: order.iter().filter_map(|d| rules.remove(d)).collect(),
        };
        SolveResult {
            expected_utility: v.utilities[0],
            policy,
            trace: self.trace,
        }
    }
}

/// Chance nodes whose only successor is the value node, sorted.
fn removable_chance(d: &InfluenceDiagram, value: &str) -> Vec<String> {
    d.names_of(NodeKind::Chance)
        .into_iter()
        .filter(|c| d.successors(c) == [value])
        .collect()
}

/// Chance predecessor of the value node to be turned into a removable node
/// by reversing its arcs: no decision may observe it. Fewest successors
/// first, then by name.
fn reversal_candidate(d: &InfluenceDiagram, value: &str) -> Option<String> {
    let v = d.value_node()?;
    let mut best: Option<(usize, String)> = None;
    for p in &v.predecessors {
        if d.chance(p).is_none() {
            continue;
        }
        let succ = d.successors(p);
        if succ.iter().any(|s| d.decision(s).is_some()) {
            continue;
        }
        if !succ.iter().any(|s| s != value) {
            continue;
        }
        let key = (succ.len(), p.clone());
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    }
    best.map(|(_, name)| name)
}

/// Optimal expected utility and policy of `d`.
///
/// The diagram is validated and canonicalized first, so policies are keyed
/// by the no-forgetting information sets. Elimination proceeds as: remove
/// barren nodes; sum out a chance node that only precedes the value node;
/// else maximize out the last decision if it observes everything the value
/// depends on; else reverse the arcs out of an unobserved chance
/// predecessor of the value node until it can be summed out.
pub fn solve(d: &InfluenceDiagram) -> Result<SolveResult> {
    let report = validate(d);
    if !report.is_valid() {
        return Err(Error::Invalid(report));
    }
    let canonical = canonicalize(d)?;
    let order = canonical.decision_order()?;
    let value = canonical.value_node().unwrap().name.clone();
    let n = canonical.nodes().len();
    let budget = 4 * n * n;

    let mut run = Run {
        current: canonical,
        rules: BTreeMap::new(),
        trace: EliminationTrace::default(),
    };
    let mut steps = 0;
    let tick = |steps: &mut usize| -> Result<()> {
        *steps += 1;
        if *steps > budget {
            Err(Error::Nontermination(budget))
        } else {
            Ok(())
        }
    };

    loop {
        tick(&mut steps)?;
        run.strip_barren();
        if run.current.value_node().unwrap().predecessors.is_empty() {
            return Ok(run.finish(&order));
        }

        if let Some(c) = removable_chance(&run.current, &value).into_iter().next() {
            run.current = eliminate_chance(&run.current, &c)?;
            run.trace.steps.push(TraceStep::ChanceRemoval { node: c });
            continue;
        }

        let last = order
            .iter()
            .rev()
            .find(|dec| run.current.decision(dec).is_some());
        if let Some(last) = last {
            if let Ok((next, rule)) = eliminate_decision(&run.current, last) {
                run.current = next;
                run.rules.insert(last.clone(), rule);
                run.trace
                    .steps
                    .push(TraceStep::DecisionRemoval { node: last.clone() });
                continue;
            }
        }

        let Some(c) = reversal_candidate(&run.current, &value) else {
            return Err(Error::Nontermination(budget));
        };
        loop {
            let topo = topological_order(&run.current)?;
            let succ = run.current.successors(&c);
            let next = topo
                .iter()
                .find(|n| succ.contains(n) && run.current.chance(n).is_some());
            let Some(next) = next.cloned() else { break };
            tick(&mut steps)?;
            run.current = reverse_arc(&run.current, &c, &next)?;
            run.trace.steps.push(TraceStep::ArcReversal {
                from: c.clone(),
                to: next,
            });
        }
    }
}

/// Re-applies `trace` to `d` step by step and returns the resulting
/// solution. Fails if any step is not applicable.
pub fn replay_trace(d: &InfluenceDiagram, trace: &EliminationTrace) -> Result<SolveResult> {
    let canonical = canonicalize(d)?;
    let order = canonical.decision_order()?;
    let mut run = Run {
        current: canonical,
        rules: BTreeMap::new(),
        trace: trace.clone(),
    };
    for step in &trace.steps {
        match step {
            TraceStep::BarrenRemoval { node } => {
                if run.current.decision(node).is_some() {
                    let rule = default_rule(&run.current, node);
                    run.rules.insert(node.clone(), rule);
                }
                run.current = ops::remove_barren(&run.current, node)?;
            }
            TraceStep::ArcReversal { from, to } => {
                run.current = reverse_arc(&run.current, from, to)?;
            }
            TraceStep::ChanceRemoval { node } => {
                run.current = eliminate_chance(&run.current, node)?;
            }
            TraceStep::DecisionRemoval { node } => {
                let (next, rule) = eliminate_decision(&run.current, node)?;
                run.current = next;
                run.rules.insert(node.clone(), rule);
            }
        }
    }
    if !run.current.value_node().unwrap().predecessors.is_empty() {
        return Err(Error::NotRemovable {
            node: run.current.value_node().unwrap().name.clone(),
            reason: "trace ends before the value node is isolated".into(),
        });
    }
    Ok(run.finish(&order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{DecisionNode, Node, Variable};
    use crate::fixtures;

    #[test]
    fn d1_treat() {
        let r = solve(&fixtures::d1()).unwrap();
        assert!((r.expected_utility - 60.0).abs() < 1e-12);
        assert_eq!(r.policy.rules.len(), 1);
        assert_eq!(r.policy.rules[0].choices, vec![0]);
        assert_eq!(
            r.trace.steps,
            vec![
                TraceStep::ChanceRemoval { node: "O".into() },
                TraceStep::DecisionRemoval { node: "D".into() },
            ]
        );
    }

    #[test]
    fn d2_without_information() {
        let r = solve(&fixtures::d2()).unwrap();
        assert!((r.expected_utility - 50.0).abs() < 1e-12);
        assert_eq!(r.policy.first_stage_choice(), Some(0));
    }

    #[test]
    fn d2_with_information() {
        let r = solve(&fixtures::d2_informed()).unwrap();
        assert!((r.expected_utility - 70.0).abs() < 1e-12);
        assert_eq!(r.policy.rules[0].information, ["S"]);
        assert_eq!(r.policy.rules[0].choices, vec![0, 1]);
    }

    #[test]
    fn irrelevant_decision_defaults_to_first_alternative() {
        let mut d = fixtures::d3();
        d.replace_node(Node::Decision(DecisionNode::new(
            Variable::new("Act", ["x", "y", "z"]).unwrap(),
            vec!["X".into()],
        )));
        let r = solve(&d).unwrap();
        assert!((r.expected_utility - 60.0).abs() < 1e-12);
        assert_eq!(r.policy.rules[0].decision, "Act");
        assert_eq!(r.policy.rules[0].choices, vec![0, 0]);
        assert!(r
            .trace
            .steps
            .contains(&TraceStep::BarrenRemoval { node: "Act".into() }));
    }

    #[test]
    fn chain_of_chance_nodes() {
        let r = solve(&fixtures::d3()).unwrap();
        assert!((r.expected_utility - 60.0).abs() < 1e-12);
        assert!(r.policy.rules.is_empty());
    }

    #[test]
    fn invalid_input_is_rejected() {
        let mut d = fixtures::d1();
        d.remove_node("V");
        assert_eq!(solve(&d).unwrap_err().code(), "NO_VALUE_NODE");
    }

    #[test]
    fn replay_reproduces_result() {
        for d in [fixtures::d1(), fixtures::d2(), fixtures::d2_informed(), fixtures::d3()] {
            let r = solve(&d).unwrap();
            assert_eq!(replay_trace(&d, &r.trace).unwrap(), r);
        }
    }

    #[test]
    fn replay_rejects_truncated_trace() {
        let d = fixtures::d1();
        let mut trace = solve(&d).unwrap().trace;
        trace.steps.pop();
        assert!(replay_trace(&d, &trace).is_err());
    }
}
