//! Brute-force evaluation by enumerating every deterministic policy and
//! every joint chance state. Shares no code with the elimination path.

use std::collections::BTreeMap;

use super::{DecisionRule, EliminationTrace, Policy, SolveResult};
use crate::diagram::{canonicalize, topological_order, InfluenceDiagram, Node};
use crate::error::{Error, Result};
use crate::table::{state_count, States};

pub const MAX_POLICIES: u128 = 1_000_000;
pub const MAX_CHANCE_STATES: u128 = 100_000;

/// Strides to turn a full assignment into a table row.
#[derive(Debug, Clone)]
struct Parents {
    indices: Vec<usize>,
    strides: Vec<usize>,
}

impl Parents {
    fn new(d: &InfluenceDiagram, preds: &[String], position: &BTreeMap<String, usize>) -> Self {
        let indices: Vec<usize> = preds.iter().map(|p| position[p]).collect();
        let mut strides = vec![1; preds.len()];
        for k in (0..preds.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * d.card(&preds[k + 1]);
        }
        Parents { indices, strides }
    }

    fn row(&self, assignment: &[usize]) -> usize {
        self.indices
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| assignment[i] * s)
            .sum()
    }
}

/// A diagram flattened to index form for fast repeated evaluation.
struct Compiled<'a> {
    chance: Vec<(usize, Parents, &'a [Vec<f64>])>,
    chance_cards: Vec<usize>,
    decisions: Vec<(usize, Parents, String, usize)>,
    info_cards: Vec<Vec<usize>>,
    information: Vec<Vec<String>>,
    value: (Parents, &'a [f64]),
    width: usize,
}

impl<'a> Compiled<'a> {
    fn new(d: &'a InfluenceDiagram) -> Result<Self> {
        let order = topological_order(d)?;
        let position: BTreeMap<String, usize> = order
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        let mut chance = Vec::new();
        let mut chance_cards = Vec::new();
        let mut decisions = Vec::new();
        let mut info_cards = Vec::new();
        let mut information = Vec::new();
        let mut value = None;
        for name in &order {
            match d.node(name).unwrap() {
                Node::Chance(c) => {
                    chance.push((
                        position[name],
                        Parents::new(d, &c.predecessors, &position),
                        c.table.rows(),
                    ));
                    chance_cards.push(c.variable.cardinality());
                }
                Node::Decision(dec) => {
                    decisions.push((
                        position[name],
                        Parents::new(d, &dec.predecessors, &position),
                        name.clone(),
                        dec.variable.cardinality(),
                    ));
                    info_cards.push(d.cards(&dec.predecessors));
                    information.push(dec.predecessors.clone());
                }
                Node::Value(v) => {
                    value = Some((Parents::new(d, &v.predecessors, &position), &v.utilities[..]));
                }
            }
        }
        Ok(Compiled {
            chance,
            chance_cards,
            decisions,
            info_cards,
            information,
            value: value.expect("validated diagram has a value node"),
            width: order.len(),
        })
    }

    /// Expected utility of the policy given as one choice vector per decision.
    fn expected_utility(&self, choices: &[Vec<usize>]) -> f64 {
        let mut assignment = vec![0usize; self.width];
        let mut total = 0.0;
        for chance_state in States::new(&self.chance_cards) {
            for ((pos, _, _), &s) in self.chance.iter().zip(&chance_state) {
                assignment[*pos] = s;
            }
            // decisions are in temporal order; their information is set by now
            for ((pos, parents, _, _), rule) in self.decisions.iter().zip(choices) {
                assignment[*pos] = rule[parents.row(&assignment)];
            }
            let mut p = 1.0;
            for (pos, parents, rows) in &self.chance {
                p *= rows[parents.row(&assignment)][assignment[*pos]];
                if p == 0.0 {
                    break;
                }
            }
            if p != 0.0 {
                total += p * self.value.1[self.value.0.row(&assignment)];
            }
        }
        total
    }
}

fn check_size(c: &Compiled) -> Result<()> {
    let joint: u128 = c.chance_cards.iter().map(|&k| k as u128).product();
    if joint > MAX_CHANCE_STATES {
        return Err(Error::TooLarge {
            what: "joint chance state",
            count: joint,
            limit: MAX_CHANCE_STATES,
        });
    }
    let mut policies: u128 = 1;
    for ((_, _, _, alts), cards) in c.decisions.iter().zip(&c.info_cards) {
        for _ in 0..state_count(cards) {
            policies = policies.saturating_mul(*alts as u128);
            if policies > MAX_POLICIES {
                return Err(Error::TooLarge {
                    what: "policy",
                    count: policies,
                    limit: MAX_POLICIES,
                });
            }
        }
    }
    Ok(())
}

/// Optimal policy by exhaustive enumeration. Ties keep the lexicographically
/// first policy (decisions in temporal order, information states row-major).
pub fn solve_oracle(d: &InfluenceDiagram) -> Result<SolveResult> {
    let d = canonicalize(d)?;
    let c = Compiled::new(&d)?;
    check_size(&c)?;

    let mut choices: Vec<Vec<usize>> = c
        .info_cards
        .iter()
        .map(|cards| vec![0; state_count(cards)])
        .collect();
    let alts: Vec<usize> = c.decisions.iter().map(|x| x.3).collect();
    let mut best = (c.expected_utility(&choices), choices.clone());
    while advance(&mut choices, &alts) {
        let eu = c.expected_utility(&choices);
        if super::ops::strictly_better(eu, best.0) {
            best = (eu, choices.clone());
        }
    }

    let rules = c
        .decisions
        .iter()
        .zip(best.1)
        .zip(&c.information)
        .map(|(((_, _, name, _), choices), info)| DecisionRule {
            decision: name.clone(),
            information: info.clone(),
            choices,
        })
        .collect();
    Ok(SolveResult {
        expected_utility: best.0,
        policy: Policy { rules },
        trace: EliminationTrace::default(),
    })
}

/// Odometer over all policies; the last state of the last decision moves fastest.
fn advance(choices: &mut [Vec<usize>], alts: &[usize]) -> bool {
    for (rule, &a) in choices.iter_mut().zip(alts).rev() {
        for slot in rule.iter_mut().rev() {
            *slot += 1;
            if *slot < a {
                return true;
            }
            *slot = 0;
        }
    }
    false
}

/// Expected utility of following `policy` in `d`.
///
/// The policy must cover every decision of the canonicalized diagram with
/// matching information sets.
pub fn evaluate_policy(d: &InfluenceDiagram, policy: &Policy) -> Result<f64> {
    let d = canonicalize(d)?;
    let c = Compiled::new(&d)?;
    let mut choices = Vec::with_capacity(c.decisions.len());
    for ((_, _, name, alts), info) in c.decisions.iter().zip(&c.information) {
        let rule = policy.rule(name).ok_or_else(|| Error::NotRemovable {
            node: name.clone(),
            reason: "policy has no rule for this decision".into(),
        })?;
        let expected = state_count(&d.cards(info));
        if &rule.information != info || rule.choices.len() != expected {
            return Err(Error::NotRemovable {
                node: name.clone(),
                reason: "policy rule does not match the information set".into(),
            });
        }
        if rule.choices.iter().any(|&k| k >= *alts) {
            return Err(Error::NotRemovable {
                node: name.clone(),
                reason: "alternative index out of range".into(),
            });
        }
        choices.push(rule.choices.clone());
    }
    Ok(c.expected_utility(&choices))
}

/// Joint distribution of all chance nodes (sorted by name, row-major) with
/// each decision fixed to the given alternative.
pub fn joint_distribution(
    d: &InfluenceDiagram,
    decisions: &BTreeMap<String, usize>,
) -> Result<Vec<f64>> {
    let order = topological_order(d)?;
    let mut chance: Vec<String> = order
        .iter()
        .filter(|n| d.chance(n).is_some())
        .cloned()
        .collect();
    chance.sort();
    let cards = d.cards(&chance);
    let mut out = Vec::with_capacity(state_count(&cards));
    let lookup = |name: &str, state: &[usize]| -> usize {
        match chance.iter().position(|c| c == name) {
            Some(i) => state[i],
            None => decisions[name],
        }
    };
    for state in States::new(&cards) {
        let mut p = 1.0;
        for (name, &s) in chance.iter().zip(&state) {
            let node = d.chance(name).unwrap();
            let row_labels: Vec<usize> = node
                .predecessors
                .iter()
                .map(|pred| lookup(pred, &state))
                .collect();
            let row = crate::table::state_index(&row_labels, &d.cards(&node.predecessors));
            p *= node.table.rows()[row][s];
        }
        out.push(p);
    }
    Ok(out)
}
