//! Value-preserving transformations of an influence diagram: arc reversal
//! and the removal of barren, chance and decision nodes.

use std::collections::BTreeSet;

use super::DecisionRule;
use crate::diagram::{ConditionalTable, InfluenceDiagram, Node, NodeKind};
use crate::error::{Error, Result};
use crate::table::{state_count, Projection, States};

/// Relative slack under which two utilities count as tied during maximization.
pub const TIE_TOLERANCE: f64 = 1e-13;

/// Whether `candidate` beats `best` by more than rounding noise.
pub(crate) fn strictly_better(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_TOLERANCE * (1.0 + best.abs().max(candidate.abs()))
}

fn union(first: &[String], second: &[String], exclude: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for name in first.iter().chain(second) {
        if !exclude.contains(&name.as_str()) && !out.contains(name) {
            out.push(name.clone());
        }
    }
    out
}

fn projection(d: &InfluenceDiagram, scope: &[String], target: &[String]) -> Projection {
    Projection::new(scope, target, |n| d.card(n)).expect("target variables must lie in scope")
}

fn value_name(d: &InfluenceDiagram) -> Result<String> {
    d.value_node()
        .map(|v| v.name.clone())
        .ok_or_else(|| Error::NotRemovable {
            node: d.name().to_string(),
            reason: "diagram has no value node".into(),
        })
}

/// Reverses the arc `from -> to` between two chance nodes using Bayes' rule.
///
/// Both nodes end up conditioned on the union of their old predecessors;
/// `from` additionally on `to`. The joint distribution is unchanged. Where
/// the new marginal of `to` is zero the posterior row of `from` is uniform.
pub fn reverse_arc(d: &InfluenceDiagram, from: &str, to: &str) -> Result<InfluenceDiagram> {
    let (Some(i), Some(j)) = (d.chance(from), d.chance(to)) else {
        let culprit = if d.chance(from).is_none() { from } else { to };
        return Err(Error::NotChance(culprit.to_string()));
    };
    if !j.predecessors.iter().any(|p| p == from) {
        return Err(Error::NotRemovable {
            node: format!("{from}->{to}"),
            reason: "arc does not exist".into(),
        });
    }
    let other_path = d
        .successors(from)
        .iter()
        .filter(|s| s.as_str() != to)
        .any(|s| d.has_path(s, to));
    if other_path {
        return Err(Error::ReversalPath {
            from: from.to_string(),
            to: to.to_string(),
        });
    }

    let new_to_preds = union(&j.predecessors, &i.predecessors, &[from, to]);
    let mut new_from_preds = new_to_preds.clone();
    new_from_preds.push(to.to_string());

    // scope: shared predecessors, then from, then to
    let mut scope = new_to_preds.clone();
    scope.push(from.to_string());
    scope.push(to.to_string());
    let from_pos = scope.len() - 2;
    let to_pos = scope.len() - 1;
    let cards = d.cards(&scope);
    let i_row = projection(d, &scope, &i.predecessors);
    let j_row = projection(d, &scope, &j.predecessors);
    let ci = i.variable.cardinality();
    let cj = j.variable.cardinality();

    let shared_cards = d.cards(&new_to_preds);
    let mut to_rows = vec![vec![0.0; cj]; state_count(&shared_cards)];
    let mut from_rows = vec![vec![0.0; ci]; state_count(&shared_cards) * cj];

    let mut state = vec![0usize; cards.len()];
    for (u, shared) in States::new(&shared_cards).enumerate() {
        state[..shared.len()].copy_from_slice(&shared);
        // joint over (from, to) given the shared predecessors
        let mut joint = vec![vec![0.0; cj]; ci];
        for (xi, joint_row) in joint.iter_mut().enumerate() {
            state[from_pos] = xi;
            let pi = i.table.rows()[i_row.index(&state)][xi];
            for (xj, cell) in joint_row.iter_mut().enumerate() {
                state[to_pos] = xj;
                *cell = pi * j.table.rows()[j_row.index(&state)][xj];
            }
        }
        for xj in 0..cj {
            let marginal: f64 = joint.iter().map(|r| r[xj]).sum();
            to_rows[u][xj] = marginal;
            let posterior = &mut from_rows[u * cj + xj];
            if marginal > 0.0 {
                for xi in 0..ci {
                    posterior[xi] = joint[xi][xj] / marginal;
                }
            } else {
                posterior.fill(1.0 / ci as f64);
            }
        }
    }

    let mut out = d.clone();
    if let Some(Node::Chance(n)) = out.node_mut(to) {
        n.predecessors = new_to_preds;
        n.table = ConditionalTable::new(to_rows);
    }
    if let Some(Node::Chance(n)) = out.node_mut(from) {
        n.predecessors = new_from_preds;
        n.table = ConditionalTable::new(from_rows);
    }
    Ok(out)
}

/// Names of non-value nodes without successors, sorted.
pub(crate) fn barren_nodes(d: &InfluenceDiagram) -> Vec<String> {
    let mut has_succ: BTreeSet<&str> = BTreeSet::new();
    for n in d.nodes() {
        for p in n.predecessors() {
            has_succ.insert(p);
        }
    }
    let mut out: Vec<String> = d
        .nodes()
        .iter()
        .filter(|n| n.kind() != NodeKind::Value && !has_succ.contains(n.name()))
        .map(|n| n.name().to_string())
        .collect();
    out.sort();
    out
}

/// Removes a single barren node.
pub(crate) fn remove_barren(d: &InfluenceDiagram, node: &str) -> Result<InfluenceDiagram> {
    if !barren_nodes(d).iter().any(|b| b == node) {
        return Err(Error::NotRemovable {
            node: node.to_string(),
            reason: "node is not barren".into(),
        });
    }
    let mut out = d.clone();
    out.remove_node(node);
    Ok(out)
}

/// Repeatedly removes barren nodes, returning the result and the removed
/// names in removal order.
pub(crate) fn strip_barren(d: &InfluenceDiagram) -> (InfluenceDiagram, Vec<String>) {
    let mut out = d.clone();
    let mut removed = Vec::new();
    loop {
        let barren = barren_nodes(&out);
        if barren.is_empty() {
            return (out, removed);
        }
        for name in barren {
            out.remove_node(&name);
            removed.push(name);
        }
    }
}

/// Deletes non-value nodes with no successors until none remain.
pub fn eliminate_barren(d: &InfluenceDiagram) -> InfluenceDiagram {
    strip_barren(d).0
}

/// Sums a chance node whose only successor is the value node into the
/// utility table.
pub fn eliminate_chance(d: &InfluenceDiagram, node: &str) -> Result<InfluenceDiagram> {
    let c = d.chance(node).ok_or_else(|| Error::NotChance(node.to_string()))?;
    let value = value_name(d)?;
    let succ = d.successors(node);
    if succ != [value.clone()] {
        return Err(Error::NotRemovable {
            node: node.to_string(),
            reason: format!("successors are {succ:?}, expected only `{value}`"),
        });
    }
    let v = d.value_node().unwrap();
    let new_preds = union(&v.predecessors, &c.predecessors, &[node]);
    let mut scope = new_preds.clone();
    scope.push(node.to_string());
    let c_pos = scope.len() - 1;
    let c_row = projection(d, &scope, &c.predecessors);
    let v_row = projection(d, &scope, &v.predecessors);

    let new_cards = d.cards(&new_preds);
    let mut utilities = Vec::with_capacity(state_count(&new_cards));
    let mut state = vec![0usize; scope.len()];
    for w in States::new(&new_cards) {
        state[..w.len()].copy_from_slice(&w);
        let mut expectation = 0.0;
        for xc in 0..c.variable.cardinality() {
            state[c_pos] = xc;
            let p = c.table.rows()[c_row.index(&state)][xc];
            if p != 0.0 {
                expectation += p * v.utilities[v_row.index(&state)];
            }
        }
        utilities.push(expectation);
    }

    let mut out = d.clone();
    out.remove_node(node);
    let v = out.value_node_mut().unwrap();
    v.predecessors = new_preds;
    v.utilities = utilities;
    Ok(out)
}

/// Maximizes the value node over a decision whose only successor is the
/// value node and which observes every other predecessor of the value node.
///
/// Returns the reduced diagram and the decision's optimal rule over its
/// information states; ties go to the lowest alternative index.
pub fn eliminate_decision(
    d: &InfluenceDiagram,
    node: &str,
) -> Result<(InfluenceDiagram, DecisionRule)> {
    let dec = d
        .decision(node)
        .ok_or_else(|| Error::NotDecision(node.to_string()))?;
    let value = value_name(d)?;
    let succ = d.successors(node);
    if succ != [value.clone()] {
        return Err(Error::NotRemovable {
            node: node.to_string(),
            reason: format!("successors are {succ:?}, expected only `{value}`"),
        });
    }
    let v = d.value_node().unwrap();
    if let Some(unseen) = v
        .predecessors
        .iter()
        .find(|p| p.as_str() != node && !dec.predecessors.contains(p))
    {
        return Err(Error::NotRemovable {
            node: node.to_string(),
            reason: format!("`{unseen}` affects value but is not observed"),
        });
    }

    let new_preds: Vec<String> = v
        .predecessors
        .iter()
        .filter(|p| p.as_str() != node)
        .cloned()
        .collect();
    let mut scope = new_preds.clone();
    scope.push(node.to_string());
    let d_pos = scope.len() - 1;
    let v_row = projection(d, &scope, &v.predecessors);
    let alternatives = dec.variable.cardinality();

    let new_cards = d.cards(&new_preds);
    let mut utilities = Vec::with_capacity(state_count(&new_cards));
    let mut best_alt = Vec::with_capacity(state_count(&new_cards));
    let mut state = vec![0usize; scope.len()];
    for w in States::new(&new_cards) {
        state[..w.len()].copy_from_slice(&w);
        state[d_pos] = 0;
        let mut best = v.utilities[v_row.index(&state)];
        let mut arg = 0;
        for alt in 1..alternatives {
            state[d_pos] = alt;
            let u = v.utilities[v_row.index(&state)];
            if strictly_better(u, best) {
                best = u;
                arg = alt;
            }
        }
        utilities.push(best);
        best_alt.push(arg);
    }

    // spread the choice over the decision's full information set
    let info = dec.predecessors.clone();
    let to_reduced = projection(d, &info, &new_preds);
    let choices = States::new(&d.cards(&info))
        .map(|s| best_alt[to_reduced.index(&s)])
        .collect();

    let mut out = d.clone();
    out.remove_node(node);
    let v = out.value_node_mut().unwrap();
    v.predecessors = new_preds;
    v.utilities = utilities;
    Ok((
        out,
        DecisionRule {
            decision: node.to_string(),
            information: info,
            choices,
        },
    ))
}
