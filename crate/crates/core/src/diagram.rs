//! Influence-diagram data model, validation and canonical form.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{format_row_key, state_at, state_count};

/// Tolerance on the sum of a probability row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Entries within this distance outside `[0, 1]` are clamped rather than rejected.
pub const ENTRY_TOLERANCE: f64 = 1e-12;

/// A discrete variable: a name plus an ordered list of distinct outcome labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawVariable")]
pub struct Variable {
    name: String,
    outcomes: Vec<String>,
}

#[derive(Deserialize)]
struct RawVariable {
    name: String,
    outcomes: Vec<String>,
}

impl TryFrom<RawVariable> for Variable {
    type Error = Error;

    fn try_from(raw: RawVariable) -> Result<Self> {
        Variable::new(raw.name, raw.outcomes)
    }
}

impl Variable {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        outcomes: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let name = name.into();
        let outcomes: Vec<String> = outcomes.into_iter().map(Into::into).collect();
        let bad = |reason: &str| Error::BadVariable {
            name: name.clone(),
            reason: reason.to_string(),
        };
        if name.is_empty() {
            return Err(bad("name is empty"));
        }
        if outcomes.is_empty() {
            return Err(bad("no outcomes"));
        }
        if outcomes.iter().any(String::is_empty) {
            return Err(bad("empty outcome label"));
        }
        let distinct: BTreeSet<&String> = outcomes.iter().collect();
        if distinct.len() != outcomes.len() {
            return Err(bad("duplicate outcome label"));
        }
        Ok(Variable { name, outcomes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn cardinality(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcome_index(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == label)
    }
}

/// Probability rows of a chance node, one per predecessor state in
/// row-major order, one entry per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionalTable {
    rows: Vec<Vec<f64>>,
}

impl ConditionalTable {
    /// Entries within [`ENTRY_TOLERANCE`] of `[0, 1]` are clamped into it;
    /// anything further out is kept as-is and reported by [`validate`].
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|row| row.into_iter().map(clamp_entry).collect())
            .collect();
        ConditionalTable { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> Option<&[f64]> {
        self.rows.get(index).map(Vec::as_slice)
    }

    pub(crate) fn rows_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.rows
    }
}

fn clamp_entry(p: f64) -> f64 {
    if (-ENTRY_TOLERANCE..0.0).contains(&p) {
        0.0
    } else if p > 1.0 && p <= 1.0 + ENTRY_TOLERANCE {
        1.0
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceNode {
    pub variable: Variable,
    pub predecessors: Vec<String>,
    pub table: ConditionalTable,
}

impl ChanceNode {
    pub fn new(variable: Variable, predecessors: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        ChanceNode {
            variable,
            predecessors,
            table: ConditionalTable::new(rows),
        }
    }
}

/// A choice; the outcomes of its variable are the alternatives and its
/// predecessors are what is known when the choice is made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub variable: Variable,
    pub predecessors: Vec<String>,
}

impl DecisionNode {
    pub fn new(variable: Variable, predecessors: Vec<String>) -> Self {
        DecisionNode {
            variable,
            predecessors,
        }
    }
}

/// Utility of every predecessor state, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNode {
    pub name: String,
    pub predecessors: Vec<String>,
    pub utilities: Vec<f64>,
}

impl ValueNode {
    pub fn new(name: impl Into<String>, predecessors: Vec<String>, utilities: Vec<f64>) -> Self {
        ValueNode {
            name: name.into(),
            predecessors,
            utilities,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Chance,
    Decision,
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Chance(ChanceNode),
    Decision(DecisionNode),
    Value(ValueNode),
}

impl Node {
    pub fn name(&self) -> &str {
        match self {
            Node::Chance(c) => c.variable.name(),
            Node::Decision(d) => d.variable.name(),
            Node::Value(v) => &v.name,
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            Node::Chance(_) => NodeKind::Chance,
            Node::Decision(_) => NodeKind::Decision,
            Node::Value(_) => NodeKind::Value,
        }
    }

    pub fn predecessors(&self) -> &[String] {
        match self {
            Node::Chance(c) => &c.predecessors,
            Node::Decision(d) => &d.predecessors,
            Node::Value(v) => &v.predecessors,
        }
    }

    pub(crate) fn predecessors_mut(&mut self) -> &mut Vec<String> {
        match self {
            Node::Chance(c) => &mut c.predecessors,
            Node::Decision(d) => &mut d.predecessors,
            Node::Value(v) => &mut v.predecessors,
        }
    }

    /// The variable of a chance or decision node.
    pub fn variable(&self) -> Option<&Variable> {
        match self {
            Node::Chance(c) => Some(&c.variable),
            Node::Decision(d) => Some(&d.variable),
            Node::Value(_) => None,
        }
    }
}

impl From<ChanceNode> for Node {
    fn from(n: ChanceNode) -> Self {
        Node::Chance(n)
    }
}

impl From<DecisionNode> for Node {
    fn from(n: DecisionNode) -> Self {
        Node::Decision(n)
    }
}

impl From<ValueNode> for Node {
    fn from(n: ValueNode) -> Self {
        Node::Value(n)
    }
}

/// A decision model: chance, decision and value nodes whose arcs are given
/// by predecessor lists. Construction does not validate; use [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceDiagram {
    name: String,
    nodes: Vec<Node>,
}

impl InfluenceDiagram {
    pub fn new(name: impl Into<String>, nodes: Vec<Node>) -> Self {
        InfluenceDiagram {
            name: name.into(),
            nodes,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name() == name)
    }

    pub(crate) fn node_mut(&mut self, name: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.name() == name)
    }

    pub(crate) fn remove_node(&mut self, name: &str) -> Option<Node> {
        let pos = self.nodes.iter().position(|n| n.name() == name)?;
        Some(self.nodes.remove(pos))
    }

    pub(crate) fn replace_node(&mut self, node: Node) {
        match self.nodes.iter_mut().find(|n| n.name() == node.name()) {
            Some(slot) => *slot = node,
            None => self.nodes.push(node),
        }
    }

    /// Same name and same nodes, ignoring node order.
    pub fn structurally_equal(&self, other: &InfluenceDiagram) -> bool {
        self.name == other.name
            && self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .all(|n| other.node(n.name()) == Some(n))
    }

    pub fn chance(&self, name: &str) -> Option<&ChanceNode> {
        match self.node(name) {
            Some(Node::Chance(c)) => Some(c),
            _ => None,
        }
    }

    pub fn decision(&self, name: &str) -> Option<&DecisionNode> {
        match self.node(name) {
            Some(Node::Decision(d)) => Some(d),
            _ => None,
        }
    }

    /// The (first) value node.
    pub fn value_node(&self) -> Option<&ValueNode> {
        self.nodes.iter().find_map(|n| match n {
            Node::Value(v) => Some(v),
            _ => None,
        })
    }

    pub(crate) fn value_node_mut(&mut self) -> Option<&mut ValueNode> {
        self.nodes.iter_mut().find_map(|n| match n {
            Node::Value(v) => Some(v),
            _ => None,
        })
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.node(name).and_then(Node::variable)
    }

    /// Cardinality of a chance or decision node.
    pub fn cardinality(&self, name: &str) -> Option<usize> {
        self.variable(name).map(Variable::cardinality)
    }

    pub(crate) fn card(&self, name: &str) -> usize {
        self.cardinality(name)
            .unwrap_or_else(|| panic!("`{name}` is not a chance or decision node"))
    }

    pub(crate) fn cards(&self, names: &[String]) -> Vec<usize> {
        names.iter().map(|n| self.card(n)).collect()
    }

    /// Names of the nodes listing `name` as a predecessor, sorted.
    pub fn successors(&self, name: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .nodes
            .iter()
            .filter(|n| n.predecessors().iter().any(|p| p == name))
            .map(|n| n.name().to_string())
            .collect();
        out.sort();
        out
    }

    /// Names of all nodes of the given kind, sorted.
    pub fn names_of(&self, kind: NodeKind) -> Vec<String> {
        let mut out: Vec<String> = self
            .nodes
            .iter()
            .filter(|n| n.kind() == kind)
            .map(|n| n.name().to_string())
            .collect();
        out.sort();
        out
    }

    /// Whether a directed path of length ≥ 1 leads from `from` to `to`.
    pub fn has_path(&self, from: &str, to: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = self.successors(from);
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n.clone()) {
                stack.extend(self.successors(&n));
            }
        }
        false
    }

    /// Outcome labels of the predecessor state at `row` for `predecessors`.
    pub fn row_labels(&self, predecessors: &[String], row: usize) -> Vec<String> {
        let cards = self.cards(predecessors);
        state_at(row, &cards)
            .into_iter()
            .zip(predecessors)
            .map(|(s, p)| self.variable(p).unwrap().outcomes()[s].clone())
            .collect()
    }

    /// Row key (e.g. `good|treat`) of the predecessor state at `row`.
    pub fn row_key(&self, predecessors: &[String], row: usize) -> String {
        format_row_key(&self.row_labels(predecessors, row))
    }

    /// Index of the row whose predecessor outcomes are `labels`.
    pub fn row_index(&self, predecessors: &[String], labels: &[String]) -> Option<usize> {
        if labels.len() != predecessors.len() {
            return None;
        }
        let mut index = 0;
        for (p, label) in predecessors.iter().zip(labels) {
            let var = self.variable(p)?;
            index = index * var.cardinality() + var.outcome_index(label)?;
        }
        Some(index)
    }

    /// Decision nodes in temporal order.
    pub fn decision_order(&self) -> Result<Vec<String>> {
        let order = topological_order(self)?;
        let decisions: Vec<String> = order
            .into_iter()
            .filter(|n| matches!(self.node(n), Some(Node::Decision(_))))
            .collect();
        for pair in decisions.windows(2) {
            if !self.has_path(&pair[0], &pair[1]) {
                return Err(Error::DecisionsUnordered);
            }
        }
        Ok(decisions)
    }
}

/// Stable violation codes; declaration order is the report sort order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    BadProbability,
    Cycle,
    DanglingPredecessor,
    DecisionsUnordered,
    DuplicateName,
    MissingRow,
    MultipleValueNodes,
    NoValueNode,
    RowNotNormalized,
    ValueHasSuccessor,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::BadProbability => "BAD_PROBABILITY",
            ViolationCode::Cycle => "CYCLE",
            ViolationCode::DanglingPredecessor => "DANGLING_PREDECESSOR",
            ViolationCode::DecisionsUnordered => "DECISIONS_UNORDERED",
            ViolationCode::DuplicateName => "DUPLICATE_NAME",
            ViolationCode::MissingRow => "MISSING_ROW",
            ViolationCode::MultipleValueNodes => "MULTIPLE_VALUE_NODES",
            ViolationCode::NoValueNode => "NO_VALUE_NODE",
            ViolationCode::RowNotNormalized => "ROW_NOT_NORMALIZED",
            ViolationCode::ValueHasSuccessor => "VALUE_HAS_SUCCESSOR",
        }
    }

    /// Codes that concern graph structure rather than table contents.
    pub fn is_structural(self) -> bool {
        !matches!(
            self,
            ViolationCode::BadProbability | ViolationCode::RowNotNormalized
        )
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Node name, or `from->to` for an arc.
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: ViolationCode, subject: impl Into<String>, message: String) {
        self.violations.push(Violation {
            code,
            subject: subject.into(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} {}: {}", v.code, v.subject, v.message)?;
        }
        Ok(())
    }
}

/// Checks every structural and quantitative invariant of `d`.
///
/// Problems are collected, never raised. The report is sorted by code, then
/// subject; violations sharing both keep discovery order.
pub fn validate(d: &InfluenceDiagram) -> ValidationReport {
    use ViolationCode::*;

    let mut report = ValidationReport::default();
    let mut by_name: BTreeMap<&str, &Node> = BTreeMap::new();
    for node in d.nodes() {
        if by_name.insert(node.name(), node).is_some() {
            report.push(
                DuplicateName,
                node.name(),
                format!("node name `{}` is used more than once", node.name()),
            );
        }
    }

    let values: Vec<&str> = d
        .nodes()
        .iter()
        .filter(|n| n.kind() == NodeKind::Value)
        .map(Node::name)
        .collect();
    match values.len() {
        0 => report.push(NoValueNode, d.name(), "diagram has no value node".into()),
        1 => {}
        _ => report.push(
            MultipleValueNodes,
            values.join(","),
            format!("diagram has {} value nodes", values.len()),
        ),
    }

    // resolved arcs, by name
    let mut resolved: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut tables_checkable: BTreeSet<usize> = BTreeSet::new();
    for (index, node) in d.nodes().iter().enumerate() {
        let name = node.name();
        let mut ok = true;
        let mut seen = BTreeSet::new();
        let preds = resolved.entry(name).or_default();
        for p in node.predecessors() {
            if !seen.insert(p.as_str()) {
                report.push(
                    DuplicateName,
                    name,
                    format!("predecessor `{p}` listed more than once"),
                );
                ok = false;
                continue;
            }
            if p == name {
                report.push(Cycle, name, format!("`{name}` lists itself as predecessor"));
                ok = false;
                continue;
            }
            match by_name.get(p.as_str()) {
                None => {
                    report.push(
                        DanglingPredecessor,
                        format!("{p}->{name}"),
                        format!("predecessor `{p}` of `{name}` does not exist"),
                    );
                    ok = false;
                }
                Some(pn) => {
                    if pn.kind() == NodeKind::Value {
                        report.push(
                            ValueHasSuccessor,
                            p.as_str(),
                            format!("value node `{p}` precedes `{name}`"),
                        );
                        ok = false;
                    }
                    preds.push(p.as_str());
                }
            }
        }
        if ok {
            tables_checkable.insert(index);
        }
    }

    let cyclic = cycle_members(&resolved);
    if !cyclic.is_empty() {
        let names: Vec<&str> = cyclic.into_iter().collect();
        report.push(
            Cycle,
            names.join(","),
            format!("nodes {} lie on a directed cycle", names.join(", ")),
        );
    }

    for (index, node) in d.nodes().iter().enumerate() {
        if !tables_checkable.contains(&index) {
            continue;
        }
        check_tables(d, node, &mut report);
    }

    if !report.has(Cycle) && !report.has(DanglingPredecessor) && !report.has(DuplicateName) {
        if let Ok(order) = topological_order(d) {
            let decisions: Vec<&String> = order
                .iter()
                .filter(|n| matches!(d.node(n), Some(Node::Decision(_))))
                .collect();
            for pair in decisions.windows(2) {
                if !d.has_path(pair[0], pair[1]) {
                    report.push(
                        DecisionsUnordered,
                        format!("{}->{}", pair[0], pair[1]),
                        format!("no directed path from `{}` to `{}`", pair[0], pair[1]),
                    );
                }
            }
        }
    }

    report
        .violations
        .sort_by(|a, b| a.code.cmp(&b.code).then_with(|| a.subject.cmp(&b.subject)));
    report
}

fn cycle_members<'a>(arcs: &BTreeMap<&'a str, Vec<&'a str>>) -> BTreeSet<&'a str> {
    // Kahn's algorithm; whatever is left over is on or downstream of a cycle
    let mut indegree: BTreeMap<&str, usize> = arcs.keys().map(|&k| (k, 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (&node, preds) in arcs {
        for &p in preds {
            *indegree.get_mut(node).unwrap() += 1;
            succ.entry(p).or_default().push(node);
        }
    }
    let mut queue: VecDeque<&str> = indegree
        .iter()
        .filter(|(_, &deg)| deg == 0)
        .map(|(&n, _)| n)
        .collect();
    while let Some(n) = queue.pop_front() {
        for &s in succ.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let deg = indegree.get_mut(s).unwrap();
            *deg -= 1;
            if *deg == 0 {
                queue.push_back(s);
            }
        }
    }
    let leftover: BTreeSet<&str> = indegree
        .into_iter()
        .filter(|&(_, deg)| deg > 0)
        .map(|(n, _)| n)
        .collect();
    // keep only nodes that reach themselves
    leftover
        .iter()
        .copied()
        .filter(|&start| {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<&str> = succ.get(start).cloned().unwrap_or_default();
            while let Some(n) = stack.pop() {
                if n == start {
                    return true;
                }
                if seen.insert(n) {
                    stack.extend(succ.get(n).cloned().unwrap_or_default());
                }
            }
            false
        })
        .collect()
}

fn check_tables(d: &InfluenceDiagram, node: &Node, report: &mut ValidationReport) {
    use ViolationCode::*;

    let preds = node.predecessors();
    let expected = state_count(&d.cards(preds));
    match node {
        Node::Decision(_) => {}
        Node::Chance(c) => {
            let rows = c.table.rows();
            if rows.len() != expected {
                let detail = if rows.len() < expected {
                    format!(", first missing row `{}`", d.row_key(preds, rows.len()))
                } else {
                    String::new()
                };
                report.push(
                    MissingRow,
                    node.name(),
                    format!("table has {} rows, expected {expected}{detail}", rows.len()),
                );
            }
            let card = c.variable.cardinality();
            for (i, row) in rows.iter().enumerate().take(expected) {
                let key = d.row_key(preds, i);
                if row.len() != card {
                    report.push(
                        RowNotNormalized,
                        node.name(),
                        format!("row `{key}` has {} entries, expected {card}", row.len()),
                    );
                    continue;
                }
                let bad = row.iter().any(|&p| {
                    !p.is_finite() || !(-ENTRY_TOLERANCE..=1.0 + ENTRY_TOLERANCE).contains(&p)
                });
                if bad {
                    report.push(
                        BadProbability,
                        node.name(),
                        format!("row `{key}` has an entry outside [0, 1]: {row:?}"),
                    );
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    report.push(
                        RowNotNormalized,
                        node.name(),
                        format!("row `{key}` sums to {sum}"),
                    );
                }
            }
        }
        Node::Value(v) => {
            if v.utilities.len() != expected {
                report.push(
                    MissingRow,
                    node.name(),
                    format!(
                        "utility table has {} entries, expected {expected}",
                        v.utilities.len()
                    ),
                );
            }
            if let Some(i) = v.utilities.iter().position(|u| !u.is_finite()) {
                let key = if i < expected {
                    d.row_key(preds, i)
                } else {
                    i.to_string()
                };
                report.push(
                    BadProbability,
                    node.name(),
                    format!("utility at `{key}` is not finite"),
                );
            }
        }
    }
}

/// Topological order of all nodes with ties broken by node name.
pub fn topological_order(d: &InfluenceDiagram) -> Result<Vec<String>> {
    let names: BTreeSet<&str> = d.nodes().iter().map(Node::name).collect();
    let mut indegree: BTreeMap<&str, usize> = names.iter().map(|&n| (n, 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for node in d.nodes() {
        for p in node.predecessors() {
            if names.contains(p.as_str()) {
                *indegree.get_mut(node.name()).unwrap() += 1;
                succ.entry(p.as_str()).or_default().push(node.name());
            }
        }
    }
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, &deg)| deg == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut order = Vec::with_capacity(names.len());
    while let Some(n) = ready.pop_first() {
        order.push(n.to_string());
        for &s in succ.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let deg = indegree.get_mut(s).unwrap();
            *deg -= 1;
            if *deg == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() != names.len() {
        let stuck: Vec<String> = indegree
            .into_iter()
            .filter(|&(_, deg)| deg > 0)
            .map(|(n, _)| n.to_string())
            .collect();
        return Err(Error::Cycle(stuck));
    }
    Ok(order)
}

/// Adds the no-forgetting arcs: every decision learns each earlier decision
/// and everything that decision knew. No other arcs are added; missing
/// predecessors are appended in name order, so the operation is idempotent.
pub fn canonicalize(d: &InfluenceDiagram) -> Result<InfluenceDiagram> {
    let report = validate(d);
    if !report.is_valid() {
        let only_unordered = report
            .violations
            .iter()
            .all(|v| v.code == ViolationCode::DecisionsUnordered);
        return Err(if only_unordered {
            Error::DecisionsUnordered
        } else {
            Error::Invalid(report)
        });
    }
    let order = d.decision_order()?;
    let mut out = d.clone();
    for (j, later) in order.iter().enumerate().skip(1) {
        let mut known: BTreeSet<String> = BTreeSet::new();
        for earlier in &order[..j] {
            known.insert(earlier.clone());
            known.extend(out.node(earlier).unwrap().predecessors().iter().cloned());
        }
        let node = out.node_mut(later).unwrap();
        let have: BTreeSet<String> = node.predecessors().iter().cloned().collect();
        node.predecessors_mut()
            .extend(known.into_iter().filter(|k| !have.contains(k)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn chance(name: &str, preds: &[&str], rows: Vec<Vec<f64>>) -> Node {
        ChanceNode::new(
            Variable::new(name, ["t", "f"]).unwrap(),
            preds.iter().map(|s| s.to_string()).collect(),
            rows,
        )
        .into()
    }

    fn value(preds: &[&str], utilities: Vec<f64>) -> Node {
        ValueNode::new("V", preds.iter().map(|s| s.to_string()).collect(), utilities).into()
    }

    #[test]
    fn variable_invariants() {
        assert!(Variable::new("", ["a"]).is_err());
        assert!(Variable::new("x", Vec::<String>::new()).is_err());
        assert!(Variable::new("x", ["a", "a"]).is_err());
        assert!(Variable::new("x", ["a", ""]).is_err());
        let v = Variable::new("x", ["a", "b"]).unwrap();
        assert_eq!(v.outcome_index("b"), Some(1));
        assert_eq!(v.cardinality(), 2);
    }

    #[test]
    fn variable_deserialization_checks_invariants() {
        let bad: std::result::Result<Variable, _> =
            serde_json::from_str(r#"{"name":"x","outcomes":["a","a"]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn fixtures_are_valid() {
        for d in [fixtures::d1(), fixtures::d2(), fixtures::d2_informed(), fixtures::d3()] {
            let report = validate(&d);
            assert!(report.is_valid(), "{}: {report}", d.name());
        }
    }

    #[test]
    fn unnormalized_row_reported_on_outcome_node() {
        let mut d = fixtures::d1();
        if let Some(Node::Chance(c)) = d.node_mut("O") {
            c.table.rows_mut()[0] = vec![0.6, 0.3];
        }
        let report = validate(&d);
        assert_eq!(report.violations.len(), 1, "{report}");
        assert_eq!(report.violations[0].code, ViolationCode::RowNotNormalized);
        assert_eq!(report.violations[0].subject, "O");
    }

    #[test]
    fn two_cycle_reported() {
        let d = InfluenceDiagram::new(
            "cyc",
            vec![
                chance("A", &["B"], vec![vec![0.5, 0.5]; 2]),
                chance("B", &["A"], vec![vec![0.5, 0.5]; 2]),
                value(&["A"], vec![1.0, 0.0]),
            ],
        );
        let report = validate(&d);
        assert!(report.has(ViolationCode::Cycle), "{report}");
        assert_eq!(report.violations[0].subject, "A,B");
        assert!(matches!(topological_order(&d), Err(Error::Cycle(_))));
    }

    #[test]
    fn structural_violations() {
        let d = InfluenceDiagram::new(
            "bad",
            vec![
                chance("A", &["missing"], vec![vec![0.5, 0.5]]),
                chance("A", &[], vec![vec![0.5, 0.5]]),
                chance("S", &["S"], vec![vec![0.5, 0.5]]),
                chance("W", &["V"], vec![vec![0.5, 0.5]]),
                value(&["A"], vec![1.0, 0.0]),
                ValueNode::new("V2", vec![], vec![0.0]).into(),
            ],
        );
        let codes: Vec<_> = validate(&d).violations.iter().map(|v| v.code).collect();
        for code in [
            ViolationCode::DanglingPredecessor,
            ViolationCode::DuplicateName,
            ViolationCode::Cycle,
            ViolationCode::ValueHasSuccessor,
            ViolationCode::MultipleValueNodes,
        ] {
            assert!(codes.contains(&code), "{code} missing from {codes:?}");
        }
        let mut sorted = codes.clone();
        sorted.sort();
        assert_eq!(codes, sorted);
    }

    #[test]
    fn table_violations() {
        let d = InfluenceDiagram::new(
            "tables",
            vec![
                chance("A", &[], vec![vec![1.2, -0.2]]),
                chance("B", &["A"], vec![vec![0.5, 0.5]]),
                value(&["A", "B"], vec![1.0, f64::NAN, 0.0, 0.0]),
            ],
        );
        let report = validate(&d);
        let codes: Vec<_> = report.violations.iter().map(|v| v.code.as_str()).collect();
        assert_eq!(codes, vec!["BAD_PROBABILITY", "BAD_PROBABILITY", "MISSING_ROW"]);
        assert!(report.violations[2].message.contains("first missing row `f`"));
    }

    #[test]
    fn no_value_node() {
        let d = InfluenceDiagram::new("nv", vec![chance("A", &[], vec![vec![0.5, 0.5]])]);
        assert!(validate(&d).has(ViolationCode::NoValueNode));
    }

    #[test]
    fn clamps_tiny_excursions() {
        let t = ConditionalTable::new(vec![vec![-1e-13, 1.0 + 1e-13]]);
        assert_eq!(t.rows()[0], vec![0.0, 1.0]);
        let t = ConditionalTable::new(vec![vec![-1e-3, 1.001]]);
        assert_eq!(t.rows()[0], vec![-1e-3, 1.001]);
    }

    #[test]
    fn unordered_decisions() {
        let d = InfluenceDiagram::new(
            "two",
            vec![
                DecisionNode::new(Variable::new("D1", ["a", "b"]).unwrap(), vec![]).into(),
                DecisionNode::new(Variable::new("D2", ["a", "b"]).unwrap(), vec![]).into(),
                value(&["D1", "D2"], vec![0.0; 4]),
            ],
        );
        let report = validate(&d);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, ViolationCode::DecisionsUnordered);
        assert_eq!(canonicalize(&d), Err(Error::DecisionsUnordered));
    }

    #[test]
    fn topological_order_examples() {
        assert_eq!(topological_order(&fixtures::d1()).unwrap(), ["D", "O", "V"]);
        let d = InfluenceDiagram::new(
            "roots",
            vec![
                chance("b", &[], vec![vec![0.5, 0.5]]),
                chance("a", &[], vec![vec![0.5, 0.5]]),
                value(&["b", "a"], vec![0.0; 4]),
            ],
        );
        assert_eq!(topological_order(&d).unwrap(), ["a", "b", "V"]);
    }

    #[test]
    fn canonicalize_single_decision_is_identity() {
        let d = fixtures::d1();
        assert_eq!(canonicalize(&d).unwrap(), d);
    }

    #[test]
    fn canonicalize_adds_no_forgetting_arcs() {
        // C -> D1 -> D2 -> V, C -> V; expected output adds exactly C -> D2
        let d = InfluenceDiagram::new(
            "nf",
            vec![
                chance("C", &[], vec![vec![0.3, 0.7]]),
                DecisionNode::new(Variable::new("D1", ["x", "y"]).unwrap(), vec!["C".into()])
                    .into(),
                DecisionNode::new(Variable::new("D2", ["x", "y"]).unwrap(), vec!["D1".into()])
                    .into(),
                value(&["C", "D2"], vec![1.0, 2.0, 3.0, 4.0]),
            ],
        );
        let c = canonicalize(&d).unwrap();
        assert_eq!(c.node("D2").unwrap().predecessors(), ["D1", "C"]);
        assert_eq!(c.node("D1").unwrap().predecessors(), ["C"]);
        let arcs = |d: &InfluenceDiagram| -> BTreeSet<(String, String)> {
            d.nodes()
                .iter()
                .flat_map(|n| {
                    n.predecessors()
                        .iter()
                        .map(|p| (p.clone(), n.name().to_string()))
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let added: Vec<_> = arcs(&c).difference(&arcs(&d)).cloned().collect();
        assert_eq!(added, vec![("C".to_string(), "D2".to_string())]);
        assert_eq!(canonicalize(&c).unwrap(), c);
    }

    #[test]
    fn row_key_helpers() {
        let d = fixtures::d2();
        let preds = d.value_node().unwrap().predecessors.clone();
        assert_eq!(d.row_key(&preds, 1), "good|wait");
        assert_eq!(
            d.row_index(&preds, &["bad".to_string(), "treat".to_string()]),
            Some(2)
        );
        assert_eq!(d.row_index(&preds, &["bad".to_string()]), None);
    }
}
