//! JSON interchange format for diagrams.
//!
//! ```json
//! {
//!   "version": 1,
//!   "name": "D1",
//!   "variables": [{ "name": "D", "outcomes": ["treat", "wait"] }, ...],
//!   "nodes": [
//!     { "name": "D", "kind": "decision", "predecessors": [] },
//!     { "name": "O", "kind": "chance", "predecessors": ["D"],
//!       "cpt": { "treat": [0.6, 0.4], "wait": [0.2, 0.8] } },
//!     { "name": "V", "kind": "value", "predecessors": ["O"],
//!       "utilities": { "success": 100.0, "failure": 0.0 } }
//!   ]
//! }
//! ```
//!
//! Encoding is canonical: variables sorted by name, nodes in topological
//! order, rows in Cartesian-product order of the predecessor outcomes.
//! Row keys join predecessor outcomes with `|` (see [`crate::table`]).

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::diagram::{
    topological_order, validate, ChanceNode, DecisionNode, InfluenceDiagram, Node, NodeKind,
    ValueNode, Variable,
};
use crate::error::{Error, Result};
use crate::table::state_count;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramDocument {
    pub version: u64,
    pub name: String,
    pub variables: Vec<VariableDocument>,
    pub nodes: Vec<NodeDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDocument {
    pub name: String,
    pub outcomes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDocument {
    pub name: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub predecessors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpt: Option<IndexMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilities: Option<IndexMap<String, f64>>,
}

/// How [`DiagramDocument::into_diagram`] treats absent rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completeness {
    /// Every row must be present and the result must validate.
    Full,
    /// Absent rows become NaN placeholders and only structure is checked.
    Skeleton,
}

fn parse_error(message: impl Into<String>) -> Error {
    Error::Parse {
        message: message.into(),
        line: None,
        column: None,
    }
}

fn from_json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        message: e.to_string(),
        line: Some(e.line()).filter(|&l| l > 0),
        column: Some(e.column()).filter(|&c| c > 0),
    }
}

impl DiagramDocument {
    /// Canonical document for a valid diagram.
    pub fn from_diagram(d: &InfluenceDiagram) -> Result<Self> {
        let report = validate(d);
        if !report.is_valid() {
            return Err(Error::Invalid(report));
        }
        Ok(Self::from_diagram_unchecked(d))
    }

    /// As [`from_diagram`](Self::from_diagram) without validation; NaN
    /// entries are omitted, so skeletons round-trip through
    /// [`Completeness::Skeleton`].
    pub fn from_diagram_unchecked(d: &InfluenceDiagram) -> Self {
        let mut variables: Vec<VariableDocument> = d
            .nodes()
            .iter()
            .filter_map(Node::variable)
            .map(|v| VariableDocument {
                name: v.name().to_string(),
                outcomes: v.outcomes().to_vec(),
            })
            .collect();
        variables.sort_by(|a, b| a.name.cmp(&b.name));

        let order = topological_order(d)
            .unwrap_or_else(|_| d.nodes().iter().map(|n| n.name().to_string()).collect());
        let nodes = order
            .iter()
            .map(|name| {
                let node = d.node(name).unwrap();
                let preds = node.predecessors().to_vec();
                let mut doc = NodeDocument {
                    name: name.clone(),
                    kind: node.kind(),
                    predecessors: preds.clone(),
                    cpt: None,
                    utilities: None,
                };
                match node {
                    Node::Chance(c) => {
                        doc.cpt = Some(
                            c.table
                                .rows()
                                .iter()
                                .enumerate()
                                .filter(|(_, row)| !row.iter().any(|p| p.is_nan()))
                                .map(|(i, row)| (d.row_key(&preds, i), row.clone()))
                                .collect(),
                        );
                    }
                    Node::Value(v) => {
                        doc.utilities = Some(
                            v.utilities
                                .iter()
                                .enumerate()
                                .filter(|(_, u)| !u.is_nan())
                                .map(|(i, &u)| (d.row_key(&preds, i), u))
                                .collect(),
                        );
                    }
                    Node::Decision(_) => {}
                }
                doc
            })
            .collect();
        DiagramDocument {
            version: FORMAT_VERSION,
            name: d.name().to_string(),
            variables,
            nodes,
        }
    }

    pub fn into_diagram(self, completeness: Completeness) -> Result<InfluenceDiagram> {
        if self.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        let mut variables: BTreeMap<String, Variable> = BTreeMap::new();
        for v in self.variables {
            let variable = Variable::new(v.name.clone(), v.outcomes)?;
            if variables.insert(v.name.clone(), variable).is_some() {
                return Err(parse_error(format!("variable `{}` declared twice", v.name)));
            }
        }
        let mut used = BTreeSet::new();
        for n in &self.nodes {
            match n.kind {
                NodeKind::Value => {
                    if variables.contains_key(&n.name) {
                        return Err(parse_error(format!(
                            "value node `{}` must not declare a variable",
                            n.name
                        )));
                    }
                }
                _ => {
                    if !variables.contains_key(&n.name) {
                        return Err(parse_error(format!(
                            "node `{}` has no variable declaration",
                            n.name
                        )));
                    }
                    used.insert(n.name.clone());
                }
            }
        }
        if let Some(unused) = variables.keys().find(|k| !used.contains(*k)) {
            return Err(parse_error(format!("variable `{unused}` has no node")));
        }

        // a provisional diagram without tables to resolve row keys
        let shell = InfluenceDiagram::new(
            self.name.clone(),
            self.nodes
                .iter()
                .map(|n| match n.kind {
                    NodeKind::Value => ValueNode::new(&n.name, vec![], vec![]).into(),
                    _ => DecisionNode::new(variables[&n.name].clone(), vec![]).into(),
                })
                .collect(),
        );
        let resolvable =
            |preds: &[String]| preds.iter().all(|p| shell.variable(p).is_some());

        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in self.nodes {
            let misplaced = match n.kind {
                NodeKind::Chance => n.utilities.is_some().then_some("utilities"),
                NodeKind::Decision => n
                    .cpt
                    .is_some()
                    .then_some("cpt")
                    .or(n.utilities.is_some().then_some("utilities")),
                NodeKind::Value => n.cpt.is_some().then_some("cpt"),
            };
            if let Some(field) = misplaced {
                return Err(parse_error(format!(
                    "{:?} node `{}` cannot have `{field}`",
                    n.kind, n.name
                )));
            }
            let preds = n.predecessors;
            match n.kind {
                NodeKind::Decision => {
                    nodes.push(DecisionNode::new(variables[&n.name].clone(), preds).into());
                }
                NodeKind::Chance => {
                    let variable = variables[&n.name].clone();
                    let rows = if resolvable(&preds) {
                        let card = variable.cardinality();
                        let mut cpt = n.cpt.unwrap_or_default();
                        let rows = table_rows(&shell, &n.name, &preds, &mut cpt, completeness, |_| {
                            vec![f64::NAN; card]
                        })?;
                        reject_leftovers(&n.name, cpt.keys())?;
                        rows
                    } else {
                        Vec::new()
                    };
                    nodes.push(ChanceNode::new(variable, preds, rows).into());
                }
                NodeKind::Value => {
                    let utilities = if resolvable(&preds) {
                        let mut table = n.utilities.unwrap_or_default();
                        let u = table_rows(&shell, &n.name, &preds, &mut table, completeness, |_| {
                            f64::NAN
                        })?;
                        reject_leftovers(&n.name, table.keys())?;
                        u
                    } else {
                        Vec::new()
                    };
                    nodes.push(ValueNode::new(n.name, preds, utilities).into());
                }
            }
        }
        let d = InfluenceDiagram::new(self.name, nodes);
        let report = validate(&d);
        let blocking = match completeness {
            Completeness::Full => !report.is_valid(),
            Completeness::Skeleton => report.violations.iter().any(|v| v.code.is_structural()),
        };
        if blocking {
            return Err(Error::Invalid(report));
        }
        Ok(d)
    }
}

fn table_rows<T>(
    shell: &InfluenceDiagram,
    node: &str,
    preds: &[String],
    table: &mut IndexMap<String, T>,
    completeness: Completeness,
    placeholder: impl Fn(usize) -> T,
) -> Result<Vec<T>> {
    let count = state_count(&preds.iter().map(|p| shell.card(p)).collect::<Vec<_>>());
    (0..count)
        .map(|i| {
            let key = shell.row_key(preds, i);
            match table.shift_remove(&key) {
                Some(row) => Ok(row),
                None if completeness == Completeness::Skeleton => Ok(placeholder(i)),
                None => Err(Error::MissingRow {
                    node: node.to_string(),
                    row: key,
                }),
            }
        })
        .collect()
}

fn reject_leftovers<'a>(node: &str, mut keys: impl Iterator<Item = &'a String>) -> Result<()> {
    match keys.next() {
        Some(key) => Err(parse_error(format!(
            "node `{node}` has row `{key}` that matches no predecessor outcomes"
        ))),
        None => Ok(()),
    }
}

/// Canonical text of a valid diagram.
pub fn encode(d: &InfluenceDiagram) -> Result<String> {
    let doc = DiagramDocument::from_diagram(d)?;
    let mut text = serde_json::to_string_pretty(&doc).expect("documents always serialize");
    text.push('\n');
    Ok(text)
}

/// Parses and validates a diagram document.
pub fn decode(text: &str) -> Result<InfluenceDiagram> {
    parse_document(text)?.into_diagram(Completeness::Full)
}

/// Parses a document without building the diagram. The version is checked
/// before the field layout so that future documents fail with
/// `UNSUPPORTED_VERSION` rather than a parse error.
pub fn parse_document(text: &str) -> Result<DiagramDocument> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(from_json_error)?;
    match raw.get("version").and_then(serde_json::Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(Error::UnsupportedVersion(other)),
        None => return Err(parse_error("missing or non-integer `version`")),
    }
    serde_json::from_str(text).map_err(from_json_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solver::solve;

    #[test]
    fn encode_is_stable() {
        let d = fixtures::d1();
        let a = encode(&d).unwrap();
        assert_eq!(a, encode(&d).unwrap());
        assert!(a.contains("\"treat\": [\n"));
        // canonical order: decision, outcome, value
        let d_pos = a.find("\"kind\": \"decision\"").unwrap();
        let v_pos = a.find("\"kind\": \"value\"").unwrap();
        assert!(d_pos < v_pos);
    }

    #[test]
    fn round_trip_keeps_solution() {
        let d = fixtures::d1();
        let back = decode(&encode(&d).unwrap()).unwrap();
        assert!(back.structurally_equal(&d));
        assert_eq!(solve(&back).unwrap().expected_utility, 60.0);
    }

    #[test]
    fn awkward_names_survive() {
        let v = Variable::new("state \"x\" / y", ["a|b", "c\\d", "e f"]).unwrap();
        let d = InfluenceDiagram::new(
            "odd \"name\"",
            vec![
                ChanceNode::new(v, vec![], vec![vec![0.1, 0.2, 0.7]]).into(),
                ValueNode::new("value node", vec!["state \"x\" / y".into()], vec![1.0, 2.0, 3.0])
                    .into(),
            ],
        );
        let text = encode(&d).unwrap();
        assert!(text.contains("a\\\\|b"));
        let back = decode(&text).unwrap();
        assert!(back.structurally_equal(&d));
        assert_eq!(back.name(), d.name());
    }

    #[test]
    fn version_999_is_unsupported() {
        let text = encode(&fixtures::d1()).unwrap().replace("\"version\": 1", "\"version\": 999");
        assert_eq!(decode(&text), Err(Error::UnsupportedVersion(999)));
        // even if the rest of the layout is unknown
        assert_eq!(
            decode(r#"{"version": 999, "whatever": true}"#),
            Err(Error::UnsupportedVersion(999))
        );
    }

    #[test]
    fn missing_row_named() {
        let text = encode(&fixtures::d1()).unwrap();
        let mut doc: DiagramDocument = serde_json::from_str(&text).unwrap();
        doc.nodes[1].cpt.as_mut().unwrap().shift_remove("wait");
        let text = serde_json::to_string(&doc).unwrap();
        let err = decode(&text).unwrap_err();
        assert_eq!(
            err,
            Error::MissingRow {
                node: "O".into(),
                row: "wait".into()
            }
        );
        assert_eq!(err.code(), "MISSING_ROW");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = decode("{\n  \"version\": 1,\n  \"name\": \n}").unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert!(err.context().unwrap().starts_with("line 4"));

        let text = encode(&fixtures::d1())
            .unwrap()
            .replace("\"name\": \"D1\"", "\"name\": \"D1\", \"colour\": \"red\"");
        let err = decode(&text).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn inconsistent_documents() {
        let base = encode(&fixtures::d1()).unwrap();
        let extra_row = base.replace("\"wait\": [", "\"later\": [0.5, 0.5],\n\"wait\": [");
        assert_eq!(decode(&extra_row).unwrap_err().code(), "PARSE_ERROR");
        let no_var = base.replace("\"name\": \"O\",\n      \"outcomes\"", "\"name\": \"P\",\n      \"outcomes\"");
        assert_eq!(decode(&no_var).unwrap_err().code(), "PARSE_ERROR");
        let bad_sum = base.replace("0.6,", "0.5,");
        assert_eq!(decode(&bad_sum).unwrap_err().code(), "ROW_NOT_NORMALIZED");
    }

    #[test]
    fn skeletons_keep_placeholders() {
        let text = encode(&fixtures::d1()).unwrap();
        let mut doc: DiagramDocument = serde_json::from_str(&text).unwrap();
        doc.nodes[1].cpt.as_mut().unwrap().shift_remove("wait");
        doc.nodes[2].utilities = None;
        let d = doc.clone().into_diagram(Completeness::Skeleton).unwrap();
        assert!(d.chance("O").unwrap().table.rows()[1].iter().all(|p| p.is_nan()));
        assert!(d.value_node().unwrap().utilities.iter().all(|u| u.is_nan()));
        let again = DiagramDocument::from_diagram_unchecked(&d);
        assert_eq!(again.nodes[1].cpt, doc.nodes[1].cpt);
        assert!(doc.into_diagram(Completeness::Full).is_err());
    }
}
