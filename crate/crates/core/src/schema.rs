//! Schema library: partially assessed diagrams with slots, selected by
//! decision features and instantiated with user-specific numbers.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::diagram::{validate, InfluenceDiagram, Node, ROW_SUM_TOLERANCE};
use crate::error::{Error, Result};
use crate::format::{Completeness, DiagramDocument, FORMAT_VERSION};
use crate::table::parse_row_key;

const BUILTIN: &str = include_str!("../data/schemas.json");

/// Presence or absence of decision features. Features the library declares
/// but the vector omits count as absent.
pub type FeatureVector = BTreeMap<String, bool>;

/// Values for a schema's slots, keyed by slot id.
pub type Bindings = BTreeMap<String, SlotValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SlotTarget {
    /// One conditional distribution; bound to a probability row.
    CptRow { node: String, row: String },
    /// A whole CPT; bound to one probability row per predecessor state.
    Cpt { node: String },
    /// The whole utility table; bound to one number per row.
    Utilities { node: String },
    /// A single utility; bound to a number.
    UtilityRow { node: String, row: String },
}

impl SlotTarget {
    pub fn node(&self) -> &str {
        match self {
            SlotTarget::CptRow { node, .. }
            | SlotTarget::Cpt { node }
            | SlotTarget::Utilities { node }
            | SlotTarget::UtilityRow { node, .. } => node,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub id: String,
    pub prompt: String,
    pub target: SlotTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotValue {
    Scalar(f64),
    Row(Vec<f64>),
    Table(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLiteral {
    pub feature: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDeclaration {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaFragment {
    pub id: String,
    pub title: String,
    pub description: String,
    pub priority: i64,
    pub applicability: Vec<FeatureLiteral>,
    /// Skeleton diagram; slot-targeted entries are NaN.
    pub diagram: InfluenceDiagram,
    pub slots: Vec<Slot>,
}

impl SchemaFragment {
    pub fn applies_to(&self, features: &FeatureVector) -> bool {
        self.applicability
            .iter()
            .all(|lit| features.get(&lit.feature).copied().unwrap_or(false) == lit.required)
    }

    pub fn slot(&self, id: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaLibrary {
    pub features: Vec<FeatureDeclaration>,
    /// Declaration order breaks priority ties.
    pub schemas: Vec<SchemaFragment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDocument {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub priority: i64,
    #[serde(default)]
    pub applicability: IndexMap<String, bool>,
    pub diagram: DiagramDocument,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaLibraryDocument {
    pub version: u64,
    pub features: Vec<FeatureDeclaration>,
    pub schemas: Vec<SchemaDocument>,
}

impl SchemaFragment {
    pub fn to_document(&self) -> SchemaDocument {
        SchemaDocument {
            id: self.id.clone(),
            title: self.title.clone(),
            description: self.description.clone(),
            priority: self.priority,
            applicability: self
                .applicability
                .iter()
                .map(|l| (l.feature.clone(), l.required))
                .collect(),
            diagram: DiagramDocument::from_diagram_unchecked(&self.diagram),
            slots: self.slots.clone(),
        }
    }
}

impl SchemaLibrary {
    /// The illustrative library shipped with the engine.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("shipped schema library is well-formed")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SchemaLibraryDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            message: e.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
        })?;
        Self::from_document(doc)
    }

    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&self.to_document()).expect("documents always serialize");
        text.push('\n');
        text
    }

    pub fn to_document(&self) -> SchemaLibraryDocument {
        SchemaLibraryDocument {
            version: FORMAT_VERSION,
            features: self.features.clone(),
            schemas: self.schemas.iter().map(SchemaFragment::to_document).collect(),
        }
    }

    pub fn from_document(doc: SchemaLibraryDocument) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        let declared: BTreeSet<&str> = doc.features.iter().map(|f| f.name.as_str()).collect();
        if declared.len() != doc.features.len() {
            return Err(Error::Parse {
                message: "feature declared twice".into(),
                line: None,
                column: None,
            });
        }
        let mut ids = BTreeSet::new();
        let mut schemas = Vec::with_capacity(doc.schemas.len());
        for s in doc.schemas {
            let bad = |reason: String| Error::BadSchema {
                schema: s.id.clone(),
                reason,
            };
            if !ids.insert(s.id.clone()) {
                return Err(bad("schema id used twice".into()));
            }
            if let Some(f) = s.applicability.keys().find(|f| !declared.contains(f.as_str())) {
                return Err(bad(format!("applicability uses undeclared feature `{f}`")));
            }
            let diagram = s
                .diagram
                .into_diagram(Completeness::Skeleton)
                .map_err(|e| bad(e.to_string()))?;
            check_slots(&diagram, &s.slots).map_err(bad)?;
            schemas.push(SchemaFragment {
                applicability: s
                    .applicability
                    .into_iter()
                    .map(|(feature, required)| FeatureLiteral { feature, required })
                    .collect(),
                id: s.id,
                title: s.title,
                description: s.description,
                priority: s.priority,
                diagram,
                slots: s.slots,
            });
        }
        Ok(SchemaLibrary {
            features: doc.features,
            schemas,
        })
    }

    pub fn schema(&self, id: &str) -> Option<&SchemaFragment> {
        self.schemas.iter().find(|s| s.id == id)
    }

    /// Rejects feature names the library does not declare.
    pub fn check_features(&self, features: &FeatureVector) -> Result<()> {
        match features
            .keys()
            .find(|f| !self.features.iter().any(|d| &d.name == *f))
        {
            Some(f) => Err(Error::UnknownFeature(f.clone())),
            None => Ok(()),
        }
    }
}

/// Entries (row, column) of one table region. Columns are `None` for
/// utility rows.
type Region = Vec<(usize, Option<usize>)>;

fn region(d: &InfluenceDiagram, target: &SlotTarget) -> std::result::Result<Region, String> {
    let node = d
        .node(target.node())
        .ok_or_else(|| format!("slot targets unknown node `{}`", target.node()))?;
    let row_of = |row: &str| {
        d.row_index(node.predecessors(), &parse_row_key(row))
            .ok_or_else(|| format!("node `{}` has no row `{row}`", node.name()))
    };
    match (target, node) {
        (SlotTarget::CptRow { row, .. }, Node::Chance(c)) => {
            let r = row_of(row)?;
            Ok((0..c.variable.cardinality()).map(|k| (r, Some(k))).collect())
        }
        (SlotTarget::Cpt { .. }, Node::Chance(c)) => Ok((0..c.table.rows().len())
            .flat_map(|r| (0..c.variable.cardinality()).map(move |k| (r, Some(k))))
            .collect()),
        (SlotTarget::Utilities { .. }, Node::Value(v)) => {
            Ok((0..v.utilities.len()).map(|r| (r, None)).collect())
        }
        (SlotTarget::UtilityRow { row, .. }, Node::Value(_)) => Ok(vec![(row_of(row)?, None)]),
        _ => Err(format!(
            "slot target kind does not match {:?} node `{}`",
            node.kind(),
            node.name()
        )),
    }
}

fn entry(d: &InfluenceDiagram, node: &str, (r, k): (usize, Option<usize>)) -> f64 {
    match (d.node(node), k) {
        (Some(Node::Chance(c)), Some(k)) => c.table.rows()[r][k],
        (Some(Node::Value(v)), None) => v.utilities[r],
        _ => unreachable!("regions are resolved against the same diagram"),
    }
}

/// Every slot must cover only unbound entries, slots must not overlap, and
/// together they must cover every unbound entry.
fn check_slots(d: &InfluenceDiagram, slots: &[Slot]) -> std::result::Result<(), String> {
    let mut covered: BTreeSet<(String, usize, Option<usize>)> = BTreeSet::new();
    let mut ids = BTreeSet::new();
    for slot in slots {
        if !ids.insert(slot.id.as_str()) {
            return Err(format!("slot id `{}` used twice", slot.id));
        }
        let node = slot.target.node();
        for cell in region(d, &slot.target)? {
            if !entry(d, node, cell).is_nan() {
                return Err(format!("slot `{}` targets an assessed entry", slot.id));
            }
            if !covered.insert((node.to_string(), cell.0, cell.1)) {
                return Err(format!("slot `{}` overlaps another slot", slot.id));
            }
        }
    }
    for n in d.nodes() {
        let unbound = match n {
            Node::Chance(c) => c
                .table
                .rows()
                .iter()
                .enumerate()
                .flat_map(|(r, row)| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, p)| p.is_nan())
                        .map(move |(k, _)| (r, Some(k)))
                })
                .collect::<Vec<_>>(),
            Node::Value(v) => v
                .utilities
                .iter()
                .enumerate()
                .filter(|(_, u)| u.is_nan())
                .map(|(r, _)| (r, None))
                .collect(),
            Node::Decision(_) => Vec::new(),
        };
        if let Some((r, _)) = unbound
            .into_iter()
            .find(|&(r, k)| !covered.contains(&(n.name().to_string(), r, k)))
        {
            return Err(format!(
                "row `{}` of node `{}` is unbound but no slot targets it",
                d.row_key(n.predecessors(), r),
                n.name()
            ));
        }
    }
    Ok(())
}

/// The applicable schema with the lowest priority number; declaration order
/// breaks ties.
pub fn select_schema<'a>(
    features: &FeatureVector,
    library: &'a SchemaLibrary,
) -> Result<&'a SchemaFragment> {
    library.check_features(features)?;
    library
        .schemas
        .iter()
        .filter(|s| s.applies_to(features))
        .min_by_key(|s| s.priority)
        .ok_or(Error::NoApplicableSchema)
}

fn check_probability_row(slot: &str, row: &[f64], cardinality: usize) -> Result<()> {
    let invalid = |reason: String| Error::InvalidRow {
        slot: slot.to_string(),
        reason,
    };
    if row.len() != cardinality {
        return Err(invalid(format!(
            "expected {cardinality} probabilities, got {}",
            row.len()
        )));
    }
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("{p} is not a probability")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

fn check_utility(slot: &str, u: f64) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidRow {
            slot: slot.to_string(),
            reason: format!("utility {u} is not finite"),
        })
    }
}

fn shape_error(slot: &Slot, expected: &str) -> Error {
    Error::InvalidRow {
        slot: slot.id.clone(),
        reason: format!("expected {expected}"),
    }
}

/// Fills every slot of `schema` and returns the validated diagram.
pub fn instantiate(schema: &SchemaFragment, bindings: &Bindings) -> Result<InfluenceDiagram> {
    if let Some(missing) = schema.slots.iter().find(|s| !bindings.contains_key(&s.id)) {
        return Err(Error::MissingSlot(missing.id.clone()));
    }
    if let Some(unknown) = bindings.keys().find(|id| schema.slot(id).is_none()) {
        return Err(Error::UnknownSlot(unknown.clone()));
    }
    let mut d = schema.diagram.clone();
    for slot in &schema.slots {
        let value = &bindings[&slot.id];
        let node = slot.target.node().to_string();
        let preds = d.node(&node).unwrap().predecessors().to_vec();
        match (&slot.target, value) {
            (SlotTarget::CptRow { row, .. }, SlotValue::Row(probs)) => {
                let r = d.row_index(&preds, &parse_row_key(row)).unwrap();
                let card = d.card(&node);
                check_probability_row(&slot.id, probs, card)?;
                chance_rows(&mut d, &node)[r] = probs.clone();
            }
            (SlotTarget::Cpt { .. }, SlotValue::Table(rows)) => {
                let card = d.card(&node);
                let expected = d.chance(&node).unwrap().table.rows().len();
                if rows.len() != expected {
                    return Err(shape_error(slot, &format!("{expected} rows")));
                }
                for row in rows {
                    check_probability_row(&slot.id, row, card)?;
                }
                *chance_rows(&mut d, &node) = rows.clone();
            }
            // a chance node without predecessors has a one-row CPT
            (SlotTarget::Cpt { .. }, SlotValue::Row(row))
                if d.chance(&node).unwrap().table.rows().len() == 1 =>
            {
                check_probability_row(&slot.id, row, d.card(&node))?;
                *chance_rows(&mut d, &node) = vec![row.clone()];
            }
            (SlotTarget::Utilities { .. }, SlotValue::Row(values)) => {
                let v = d.value_node_mut().unwrap();
                if values.len() != v.utilities.len() {
                    return Err(shape_error(slot, &format!("{} utilities", v.utilities.len())));
                }
                for &u in values {
                    check_utility(&slot.id, u)?;
                }
                v.utilities = values.clone();
            }
            (SlotTarget::UtilityRow { row, .. }, SlotValue::Scalar(u)) => {
                check_utility(&slot.id, *u)?;
                let r = d.row_index(&preds, &parse_row_key(row)).unwrap();
                d.value_node_mut().unwrap().utilities[r] = *u;
            }
            (SlotTarget::CptRow { .. }, _) => return Err(shape_error(slot, "a probability row")),
            (SlotTarget::Cpt { .. }, _) => {
                return Err(shape_error(slot, "one probability row per predecessor state"))
            }
            (SlotTarget::Utilities { .. }, _) => return Err(shape_error(slot, "a list of utilities")),
            (SlotTarget::UtilityRow { .. }, _) => return Err(shape_error(slot, "a single utility")),
        }
    }
    let report = validate(&d);
    if !report.is_valid() {
        return Err(Error::Invalid(report));
    }
    Ok(d)
}

fn chance_rows<'a>(d: &'a mut InfluenceDiagram, node: &str) -> &'a mut Vec<Vec<f64>> {
    match d.node_mut(node) {
        Some(Node::Chance(c)) => c.table.rows_mut(),
        _ => unreachable!("slot targets were checked when the library was loaded"),
    }
}
