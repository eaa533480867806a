//! Small reference diagrams used throughout the tests and documentation.

use crate::diagram::{ChanceNode, DecisionNode, InfluenceDiagram, ValueNode, Variable};
use crate::schema::{Bindings, SlotValue};

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn treatment() -> Variable {
    Variable::new("D", ["treat", "wait"]).unwrap()
}

/// Treat or wait; the outcome depends on the choice.
///
/// `D -> O -> V` with P(success|treat)=0.6, P(success|wait)=0.2,
/// V(success)=100, V(failure)=0.
pub fn d1() -> InfluenceDiagram {
    InfluenceDiagram::new(
        "D1",
        vec![
            DecisionNode::new(treatment(), vec![]).into(),
            ChanceNode::new(
                Variable::new("O", ["success", "failure"]).unwrap(),
                names(&["D"]),
                vec![vec![0.6, 0.4], vec![0.2, 0.8]],
            )
            .into(),
            ValueNode::new("V", names(&["O"]), vec![100.0, 0.0]).into(),
        ],
    )
}

fn d2_with(decision_preds: &[&str], name: &str) -> InfluenceDiagram {
    InfluenceDiagram::new(
        name,
        vec![
            ChanceNode::new(
                Variable::new("S", ["good", "bad"]).unwrap(),
                vec![],
                vec![vec![0.5, 0.5]],
            )
            .into(),
            DecisionNode::new(treatment(), names(decision_preds)).into(),
            ValueNode::new("V", names(&["S", "D"]), vec![100.0, 40.0, 0.0, 40.0]).into(),
        ],
    )
}

/// Treatment pays off only when the unobserved state S is good.
///
/// P(S=good)=0.5; V(good,treat)=100, V(bad,treat)=0, V(·,wait)=40.
pub fn d2() -> InfluenceDiagram {
    d2_with(&[], "D2")
}

/// [`d2`] with S observed before the decision.
pub fn d2_informed() -> InfluenceDiagram {
    d2_with(&["S"], "D2-informed")
}

/// Two chance nodes, no decision: X -> Y -> V.
///
/// P(x1)=0.5, P(y1|x1)=0.8, P(y1|x0)=0.4; V(y1)=100, V(y0)=0.
pub fn d3() -> InfluenceDiagram {
    InfluenceDiagram::new(
        "D3",
        vec![
            ChanceNode::new(
                Variable::new("X", ["x1", "x0"]).unwrap(),
                vec![],
                vec![vec![0.5, 0.5]],
            )
            .into(),
            ChanceNode::new(
                Variable::new("Y", ["y1", "y0"]).unwrap(),
                names(&["X"]),
                vec![vec![0.8, 0.2], vec![0.4, 0.6]],
            )
            .into(),
            ValueNode::new("V", names(&["Y"]), vec![100.0, 0.0]).into(),
        ],
    )
}

/// Bindings for the shipped `outcome` schema that reproduce [`d1`].
pub fn outcome_bindings() -> Bindings {
    bindings(&[
        ("outcome_if_treat", SlotValue::Row(vec![0.6, 0.4])),
        ("outcome_if_wait", SlotValue::Row(vec![0.2, 0.8])),
        ("outcome_value", SlotValue::Row(vec![100.0, 0.0])),
    ])
}

/// Bindings for the shipped `prognosis` schema that reproduce [`d2`].
pub fn prognosis_bindings() -> Bindings {
    bindings(&[
        ("prognosis", SlotValue::Row(vec![0.5, 0.5])),
        ("utilities", SlotValue::Row(vec![100.0, 40.0, 0.0, 40.0])),
    ])
}

/// Example bindings for each schema in the shipped library.
pub fn schema_bindings(schema_id: &str) -> Option<Bindings> {
    match schema_id {
        "outcome" => Some(outcome_bindings()),
        "prognosis" => Some(prognosis_bindings()),
        "diagnostic-test" => Some(bindings(&[
            ("prior", SlotValue::Row(vec![0.5, 0.5])),
            ("utilities", SlotValue::Row(vec![100.0, 40.0, 0.0, 40.0])),
        ])),
        _ => None,
    }
}

fn bindings(pairs: &[(&str, SlotValue)]) -> Bindings {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}
