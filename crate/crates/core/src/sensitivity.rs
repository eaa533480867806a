//! One-way sensitivity analysis: parameter sweeps, decision thresholds,
//! tornado ranking and the expected value of perfect information.
//!
//! A parameter is a single table entry, addressed by a [`ParamRef`]. When a
//! probability is changed the rest of its row is rescaled proportionally so
//! the row still sums to one.
//!
//! The "first-stage alternative" used as the decision-change signal is the
//! choice of the temporally first decision in its first information state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diagram::{
    canonicalize, validate, ChanceNode, InfluenceDiagram, Node, ROW_SUM_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::solver::{solve, SolveResult};

/// Number of uniform scan points used by [`thresholds`].
pub const THRESHOLD_SCAN_POINTS: usize = 101;
/// Width below which threshold bisection stops.
pub const THRESHOLD_TOLERANCE: f64 = 1e-6;

/// Address of a single numeric entry of a diagram.
///
/// Text form: `NODE/ROW/OUTCOME` for a probability and `NODE/ROW` for a
/// utility, where `ROW` is the `|`-separated predecessor outcomes (empty for
/// a node without predecessors). `\` escapes `/`, `|` and itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParamRef {
    Probability {
        node: String,
        row: Vec<String>,
        outcome: String,
    },
    Utility {
        node: String,
        row: Vec<String>,
    },
}

impl ParamRef {
    pub fn probability(node: &str, row: &[&str], outcome: &str) -> Self {
        ParamRef::Probability {
            node: node.to_string(),
            row: row.iter().map(|s| s.to_string()).collect(),
            outcome: outcome.to_string(),
        }
    }

    pub fn utility(node: &str, row: &[&str]) -> Self {
        ParamRef::Utility {
            node: node.to_string(),
            row: row.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn node(&self) -> &str {
        match self {
            ParamRef::Probability { node, .. } | ParamRef::Utility { node, .. } => node,
        }
    }

    pub fn is_probability(&self) -> bool {
        matches!(self, ParamRef::Probability { .. })
    }
}

fn escape(text: &str, out: &mut String) {
    for ch in text.chars() {
        if matches!(ch, '/' | '|' | '\\') {
            out.push('\\');
        }
        out.push(ch);
    }
}

impl fmt::Display for ParamRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (node, row, outcome) = match self {
            ParamRef::Probability { node, row, outcome } => (node, row, Some(outcome)),
            ParamRef::Utility { node, row } => (node, row, None),
        };
        let mut out = String::new();
        escape(node, &mut out);
        out.push('/');
        for (i, label) in row.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            escape(label, &mut out);
        }
        if let Some(o) = outcome {
            out.push('/');
            escape(o, &mut out);
        }
        f.write_str(&out)
    }
}

impl FromStr for ParamRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // components split on unescaped '/', pieces within a component on '|'
        let mut components: Vec<Vec<String>> = vec![vec![String::new()]];
        let mut chars = s.chars();
        while let Some(ch) = chars.next() {
            match ch {
                '\\' => {
                    let next = chars.next().unwrap_or('\\');
                    components.last_mut().unwrap().last_mut().unwrap().push(next);
                }
                '/' => components.push(vec![String::new()]),
                '|' => components.last_mut().unwrap().push(String::new()),
                other => components.last_mut().unwrap().last_mut().unwrap().push(other),
            }
        }
        let bad = || Error::Parse {
            message: format!("`{s}` is not NODE/ROW/OUTCOME or NODE/ROW"),
            line: None,
            column: None,
        };
        let single = |c: &Vec<String>| -> Result<String> {
            match c.as_slice() {
                [one] if !one.is_empty() => Ok(one.clone()),
                _ => Err(bad()),
            }
        };
        let row = |c: &Vec<String>| -> Vec<String> {
            if c.len() == 1 && c[0].is_empty() {
                Vec::new()
            } else {
                c.clone()
            }
        };
        match components.as_slice() {
            [node, r] => Ok(ParamRef::Utility {
                node: single(node)?,
                row: row(r),
            }),
            [node, r, outcome] => Ok(ParamRef::Probability {
                node: single(node)?,
                row: row(r),
                outcome: single(outcome)?,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ParamRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn not_found(p: &ParamRef) -> Error {
    Error::ParamNotFound(p.to_string())
}

/// Current value of the entry `p` addresses.
pub fn param_value(d: &InfluenceDiagram, p: &ParamRef) -> Result<f64> {
    match p {
        ParamRef::Probability { node, row, outcome } => {
            let c = d.chance(node).ok_or_else(|| not_found(p))?;
            let r = d.row_index(&c.predecessors, row).ok_or_else(|| not_found(p))?;
            let k = c.variable.outcome_index(outcome).ok_or_else(|| not_found(p))?;
            c.table
                .row(r)
                .and_then(|row| row.get(k))
                .copied()
                .ok_or_else(|| not_found(p))
        }
        ParamRef::Utility { node, row } => {
            let v = match d.node(node) {
                Some(Node::Value(v)) => v,
                _ => return Err(not_found(p)),
            };
            let r = d.row_index(&v.predecessors, row).ok_or_else(|| not_found(p))?;
            v.utilities.get(r).copied().ok_or_else(|| not_found(p))
        }
    }
}

/// Rejects values a parameter cannot take.
pub fn check_value(p: &ParamRef, value: f64) -> Result<()> {
    let ok = match p {
        ParamRef::Probability { .. } => (0.0..=1.0).contains(&value),
        ParamRef::Utility { .. } => value.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::BadGrid(value))
    }
}

/// Copy of `d` with the entry at `p` set to `value`. For a probability the
/// other entries of the row are scaled by a common factor so the row sums
/// to one; if they were all zero, the remainder is spread evenly.
pub fn with_param(d: &InfluenceDiagram, p: &ParamRef, value: f64) -> Result<InfluenceDiagram> {
    param_value(d, p)?;
    check_value(p, value)?;
    let mut out = d.clone();
    match p {
        ParamRef::Probability { node, row, outcome } => {
            let c = d.chance(node).unwrap();
            let r = d.row_index(&c.predecessors, row).unwrap();
            let k = c.variable.outcome_index(outcome).unwrap();
            let mut rows = c.table.rows().to_vec();
            let entries = &mut rows[r];
            let others: f64 = entries
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, &x)| x)
                .sum();
            let rest = 1.0 - value;
            if entries.len() == 1 {
                if (value - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::BadGrid(value));
                }
            } else if others > 0.0 {
                let scale = rest / others;
                for (i, x) in entries.iter_mut().enumerate() {
                    if i != k {
                        *x *= scale;
                    }
                }
            } else {
                let share = rest / (entries.len() - 1) as f64;
                for (i, x) in entries.iter_mut().enumerate() {
                    if i != k {
                        *x = share;
                    }
                }
            }
            entries[k] = value;
            out.replace_node(
                ChanceNode::new(c.variable.clone(), c.predecessors.clone(), rows).into(),
            );
        }
        ParamRef::Utility { row, .. } => {
            let preds = d.value_node().unwrap().predecessors.clone();
            let r = d.row_index(&preds, row).unwrap();
            out.value_node_mut().unwrap().utilities[r] = value;
        }
    }
    Ok(out)
}

/// Temporally first decision of a valid diagram.
pub fn first_decision(d: &InfluenceDiagram) -> Result<Option<String>> {
    Ok(d.decision_order()?.into_iter().next())
}

/// Copy of `d` in which `decision` always takes alternative `index`.
///
/// The decision becomes a chance node without predecessors whose single
/// row puts all mass on `index`; later decisions still observe it.
pub fn force_alternative(
    d: &InfluenceDiagram,
    decision: &str,
    index: usize,
) -> Result<InfluenceDiagram> {
    let dec = d
        .decision(decision)
        .ok_or_else(|| Error::NotDecision(decision.to_string()))?;
    let card = dec.variable.cardinality();
    if index >= card {
        return Err(Error::ParamNotFound(format!("{decision}#{index}")));
    }
    let mut row = vec![0.0; card];
    row[index] = 1.0;
    let mut out = d.clone();
    out.replace_node(ChanceNode::new(dec.variable.clone(), vec![], vec![row]).into());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeValue {
    pub alternative: String,
    pub expected_utility: f64,
}

/// Expected utility of each alternative of the first decision when that
/// alternative is forced and every later decision is taken optimally.
pub fn forced_alternative_values(d: &InfluenceDiagram) -> Result<Vec<AlternativeValue>> {
    let d = canonicalize(d)?;
    let Some(first) = first_decision(&d)? else {
        return Ok(Vec::new());
    };
    let variable = d.variable(&first).unwrap().clone();
    (0..variable.cardinality())
        .map(|k| {
            let forced = force_alternative(&d, &first, k)?;
            Ok(AlternativeValue {
                alternative: variable.outcomes()[k].clone(),
                expected_utility: solve(&forced)?.expected_utility,
            })
        })
        .collect()
}

/// Label of the first-stage alternative chosen by `result`.
pub fn first_stage_label(d: &InfluenceDiagram, result: &SolveResult) -> Option<String> {
    let rule = result.policy.rules.first()?;
    let variable = d.variable(&rule.decision)?;
    Some(variable.outcomes()[rule.choices[0]].clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// One entry per first-decision alternative, in alternative order.
    pub forced: Vec<AlternativeValue>,
    pub expected_utility: f64,
    pub optimal_alternative: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: ParamRef,
    pub points: Vec<SweepPoint>,
}

fn prepared(d: &InfluenceDiagram) -> Result<InfluenceDiagram> {
    let report = validate(d);
    if !report.is_valid() {
        return Err(Error::Invalid(report));
    }
    canonicalize(d)
}

/// Re-solves `d` with `p` set to each grid value in turn.
pub fn sweep(d: &InfluenceDiagram, p: &ParamRef, grid: &[f64]) -> Result<SweepResult> {
    let base = prepared(d)?;
    param_value(&base, p)?;
    for &v in grid {
        check_value(p, v)?;
    }
    let points = grid
        .iter()
        .map(|&value| {
            let trial = with_param(&base, p, value)?;
            let result = solve(&trial)?;
            Ok(SweepPoint {
                value,
                forced: forced_alternative_values(&trial)?,
                expected_utility: result.expected_utility,
                optimal_alternative: first_stage_label(&trial, &result),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        param: p.clone(),
        points,
    })
}

fn first_stage_at(base: &InfluenceDiagram, p: &ParamRef, value: f64) -> Result<Option<usize>> {
    let trial = with_param(base, p, value)?;
    Ok(solve(&trial)?.policy.first_stage_choice())
}

/// Probability values in (0, 1) at which the first-stage alternative
/// changes, scanning [`THRESHOLD_SCAN_POINTS`] uniform points.
pub fn thresholds(d: &InfluenceDiagram, p: &ParamRef) -> Result<Vec<f64>> {
    thresholds_with(d, p, THRESHOLD_SCAN_POINTS)
}

/// [`thresholds`] with a custom scan density (at least two points).
///
/// Each change between adjacent scan points is bisected down to
/// [`THRESHOLD_TOLERANCE`]; two changes inside one scan interval are not
/// resolved separately.
pub fn thresholds_with(d: &InfluenceDiagram, p: &ParamRef, scan_points: usize) -> Result<Vec<f64>> {
    if !p.is_probability() {
        return Err(Error::ParamNotFound(format!(
            "{p} (thresholds are defined for probabilities only)"
        )));
    }
    let base = prepared(d)?;
    param_value(&base, p)?;
    let n = scan_points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let choices = grid
        .iter()
        .map(|&v| first_stage_at(&base, p, v))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for k in 1..n {
        if choices[k] == choices[k - 1] {
            continue;
        }
        let (mut lo, mut hi) = (grid[k - 1], grid[k]);
        let left = choices[k - 1];
        while hi - lo > THRESHOLD_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if first_stage_at(&base, p, mid)? == left {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TornadoEntry {
    pub param: ParamRef,
    pub low: f64,
    pub high: f64,
    pub utility_at_low: f64,
    pub utility_at_high: f64,
    pub swing: f64,
}

/// Optimal expected utility at the ends of each parameter range, ranked by
/// swing (largest first, ties by node name).
pub fn tornado(d: &InfluenceDiagram, params: &[(ParamRef, f64, f64)]) -> Result<Vec<TornadoEntry>> {
    if params.is_empty() {
        return Ok(Vec::new());
    }
    let base = prepared(d)?;
    let mut entries = params
        .iter()
        .map(|(p, low, high)| {
            let utility_at_low = solve(&with_param(&base, p, *low)?)?.expected_utility;
            let utility_at_high = solve(&with_param(&base, p, *high)?)?.expected_utility;
            Ok(TornadoEntry {
                param: p.clone(),
                low: *low,
                high: *high,
                utility_at_low,
                utility_at_high,
                swing: (utility_at_high - utility_at_low).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        b.swing
            .total_cmp(&a.swing)
            .then_with(|| a.param.node().cmp(b.param.node()))
    });
    Ok(entries)
}

/// Gain in optimal expected utility from observing `chance` before
/// `decision`.
pub fn evpi(d: &InfluenceDiagram, chance: &str, decision: &str) -> Result<f64> {
    let base = prepared(d)?;
    if base.chance(chance).is_none() {
        return Err(Error::NotChance(chance.to_string()));
    }
    if base.decision(decision).is_none() {
        return Err(Error::NotDecision(decision.to_string()));
    }
    if base.has_path(decision, chance) {
        return Err(Error::WouldCycle {
            chance: chance.to_string(),
            decision: decision.to_string(),
        });
    }
    let without = solve(&base)?.expected_utility;
    let mut informed = base.clone();
    let node = informed.node_mut(decision).unwrap();
    if !node.predecessors().iter().any(|p| p == chance) {
        node.predecessors_mut().push(chance.to_string());
    }
    let with = solve(&canonicalize(&informed)?)?.expected_utility;
    Ok(with - without)
}
