//! Consultation sessions: select a schema, bind it, solve, then refine.
//!
//! Sessions are event-sourced. Every state change is an [`Event`] appended
//! to the session's log and [`Session::replay`] rebuilds the same state from
//! that log.

use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::diagram::{canonicalize, InfluenceDiagram, Node};
use crate::error::{Error, Result};
use crate::schema::{instantiate, select_schema, Bindings, FeatureVector, SchemaLibrary};
use crate::sensitivity::{
    check_value, first_decision, first_stage_label, forced_alternative_values, param_value,
    tornado, with_param, AlternativeValue, ParamRef, TornadoEntry,
};
use crate::solver::{solve, strictly_better, SolveResult, TraceStep};

/// Tornado entries listed in a report by default.
pub const REPORT_TORNADO_ENTRIES: usize = 3;
/// Half-width of the range each probability is swept over in a report.
pub const REPORT_TORNADO_SPAN: f64 = 0.1;
/// Swings at or below this are treated as no sensitivity.
pub const SWING_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Formulate,
    Assess,
    Refine,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Formulate => "FORMULATE",
            Phase::Assess => "ASSESS",
            Phase::Refine => "REFINE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Started {
        features: FeatureVector,
        schema_id: String,
    },
    /// Bindings instantiated into a diagram; the session enters ASSESS.
    BindingsAccepted { bindings: Bindings },
    /// Bindings refused; the session is unchanged.
    BindingsRejected {
        bindings: Bindings,
        code: String,
        message: String,
    },
    /// Baseline solved; the session enters REFINE.
    Solved { expected_utility: f64 },
    Committed {
        param: ParamRef,
        value: f64,
        previous_value: f64,
        previous_expected_utility: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub phase: Phase,
    pub features: FeatureVector,
    pub schema_id: String,
    pub diagram: Option<InfluenceDiagram>,
    pub baseline: Option<SolveResult>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub phase: Phase,
    pub features: FeatureVector,
    pub schema_id: String,
    pub expected_utility: Option<f64>,
    pub recommended: Option<String>,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub param: ParamRef,
    pub value: f64,
    pub trial: SolveResult,
    pub baseline: SolveResult,
    pub trial_alternative: Option<String>,
    pub baseline_alternative: Option<String>,
    pub changed_decision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    /// Observed outcomes, one per information variable.
    pub observed: Vec<String>,
    pub choice: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub decision: String,
    pub information: Vec<String>,
    pub rows: Vec<PolicyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub barren_removals: usize,
    pub arc_reversals: usize,
    pub chance_removals: usize,
    pub decision_removals: usize,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationReport {
    pub decision: Option<String>,
    pub recommended: Option<String>,
    pub expected_utility: f64,
    /// Expected utility of each first-stage alternative when forced.
    pub alternatives: Vec<AlternativeValue>,
    pub policy: Vec<PolicyTable>,
    pub tornado: Vec<TornadoEntry>,
    pub trace: TraceSummary,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn assess(library: &SchemaLibrary, schema_id: &str, bindings: &Bindings) -> Result<InfluenceDiagram> {
    let schema = library.schema(schema_id).ok_or_else(|| Error::BadSchema {
        schema: schema_id.to_string(),
        reason: "not in the library".into(),
    })?;
    canonicalize(&instantiate(schema, bindings)?)
}

/// Opens a consultation in FORMULATE with the schema matching `features`.
pub fn start_session(features: FeatureVector, library: &SchemaLibrary) -> Result<Session> {
    let schema_id = select_schema(&features, library)?.id.clone();
    let id = uuid::Uuid::new_v4().to_string();
    let started = Event {
        seq: 0,
        at_ms: now_ms(),
        kind: EventKind::Started {
            features,
            schema_id,
        },
    };
    Session::replay(id, vec![started], library)
}

impl Session {
    /// Rebuilds a session from its event log.
    pub fn replay(id: String, events: Vec<Event>, library: &SchemaLibrary) -> Result<Session> {
        let mut events = events.into_iter();
        let Some(first) = events.next() else {
            return Err(replay_error("event log is empty"));
        };
        let EventKind::Started {
            features,
            schema_id,
        } = &first.kind
        else {
            return Err(replay_error("event log does not start with `started`"));
        };
        let mut session = Session {
            id,
            phase: Phase::Formulate,
            features: features.clone(),
            schema_id: schema_id.clone(),
            diagram: None,
            baseline: None,
            events: vec![first],
        };
        for event in events {
            session.apply(event, library)?;
        }
        Ok(session)
    }

    fn apply(&mut self, event: Event, library: &SchemaLibrary) -> Result<()> {
        match &event.kind {
            EventKind::Started { .. } => return Err(replay_error("session started twice")),
            EventKind::BindingsAccepted { bindings } => {
                self.require(Phase::Formulate)?;
                self.diagram = Some(assess(library, &self.schema_id, bindings)?);
                self.phase = Phase::Assess;
            }
            EventKind::BindingsRejected { .. } => self.require(Phase::Formulate)?,
            EventKind::Solved { .. } => {
                self.require(Phase::Assess)?;
                self.baseline = Some(solve(self.diagram.as_ref().unwrap())?);
                self.phase = Phase::Refine;
            }
            EventKind::Committed { param, value, .. } => {
                self.require(Phase::Refine)?;
                let (diagram, result) = self.trial(param, *value)?;
                self.diagram = Some(diagram);
                self.baseline = Some(result);
            }
        }
        self.events.push(event);
        Ok(())
    }

    fn next_event(&self, kind: EventKind) -> Event {
        Event {
            seq: self.events.len() as u64,
            at_ms: now_ms(),
            kind,
        }
    }

    fn require(&self, phase: Phase) -> Result<()> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(Error::WrongPhase {
                expected: phase.to_string(),
                actual: self.phase.to_string(),
            })
        }
    }

    fn trial(&self, p: &ParamRef, value: f64) -> Result<(InfluenceDiagram, SolveResult)> {
        check_value(p, value)?;
        let d = with_param(self.diagram.as_ref().unwrap(), p, value)?;
        let result = solve(&d)?;
        Ok((d, result))
    }

    /// Instantiates the schema with `bindings`, solves it and moves to
    /// REFINE. On failure the session stays in FORMULATE and the rejection
    /// is logged.
    pub fn provide_bindings(&mut self, bindings: Bindings, library: &SchemaLibrary) -> Result<()> {
        self.require(Phase::Formulate)?;
        let outcome = assess(library, &self.schema_id, &bindings).and_then(|d| solve(&d).map(|_| d));
        if let Err(e) = outcome {
            let event = self.next_event(EventKind::BindingsRejected {
                bindings,
                code: e.code().to_string(),
                message: e.to_string(),
            });
            self.events.push(event);
            return Err(e);
        }
        let mut next = self.clone();
        let accepted = next.next_event(EventKind::BindingsAccepted { bindings });
        next.apply(accepted, library)?;
        let expected_utility = solve(next.diagram.as_ref().unwrap())?.expected_utility;
        let solved = next.next_event(EventKind::Solved { expected_utility });
        next.apply(solved, library)?;
        *self = next;
        Ok(())
    }

    /// Solves a copy with `p` set to `value`; the session is not modified.
    pub fn whatif(&self, p: &ParamRef, value: f64) -> Result<WhatIfResult> {
        self.require(Phase::Refine)?;
        let (d, trial) = self.trial(p, value)?;
        let baseline = self.baseline.clone().unwrap();
        let trial_alternative = first_stage_label(&d, &trial);
        let baseline_alternative = first_stage_label(self.diagram.as_ref().unwrap(), &baseline);
        Ok(WhatIfResult {
            param: p.clone(),
            value,
            changed_decision: trial.policy.first_stage_choice()
                != baseline.policy.first_stage_choice(),
            trial,
            baseline,
            trial_alternative,
            baseline_alternative,
        })
    }

    /// Sets `p` to `value` in the session diagram and re-solves.
    pub fn commit(&mut self, p: &ParamRef, value: f64, library: &SchemaLibrary) -> Result<()> {
        self.require(Phase::Refine)?;
        let previous_value = param_value(self.diagram.as_ref().unwrap(), p)?;
        let previous_expected_utility = self.baseline.as_ref().unwrap().expected_utility;
        let event = self.next_event(EventKind::Committed {
            param: p.clone(),
            value,
            previous_value,
            previous_expected_utility,
        });
        // apply is all-or-nothing: it fails before touching any field
        self.apply(event, library)
    }

    pub fn report(&self) -> Result<RecommendationReport> {
        self.report_with(REPORT_TORNADO_ENTRIES)
    }

    pub fn report_with(&self, tornado_entries: usize) -> Result<RecommendationReport> {
        self.require(Phase::Refine)?;
        let d = self.diagram.as_ref().unwrap();
        let baseline = self.baseline.as_ref().unwrap();

        let alternatives = forced_alternative_values(d)?;
        let mut best: Option<usize> = None;
        for (k, a) in alternatives.iter().enumerate() {
            if best.is_none_or(|b| strictly_better(a.expected_utility, alternatives[b].expected_utility)) {
                best = Some(k);
            }
        }

        let policy = baseline
            .policy
            .rules
            .iter()
            .map(|rule| {
                let variable = d.variable(&rule.decision).unwrap();
                PolicyTable {
                    decision: rule.decision.clone(),
                    information: rule.information.clone(),
                    rows: rule
                        .choices
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| PolicyRow {
                            observed: d.row_labels(&rule.information, i),
                            choice: variable.outcomes()[c].clone(),
                        })
                        .collect(),
                }
            })
            .collect();

        let mut entries = tornado(d, &probability_ranges(d))?;
        entries.retain(|e| e.swing > SWING_EPSILON);
        entries.truncate(tornado_entries);

        let (barren_removals, arc_reversals, chance_removals, decision_removals) =
            baseline.trace.counts();
        Ok(RecommendationReport {
            decision: first_decision(d)?,
            recommended: best.map(|k| alternatives[k].alternative.clone()),
            expected_utility: baseline.expected_utility,
            alternatives,
            policy,
            tornado: entries,
            trace: TraceSummary {
                barren_removals,
                arc_reversals,
                chance_removals,
                decision_removals,
                steps: baseline.trace.steps.clone(),
            },
        })
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            phase: self.phase,
            features: self.features.clone(),
            schema_id: self.schema_id.clone(),
            expected_utility: self.baseline.as_ref().map(|b| b.expected_utility),
            recommended: match (&self.diagram, &self.baseline) {
                (Some(d), Some(b)) => first_stage_label(d, b),
                _ => None,
            },
            events: self.events.len(),
        }
    }
}

fn replay_error(message: &str) -> Error {
    Error::Parse {
        message: format!("invalid event log: {message}"),
        line: None,
        column: None,
    }
}

/// Every CPT entry with a range of one span either side, clamped to [0, 1].
fn probability_ranges(d: &InfluenceDiagram) -> Vec<(ParamRef, f64, f64)> {
    let mut out = Vec::new();
    for node in d.nodes() {
        let Node::Chance(c) = node else { continue };
        for (r, row) in c.table.rows().iter().enumerate() {
            let labels = d.row_labels(&c.predecessors, r);
            for (k, &p) in row.iter().enumerate() {
                out.push((
                    ParamRef::Probability {
                        node: c.variable.name().to_string(),
                        row: labels.clone(),
                        outcome: c.variable.outcomes()[k].clone(),
                    },
                    (p - REPORT_TORNADO_SPAN).max(0.0),
                    (p + REPORT_TORNADO_SPAN).min(1.0),
                ));
            }
        }
    }
    out
}
