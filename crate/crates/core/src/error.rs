use thiserror::Error;

use crate::diagram::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by engine operations.
///
/// Every variant maps onto a stable machine-readable code (see [`Error::code`]);
/// clients should match on the code, not on the message text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("diagram failed validation: {0}")]
    Invalid(ValidationReport),

    #[error("graph contains a cycle through {0:?}")]
    Cycle(Vec<String>),

    #[error("decisions are not totally ordered by a directed path")]
    DecisionsUnordered,

    #[error("invalid variable `{name}`: {reason}")]
    BadVariable { name: String, reason: String },

    #[error("cannot reverse {from} -> {to}: another directed path connects them")]
    ReversalPath { from: String, to: String },

    #[error("`{0}` is not a chance node")]
    NotChance(String),

    #[error("`{0}` is not a decision node")]
    NotDecision(String),

    #[error("node `{node}` cannot be removed: {reason}")]
    NotRemovable { node: String, reason: String },

    #[error("solver exceeded its step budget of {0}")]
    Nontermination(usize),

    #[error("{what} count {count} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        count: u128,
        limit: u128,
    },

    #[error("parameter `{0}` does not resolve to a table entry")]
    ParamNotFound(String),

    #[error("grid value {0} is out of range for a probability")]
    BadGrid(f64),

    #[error("adding {chance} -> {decision} would create a cycle")]
    WouldCycle { chance: String, decision: String },

    #[error("no schema in the library applies to the given features")]
    NoApplicableSchema,

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("no binding supplied for slot `{0}`")]
    MissingSlot(String),

    #[error("binding supplied for unknown slot `{0}`")]
    UnknownSlot(String),

    #[error("binding for slot `{slot}` is invalid: {reason}")]
    InvalidRow { slot: String, reason: String },

    #[error("schema `{schema}` is malformed: {reason}")]
    BadSchema { schema: String, reason: String },

    #[error("operation requires phase {expected}, session is in {actual}")]
    WrongPhase { expected: String, actual: String },

    #[error("parse error{}: {message}", location(.line, .column))]
    Parse {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },

    #[error("unsupported document version {0}")]
    UnsupportedVersion(u64),

    #[error("node `{node}` has no row for key `{row}`")]
    MissingRow { node: String, row: String },
}

fn location(line: &Option<usize>, column: &Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Invalid(report) => report
                .violations
                .first()
                .map(|v| v.code.as_str())
                .unwrap_or("INVALID"),
            Error::Cycle(_) => "CYCLE",
            Error::DecisionsUnordered => "DECISIONS_UNORDERED",
            Error::BadVariable { .. } => "BAD_VARIABLE",
            Error::ReversalPath { .. } => "REVERSAL_PATH",
            Error::NotChance(_) => "NOT_CHANCE",
            Error::NotDecision(_) => "NOT_DECISION",
            Error::NotRemovable { .. } => "NOT_REMOVABLE",
            Error::Nontermination(_) => "INTERNAL_NONTERMINATION",
            Error::TooLarge { .. } => "TOO_LARGE",
            Error::ParamNotFound(_) => "PARAM_NOT_FOUND",
            Error::BadGrid(_) => "BAD_GRID",
            Error::WouldCycle { .. } => "WOULD_CYCLE",
            Error::NoApplicableSchema => "NO_APPLICABLE_SCHEMA",
            Error::UnknownFeature(_) => "UNKNOWN_FEATURE",
            Error::MissingSlot(_) => "MISSING_SLOT",
            Error::UnknownSlot(_) => "UNKNOWN_SLOT",
            Error::InvalidRow { .. } => "INVALID_ROW",
            Error::BadSchema { .. } => "BAD_SCHEMA",
            Error::WrongPhase { .. } => "WRONG_PHASE",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::UnsupportedVersion(_) => "UNSUPPORTED_VERSION",
            Error::MissingRow { .. } => "MISSING_ROW",
        }
    }

    /// Node, slot or row the error refers to, when there is one.
    pub fn context(&self) -> Option<String> {
        match self {
            Error::Invalid(report) => report.violations.first().map(|v| v.subject.clone()),
            Error::BadVariable { name, .. } => Some(name.clone()),
            Error::ReversalPath { from, to } => Some(format!("{from}->{to}")),
            Error::NotChance(n) | Error::NotDecision(n) => Some(n.clone()),
            Error::NotRemovable { node, .. } => Some(node.clone()),
            Error::ParamNotFound(p) => Some(p.clone()),
            Error::WouldCycle { chance, decision } => Some(format!("{chance}->{decision}")),
            Error::UnknownFeature(f) => Some(f.clone()),
            Error::MissingSlot(s) | Error::UnknownSlot(s) => Some(s.clone()),
            Error::InvalidRow { slot, .. } => Some(slot.clone()),
            Error::BadSchema { schema, .. } => Some(schema.clone()),
            Error::MissingRow { node, row } => Some(format!("{node}[{row}]")),
            Error::Parse {
                line: Some(l),
                column,
                ..
            } => Some(match column {
                Some(c) => format!("line {l}, column {c}"),
                None => format!("line {l}"),
            }),
            _ => None,
        }
    }
}
