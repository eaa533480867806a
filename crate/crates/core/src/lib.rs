//! Decision analysis on influence diagrams.
//!
//! A decision is modelled as an [`InfluenceDiagram`] of chance, decision and
//! value nodes over discrete variables. [`solve`] finds the policy that
//! maximizes expected utility, the [`sensitivity`] module shows which
//! assessments matter, and [`consult`] drives an interactive consultation
//! that starts from a [`schema`] library.

pub mod consult;
pub mod diagram;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod generate;
pub mod schema;
pub mod sensitivity;
pub mod solver;
pub mod table;

pub use diagram::{
    canonicalize, topological_order, validate, ChanceNode, ConditionalTable, DecisionNode,
    InfluenceDiagram, Node, NodeKind, ValidationReport, ValueNode, Variable, Violation,
    ViolationCode,
};
pub use error::{Error, Result};
pub use solver::{
    evaluate_policy, solve, solve_oracle, DecisionRule, EliminationTrace, Policy, SolveResult,
    TraceStep,
};
