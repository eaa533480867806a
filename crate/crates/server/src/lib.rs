//! File store, HTTP API and command line for the decision engine.

pub mod api;
pub mod cli;
pub mod store;
