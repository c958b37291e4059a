//! Batch front end for the hdsurv library: each subcommand reads a JSON run
//! configuration, executes one pipeline, and writes its artifacts plus a
//! provenance manifest next to them.

pub mod artifacts;
pub mod config;
pub mod runner;
