//! High-dimensional survival analysis: Cox models with penalized paths,
//! screening, resampling inference, censored quantile regression, Dantzig
//! selectors for accelerated failure time models, survival SVMs, trees and
//! ensembles, shallow networks, semi-competing-risks frailty models, and a
//! deterministic simulation engine.

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod data;
pub mod aftdantzig;
pub mod coxcore;
pub mod coxnet;
pub mod cqr;
pub mod error;
pub mod linalg;
pub mod linmodel;
pub mod lp;
pub mod mlp;
pub mod nonparam;
pub mod scr;
pub mod simulate;
pub mod penalties;
pub mod screening;
pub mod spares;
pub mod svm;
pub mod trees;
pub mod util;

pub use error::{Error, Result};
