//! Benchmark machinery for causal-discovery estimators on single-gene
//! knockout data.
//!
//! The crate is organised around the evaluation flow:
//!
//! - [`dataset`]: observational/interventional expression matrices plus the
//!   knockout map, and their text file formats.
//! - [`estimators`]: Lasso, Causal Dantzig, Invariant Causal Prediction and
//!   the permuted-Lasso baseline.
//! - [`scoring`]: knockout ground truth, full vs. symmetric scoring sets,
//!   ROC points, top-p0 hits and the flipped-rank diagnostic.
//! - [`pipeline`]: cross-validated, bootstrapped ranking of every gene pair.
//! - [`simulator`]: random DAGs, linear SEM sampling with shift knockouts and
//!   the Monte Carlo trial driver.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod pipeline;
pub mod scoring;
pub mod seed;
pub mod simulator;

mod linalg;

pub use error::{Error, Result};
