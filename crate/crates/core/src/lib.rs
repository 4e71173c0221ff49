//! Collaborative representation classification in kernel feature spaces,
//! with locality-constrained dictionaries for scaling to large atom sets.
//!
//! The pipeline is: load or synthesize a labeled dictionary
//! ([`dataset`]), pick a distance metric ([`metrics`]) and a kernel
//! ([`kernel`]), reduce the kernelized dictionary with a pseudo
//! transformation ([`reduction`]), code queries with a regularized
//! least-squares or robust solver ([`solver`]), and classify by
//! class-wise residuals ([`classify`]), optionally restricting each
//! query to a local sub-dictionary ([`lcd`]). Benchmark drivers live
//! in [`bench`].

pub mod bench;
pub mod classify;
pub mod dataset;
pub mod error;
pub mod kernel;
pub mod lcd;
pub mod metrics;
pub mod reduction;
pub mod solver;

pub use error::{Error, Result};
