//! Hidden community recovery: information-theoretic thresholds, maximum
//! likelihood and voting-based cleanup estimators, and a reproducible Monte
//! Carlo harness.
//!
//! An instance is a symmetric `n x n` matrix whose entries are drawn from `P`
//! when both endpoints lie in a hidden set `C*` of size `K` and from `Q`
//! otherwise. Everything downstream works with the log-likelihood ratio
//!
//! ```text
//! L(x) = log dP/dQ (x)
//! ```

pub mod error;
pub mod seed;
pub mod stats;
pub mod dists;
pub mod ldp;
pub mod thresholds;
pub mod model;
pub mod estimators;
pub mod cleanup;
pub mod harness;

pub use dists::{DistPair, Measure, PairKind};
pub use error::{Error, Result};
pub use model::{DiagMode, Instance, LlrMatrix, SymMatrix};

/// Build identifier embedded in every file header.
pub const BUILD_TAG: &str = concat!("hcm-", env!("CARGO_PKG_VERSION"));
