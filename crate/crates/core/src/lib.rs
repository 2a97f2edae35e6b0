//! Coupling-aware recommendation.
//!
//! - [`coupling`]: coupled similarity of categorical objects.
//! - [`kmodes`]: K-modes clustering with coupled or simple-matching similarity.
//! - [`cf`]: cluster-scoped coupled CF and neighborhood baselines.
//! - [`mf`]: matrix factorization with user-user and item-item couplings.
//! - [`eval`]: metrics, cross-validation, synthetic data and benchmarking.
//! - [`ingest`]: CSV input and output.
//! - [`cli`]: the `coupled-rec` command line.

pub mod cf;
pub mod cli;
pub mod coupling;
pub mod data;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod kmodes;
pub mod mf;
pub mod recommender;

pub use error::{Error, Result};
