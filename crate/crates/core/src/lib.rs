//! Sparse oblivious subspace embeddings, leverage-score sparsified sketches,
//! fast embedding pipelines and sketch-preconditioned least squares, with
//! the statistical checks used to validate them.

pub mod calibration;
pub mod config;
pub mod error;
pub mod leverage;
pub mod linalg;
pub mod pipeline;
pub mod randbits;
pub mod regression;
pub mod sketch;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
