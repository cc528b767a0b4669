//! Numerical laboratory for weighted m-subharmonic envelopes.

pub mod barrier;
pub mod comparison;
pub mod cone;
pub mod envelope;
pub mod error;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod weights;

pub use error::{Error, Result};
