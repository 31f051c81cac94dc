//! Partially penalized immersed finite element solver for 2D elliptic interface
//! problems, with immersed polynomial-preserving gradient recovery.

pub mod assembly;
pub mod benchmarks;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod ife;
pub mod mesh;
pub mod metrics;
pub mod quadrature;
pub mod recovery;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
