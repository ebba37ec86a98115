//! Local t-statistic scans over rectangular neighborhoods.

pub mod cells;
pub mod data;
pub mod error;
pub mod fit;
pub mod grid;
pub mod linalg;
pub mod permutation;
pub mod pipeline;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod scan;
pub mod select;
pub mod simulation;
pub mod smooth;

pub use error::{Error, Result};
