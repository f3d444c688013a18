//! Desk-scale laboratory for the second moment method on random graph
//! colouring: the overlap objective and its optimisation over the Birkhoff
//! polytope, threshold formulas, planted sampling, cores and clusters, and
//! exact or Monte Carlo moments.

pub mod cli;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod moments;
pub mod peel;
pub mod rng;
pub mod thresholds;
pub mod variational;

pub use error::{Error, Result};
